"""Agent communication graph: adjacency, spectral connectivity, consensus
averaging, clustering, and spanning trees.

All functions are pure and operate on dense numpy arrays; agent counts stay
small (N <= 64), so dense symmetric linear algebra is the right regime.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .seeding import seed_parts


def adjacency(positions: np.ndarray, radius: float) -> np.ndarray:
    """0/1 adjacency: agents i != j are linked iff ||p_i - p_j|| <= radius
    (boundary inclusive)."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    pts = np.atleast_2d(np.asarray(positions, dtype=float))
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    a = (dist <= radius).astype(float)
    np.fill_diagonal(a, 0.0)
    return a


def validate_adjacency(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency must be square")
    if not np.array_equal(a, a.T):
        raise ValueError("adjacency must be symmetric")
    if np.any(np.diag(a) != 0):
        raise ValueError("adjacency diagonal must be zero")
    return a


def laplacian(a: np.ndarray) -> np.ndarray:
    """Graph Laplacian L = D - A (symmetric PSD, zero row sums)."""
    a = validate_adjacency(a)
    return np.diag(a.sum(axis=1)) - a


def _jacobi_eigenvalues(mat: np.ndarray, tol: float = 1e-12,
                        max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations."""
    a = np.array(mat, dtype=float)
    n = a.shape[0]
    if n == 1:
        return a.diagonal().copy()
    scale = max(np.abs(a).max(), 1.0)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-30 * scale:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                sign = 1.0 if theta >= 0 else -1.0
                t = sign / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
    return np.sort(a.diagonal())


def lambda2(lap: np.ndarray) -> float:
    """Second-smallest Laplacian eigenvalue (Fiedler value); positive iff the
    graph is connected."""
    lap = np.asarray(lap, dtype=float)
    if lap.ndim != 2 or lap.shape[0] != lap.shape[1]:
        raise ValueError("Laplacian must be square")
    if not np.allclose(lap, lap.T, atol=1e-12):
        raise ValueError("Laplacian must be symmetric")
    n = lap.shape[0]
    if n < 2:
        return np.inf if n == 1 else 0.0
    eigs = _jacobi_eigenvalues(lap)
    return float(eigs[1])


def lambda2_of_positions(positions: np.ndarray, radius: float) -> float:
    return lambda2(laplacian(adjacency(positions, radius)))


def is_connected_bfs(a: np.ndarray) -> bool:
    """Reachability of every node from node 0 (independent connectivity oracle)."""
    a = validate_adjacency(a)
    n = a.shape[0]
    if n == 0:
        return True
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    frontier = [0]
    while frontier:
        nxt = []
        for i in frontier:
            for j in np.nonzero(a[i] > 0)[0]:
                if not seen[j]:
                    seen[j] = True
                    nxt.append(int(j))
        frontier = nxt
    return bool(seen.all())


def consensus_average(values: np.ndarray, a: np.ndarray,
                      step_size: Optional[float] = None,
                      iterations: int = 200) -> tuple[np.ndarray, bool]:
    """Distributed averaging x <- x - eps * L x.

    Returns (estimates, connected). The mean of the estimates is preserved at
    every iteration; on a connected graph all estimates converge to it. When
    the graph is disconnected the flag is False and estimates converge per
    component.
    """
    a = validate_adjacency(a)
    x = np.asarray(values, dtype=float).copy()
    lap = laplacian(a)
    max_degree = a.sum(axis=1).max(initial=0.0)
    if step_size is None:
        step_size = 0.9 / (max_degree + 1.0)
    elif max_degree > 0 and step_size >= 1.0 / max_degree:
        raise ValueError("step size must be below 1/max_degree")
    for _ in range(iterations):
        x = x - step_size * (lap @ x)
    return x, is_connected_bfs(a)


@dataclass
class ClusterAssignment:
    """K-way partition of the agent set with per-cluster centroids."""

    labels: np.ndarray   # (N,) ints in [0, K)
    centroids: np.ndarray  # (K, 2)

    @property
    def k(self) -> int:
        return len(self.centroids)

    def members(self, cluster: int) -> np.ndarray:
        return np.nonzero(self.labels == cluster)[0]


def _assign_labels(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=-1)
    # argmin breaks ties toward the lowest cluster index.
    return d2.argmin(axis=1)


def wcss(points: np.ndarray, assignment: ClusterAssignment) -> float:
    d = points - assignment.centroids[assignment.labels]
    return float((d ** 2).sum())


def kmeans(positions: np.ndarray, k: int, seed: int,
           max_iterations: int = 100) -> ClusterAssignment:
    """Lloyd iterations from deterministic farthest-point seeding.

    The first centroid is drawn from the seeded RNG; each further centroid is
    the point farthest from the chosen set (lowest index on ties). Empty
    clusters are re-seeded at the overall farthest point. Stops when labels
    stabilize or after ``max_iterations``.
    """
    pts = np.atleast_2d(np.asarray(positions, dtype=float))
    n = len(pts)
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= {n}, got k={k}")
    rng = np.random.default_rng(seed_parts(seed))
    centers = [int(rng.integers(n))]
    while len(centers) < k:
        d2 = ((pts[:, None, :] - pts[centers][None, :, :]) ** 2).sum(axis=-1).min(axis=1)
        centers.append(int(d2.argmax()))
    centroids = pts[centers].copy()

    labels = _assign_labels(pts, centroids)
    for _ in range(max_iterations):
        for c in range(k):
            mask = labels == c
            if mask.any():
                centroids[c] = pts[mask].mean(axis=0)
            else:
                d2 = ((pts - centroids[labels]) ** 2).sum(axis=1)
                far = int(d2.argmax())
                centroids[c] = pts[far]
                labels[far] = c
        new_labels = _assign_labels(pts, centroids)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return ClusterAssignment(labels=labels, centroids=centroids)


def spanning_tree(a: np.ndarray) -> list[tuple[int, int]]:
    """BFS spanning tree from node 0: N-1 edges, deterministic order.

    Raises on disconnected input.
    """
    a = validate_adjacency(a)
    n = a.shape[0]
    if n == 0:
        return []
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    edges: list[tuple[int, int]] = []
    frontier = [0]
    while frontier:
        nxt = []
        for i in frontier:
            for j in np.nonzero(a[i] > 0)[0]:
                j = int(j)
                if not seen[j]:
                    seen[j] = True
                    edges.append((i, j))
                    nxt.append(j)
        frontier = nxt
    if not seen.all():
        raise ValueError("spanning_tree requires a connected graph")
    return edges


def edges_to_adjacency(edges, n: int) -> np.ndarray:
    a = np.zeros((n, n))
    for i, j in edges:
        a[i, j] = a[j, i] = 1.0
    return a
