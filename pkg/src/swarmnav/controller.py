"""Distributed low-level policy: per-agent QP safety filter.

Each agent tracks its active goal with a clamped proportional controller and
filters that command through a small quadratic program whose half-plane
constraints come from three barrier families:

  safety-agent    h = ||p_i - p_j||^2 - (2r)^2   (keep agents apart)
  safety-obstacle h = ||y||^2 - r^2              (keep clear of LiDAR hits)
  connectivity    h = Rc^2 - ||p_i - p_j||^2     (keep desired edges short)

Enforcing dh/dt >= -alpha * h per family yields one linear constraint
``a . u >= b`` on this agent's control. The decision variable is 2D, so the
QP is solved exactly by enumerating vertices and edge projections of the
feasible polygon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .world import LidarScan

GOLDEN_ANGLE = 2.399963229728653


class QpDegenerateError(RuntimeError):
    """QP could not be solved even after perturbation; carries the constraint dump."""

    def __init__(self, message: str, constraints=None):
        super().__init__(message)
        self.constraints = constraints


@dataclass
class BarrierSpec:
    """Barrier-function parameters shared by all constraint families.

    ``alpha_gain`` is the slope of the linear class-K function alpha(h);
    ``gamma`` is this agent's share of responsibility on pairwise agent
    constraints (the partner enforces the rest). ``kappa`` is an additive
    discrete-time margin on every constraint offset. ``connectivity_radius``
    defaults to the sensing radius R; setting it lower keeps desired edges
    taut with headroom against Euler overshoot.
    """

    alpha_gain: float = 1.0
    gamma: float = 0.5
    r: float = 0.05
    R: float = 0.5
    u_max: float = 1.0
    nominal_gain: float = 1.0
    kappa: float = 0.0
    connectivity_radius: Optional[float] = None
    # Connectivity uses its own class-K slope: it must stay large enough that
    # formation-keeping does not throttle group translation below the
    # deadlock speed threshold, while the safety slope stays within the
    # discrete-time contraction bound dt * alpha <= 1.
    alpha_connectivity: Optional[float] = None
    # Pairwise responsibility can be made asymmetric (a dragging leader takes
    # the larger share so the kappa term herds followers out of its way);
    # each pair's shares should sum to 1. Connectivity keeps its own share so
    # role asymmetry never loosens edge keeping.
    gamma_connectivity: Optional[float] = None
    obstacle_top_k: int = 8
    slack_weight: float = 100.0
    # Relative relaxation rates under the shared slack variable: safety
    # constraints soften 10x slower than connectivity ones.
    safety_slack_scale: float = 0.1
    connectivity_slack_scale: float = 1.0

    def __post_init__(self):
        if self.alpha_gain <= 0:
            raise ValueError("alpha_gain must be positive")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")

    @property
    def conn_radius(self) -> float:
        return self.R if self.connectivity_radius is None else self.connectivity_radius

    @property
    def conn_alpha(self) -> float:
        return self.alpha_gain if self.alpha_connectivity is None else self.alpha_connectivity

    @property
    def conn_gamma(self) -> float:
        return self.gamma if self.gamma_connectivity is None else self.gamma_connectivity


@dataclass
class CbfConstraint:
    """One half-plane ``a . u >= b`` on a single agent's control."""

    a: np.ndarray
    b: float
    tag: str  # "safety-agent" | "safety-obstacle" | "connectivity"
    source: int
    violation: bool = False

    def slack_scale(self, spec: BarrierSpec) -> float:
        if self.tag == "connectivity":
            return spec.connectivity_slack_scale
        return spec.safety_slack_scale


def nominal_control(position, goal, gain: float, u_max: float) -> np.ndarray:
    """Proportional goal tracking, clamped per axis to the control box."""
    if gain <= 0:
        raise ValueError("gain must be positive")
    u = -gain * (np.asarray(position, dtype=float) - np.asarray(goal, dtype=float))
    return np.clip(u, -u_max, u_max)


def pairwise_safety_constraint(p_i, p_j, spec: BarrierSpec,
                               source: int) -> CbfConstraint:
    """Half of the mutual keep-apart condition for an agent pair."""
    diff = np.asarray(p_i, dtype=float) - np.asarray(p_j, dtype=float)
    d2 = float(diff @ diff)
    h = d2 - (2.0 * spec.r) ** 2
    if d2 <= 1e-18:
        # Coincident agents: pick a deterministic separating direction.
        theta = (source * GOLDEN_ANGLE) % (2.0 * math.pi)
        diff = np.array([math.cos(theta), math.sin(theta)]) * 1e-9
    a = 2.0 * diff
    b = -spec.gamma * spec.alpha_gain * h + spec.kappa
    return CbfConstraint(a=a, b=b, tag="safety-agent", source=source,
                         violation=h < 0.0)


def obstacle_constraint(hit_relative, spec: BarrierSpec,
                        source: int) -> CbfConstraint:
    """Keep-clear condition against one LiDAR hit point (static obstacle,
    full responsibility on this agent)."""
    y = np.asarray(hit_relative, dtype=float)
    h = float(y @ y) - spec.r ** 2
    a = -2.0 * y
    b = -spec.alpha_gain * h + spec.kappa
    return CbfConstraint(a=a, b=b, tag="safety-obstacle", source=source,
                         violation=h <= 0.0)


def connectivity_constraint(p_i, p_j, spec: BarrierSpec,
                            source: int) -> CbfConstraint:
    """Keep a desired edge within the connectivity radius; if the edge is
    already past it, the constraint drives re-connection."""
    diff = np.asarray(p_i, dtype=float) - np.asarray(p_j, dtype=float)
    rc = spec.conn_radius
    h = rc ** 2 - float(diff @ diff)
    a = -2.0 * diff
    b = -spec.conn_gamma * spec.conn_alpha * h + spec.kappa
    return CbfConstraint(a=a, b=b, tag="connectivity", source=source,
                         violation=h < 0.0)


@dataclass
class QpResult:
    u: np.ndarray
    status: str  # "feasible" | "slack"
    slack: float
    objective: float
    n_constraints: int
    n_active: int


def _box_rows(u_max: float) -> tuple[np.ndarray, np.ndarray]:
    a = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    b = np.full(4, -u_max)
    return a, b


def _enumerate_qp(u_nom: np.ndarray, a_mat: np.ndarray, b_vec: np.ndarray,
                  feas_tol: float = 1e-9):
    """Exact min ||u - u_nom||^2 s.t. A u >= b by active-set enumeration.

    Candidates are the unconstrained optimum, its projection onto each
    constraint line, and every pair-intersection vertex. Returns (u, obj) or
    None when the polygon is empty.
    """
    n = len(b_vec)
    if n == 0:
        return u_nom.copy(), 0.0
    resid = a_mat @ u_nom - b_vec
    if np.all(resid >= -feas_tol):
        return u_nom.copy(), 0.0

    # Constraints that hold everywhere never shape the optimum here: all
    # candidates are compared against the full set below regardless.
    cand = [u_nom]
    norms2 = (a_mat ** 2).sum(axis=1)
    ok = norms2 > 1e-24
    shift = np.zeros(n)
    shift[ok] = (b_vec[ok] - a_mat[ok] @ u_nom) / norms2[ok]
    singles = u_nom[None, :] + shift[:, None] * a_mat
    cand.append(singles[ok])

    if n >= 2:
        ii, jj = np.triu_indices(n, k=1)
        a1, a2 = a_mat[ii], a_mat[jj]
        det = a1[:, 0] * a2[:, 1] - a1[:, 1] * a2[:, 0]
        good = np.abs(det) > 1e-12
        if good.any():
            a1, a2 = a1[good], a2[good]
            b1, b2 = b_vec[ii[good]], b_vec[jj[good]]
            d = det[good]
            vx = (b1 * a2[:, 1] - b2 * a1[:, 1]) / d
            vy = (a1[:, 0] * b2 - a2[:, 0] * b1) / d
            cand.append(np.stack([vx, vy], axis=1))

    pts = np.vstack([np.atleast_2d(c) for c in cand])
    feas = np.all(a_mat @ pts.T >= (b_vec - feas_tol)[:, None], axis=0)
    if not feas.any():
        return None
    pts = pts[feas]
    obj = ((pts - u_nom) ** 2).sum(axis=1)
    best = int(obj.argmin())
    return pts[best], float(obj[best])


def solve_cbf_qp(u_nom, constraints: Sequence[CbfConstraint], u_max: float,
                 slack_weight: float = 100.0,
                 slack_scales: Optional[np.ndarray] = None) -> QpResult:
    """Safety filter QP: min ||u - u_nom||^2 s.t. all constraints and the
    control box.

    When the polygon is empty, re-solves with one shared slack s >= 0 that
    relaxes constraint i to ``a_i . u >= b_i - c_i * s`` (c from the family's
    slack scale) while minimizing ``slack_weight * s^2 + ||u - u_nom||^2``.
    """
    u_nom = np.asarray(u_nom, dtype=float)
    if not np.all(np.isfinite(u_nom)):
        raise ValueError("non-finite nominal control")
    a_soft = np.array([c.a for c in constraints], dtype=float).reshape(-1, 2)
    b_soft = np.array([c.b for c in constraints], dtype=float)
    if not (np.all(np.isfinite(a_soft)) and np.all(np.isfinite(b_soft))):
        raise ValueError("non-finite constraint data")
    box_a, box_b = _box_rows(u_max)
    a_mat = np.vstack([a_soft, box_a])
    b_vec = np.concatenate([b_soft, box_b])

    sol = _enumerate_qp(u_nom, a_mat, b_vec)
    if sol is not None:
        u, obj = sol
        n_active = int(np.sum(np.abs(a_mat @ u - b_vec) <= 1e-7))
        return QpResult(u=u, status="feasible", slack=0.0, objective=obj,
                        n_constraints=len(constraints), n_active=n_active)

    # Infeasible: shared-slack relaxation on the barrier constraints only.
    if slack_scales is None:
        scales = np.array([
            1.0 if c.tag == "connectivity" else 0.1 for c in constraints
        ])
    else:
        scales = np.asarray(slack_scales, dtype=float)
    scales = np.concatenate([scales, np.zeros(4)])

    def solve_at(s: float):
        return _enumerate_qp(u_nom, a_mat, b_vec - scales * s)

    # Find a feasible bracket by doubling, then shrink to the boundary.
    soft = scales > 0
    if not soft.any():
        raise QpDegenerateError("infeasible QP with no softenable constraint",
                                constraints=list(constraints))
    s_hi = max(1e-6, float(
        np.max((b_vec[soft] + u_max * np.abs(a_mat[soft]).sum(axis=1))
               / scales[soft])))
    for _ in range(80):
        if solve_at(s_hi) is not None:
            break
        s_hi *= 2.0
    else:
        raise QpDegenerateError(
            "slack relaxation failed to produce a feasible QP",
            constraints=list(constraints))
    s_lo = 0.0
    for _ in range(60):
        mid = 0.5 * (s_lo + s_hi)
        if solve_at(mid) is None:
            s_lo = mid
        else:
            s_hi = mid
    s_min = s_hi

    def phi(s: float) -> float:
        sol = solve_at(s)
        return slack_weight * s * s + (sol[1] if sol is not None else np.inf)

    # The optimum satisfies w*(s*^2 - s_min^2) <= g(s_min) <= 8 u_max^2,
    # which bounds the ternary-search bracket.
    lo = s_min
    hi = s_min + math.sqrt(8.0 * u_max * u_max / slack_weight) + 1e-9
    for _ in range(90):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if phi(m1) <= phi(m2):
            hi = m2
        else:
            lo = m1
    s_star = max(s_min, 0.5 * (lo + hi))
    sol = solve_at(s_star)
    if sol is None:
        sol = solve_at(s_min)
        s_star = s_min
    if sol is None:
        raise QpDegenerateError("slack QP collapsed", constraints=list(constraints))
    u, obj = sol
    n_active = int(np.sum(np.abs(a_mat @ u - (b_vec - scales * s_star)) <= 1e-7))
    return QpResult(u=u, status="slack", slack=float(s_star),
                    objective=float(slack_weight * s_star ** 2 + obj),
                    n_constraints=len(constraints), n_active=n_active)


def kkt_residual(u: np.ndarray, u_nom: np.ndarray,
                 constraints: Sequence[CbfConstraint], u_max: float,
                 active_tol: float = 1e-7) -> float:
    """Stationarity residual of a returned point: min over nonnegative
    multipliers on the active set of ||2(u - u_nom) - A_act^T lambda||."""
    u = np.asarray(u, dtype=float)
    u_nom = np.asarray(u_nom, dtype=float)
    box_a, box_b = _box_rows(u_max)
    a_mat = np.vstack([np.array([c.a for c in constraints]).reshape(-1, 2), box_a])
    b_vec = np.concatenate([np.array([c.b for c in constraints], dtype=float), box_b])
    grad = 2.0 * (u - u_nom)
    active = np.nonzero(np.abs(a_mat @ u - b_vec) <= active_tol)[0]
    best = float(np.linalg.norm(grad))
    for k in range(1, min(len(active), 3) + 1):
        for subset in combinations(active, k):
            a_sub = a_mat[list(subset)]
            lam, *_ = np.linalg.lstsq(a_sub.T, grad, rcond=None)
            if np.all(lam >= -1e-9):
                best = min(best, float(np.linalg.norm(grad - a_sub.T @ lam)))
    return best


@dataclass
class LocalObservation:
    """Everything one agent is allowed to use for its control decision:
    itself, neighbors within sensing range (plus desired-edge partners, which
    are relayed over the connected graph even when stretched), its LiDAR
    scan, and its active goal."""

    self_id: int
    position: np.ndarray
    active_goal: np.ndarray
    neighbor_ids: np.ndarray
    neighbor_positions: np.ndarray
    desired_edge_ids: np.ndarray
    scan: Optional[LidarScan] = None


def build_constraints(obs: LocalObservation, spec: BarrierSpec) -> list[CbfConstraint]:
    """Assemble the per-step constraint set, one per (tag, source)."""
    constraints: list[CbfConstraint] = []
    desired = set(int(j) for j in obs.desired_edge_ids)
    seen_agents = set()
    for idx in np.argsort(np.asarray(obs.neighbor_ids)):
        j = int(obs.neighbor_ids[idx])
        if j == obs.self_id or j in seen_agents:
            continue
        seen_agents.add(j)
        p_j = obs.neighbor_positions[idx]
        d = float(np.linalg.norm(obs.position - p_j))
        if d <= spec.R:
            constraints.append(
                pairwise_safety_constraint(obs.position, p_j, spec, source=j))
        if j in desired:
            constraints.append(
                connectivity_constraint(obs.position, p_j, spec, source=j))
    if obs.scan is not None:
        dists = obs.scan.distances
        hit_idx = np.nonzero(np.isfinite(dists))[0]
        if len(hit_idx):
            order = hit_idx[np.argsort(dists[hit_idx], kind="stable")]
            for ray in order[: spec.obstacle_top_k]:
                y = obs.scan.directions[ray] * dists[ray]
                constraints.append(obstacle_constraint(y, spec, source=int(ray)))
    return constraints


def agent_policy(obs: LocalObservation, spec: BarrierSpec):
    """Filtered control for one agent plus solver diagnostics."""
    u_nom = nominal_control(obs.position, obs.active_goal,
                            spec.nominal_gain, spec.u_max)
    constraints = build_constraints(obs, spec)
    result = solve_cbf_qp(u_nom, constraints, spec.u_max,
                          slack_weight=spec.slack_weight)
    diagnostics = {
        "n_constraints": result.n_constraints,
        "n_active": result.n_active,
        "status": result.status,
        "slack": result.slack,
        "violations": sum(1 for c in constraints if c.violation),
    }
    return result.u, diagnostics
