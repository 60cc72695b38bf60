"""Named RNG streams derived from a master seed.

Each module draws from its own stream (worldgen, kmeans, random-planner, ...)
so ablations can change one stream without perturbing the others. String
parts are hashed stably, so stream names participate in the seed.
"""

from __future__ import annotations

import hashlib

import numpy as np


def seed_parts(*parts) -> list[int]:
    out = []
    for part in parts:
        if isinstance(part, (int, np.integer)):
            out.append(int(part) & 0xFFFFFFFFFFFFFFFF)
        elif isinstance(part, str):
            digest = hashlib.sha256(part.encode()).digest()
            out.append(int.from_bytes(digest[:8], "little"))
        elif isinstance(part, (tuple, list)):
            out.extend(seed_parts(*part))
        elif part is None:
            out.append(0)
        else:
            raise TypeError(f"unsupported seed part: {part!r}")
    return out


def stream_rng(*parts) -> np.random.Generator:
    return np.random.default_rng(seed_parts(*parts))
