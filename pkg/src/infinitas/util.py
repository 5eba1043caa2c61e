"""Shared numeric helpers: seeded substreams and unit-sphere utilities.

All stochastic work in the package draws from substreams derived from a single
64-bit seed plus an integer key path (node index, plane index, start index...).
Substreams are independent of execution order and thread count, which is what
makes parallel and serial runs produce identical output bytes.
"""

from __future__ import annotations

import math
from typing import Iterable, Tuple

import numpy as np


def _gamma_half(twice: int) -> float:
    """Gamma(twice / 2) in closed form for positive integer ``twice``."""
    if twice <= 0:
        raise ValueError("argument must be positive")
    if twice % 2 == 0:
        return float(math.factorial(twice // 2 - 1))
    m = (twice - 1) // 2
    return math.factorial(2 * m) / (4 ** m * math.factorial(m)) * math.sqrt(math.pi)


def sphere_volume(l: int) -> float:
    """l-volume s_l of the unit sphere S^l in R^(l+1): s_0 = 2, s_1 = 2 pi, ..."""
    if l < 0:
        raise ValueError("sphere dimension must be non-negative")
    return 2.0 * math.pi ** ((l + 1) / 2.0) / _gamma_half(l + 1)


def ball_volume(l: int) -> float:
    """Volume b_l of the unit ball B^l in R^l: b_0 = 1, b_1 = 2, b_2 = pi, ..."""
    if l < 0:
        raise ValueError("ball dimension must be non-negative")
    return math.pi ** (l / 2.0) / _gamma_half(l + 2)


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Deterministic substream for (seed, key path); stable across platforms."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2 ** 64 - 1),
                                spawn_key=tuple(int(k) & (2 ** 63 - 1) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def unit_rows(v: np.ndarray, eps: float = 0.0) -> np.ndarray:
    """Normalize the rows of v; rows with norm <= eps are left untouched."""
    v = np.asarray(v, dtype=np.float64)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    safe = np.where(norms > eps, norms, 1.0)
    return v / safe

def random_unit_vectors(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """(count, dim) array of unit vectors drawn from the rotation-invariant law."""
    g = rng.standard_normal((count, dim))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    # a standard normal vector is never numerically zero at these counts
    return g / norms


def orthonormalize(columns: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the column span (QR with sign-fixed diagonal)."""
    q, r = np.linalg.qr(np.asarray(columns, dtype=np.float64))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def orthogonal_complement(columns: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of the column span."""
    A = np.asarray(columns, dtype=np.float64)
    m = A.shape[0]
    if A.size == 0:
        return np.eye(m)
    u, sv, _ = np.linalg.svd(A, full_matrices=True)
    rank = int(np.sum(sv > 1e-12 * (sv[0] if sv.size else 1.0)))
    return u[:, rank:]


def geometric_radii(r0: float, factor: float, steps: int) -> Tuple[float, ...]:
    return tuple(r0 * factor ** j for j in range(steps))
