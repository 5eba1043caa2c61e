"""Radius-schedule estimation of densities at infinity with extrapolation.

Each density is a limit of a geometric quantity over the ball of radius R,
normalized by a power of R: curvature densities kappa_i (Lipschitz-Killing
integrands averaged over the unit normal sphere), symmetric principal
curvature densities sigma_i, the volume density theta (ball-normalized, see
below), and the Lipschitz-Killing invariants Lambda_k.  Values are computed
per radius with the level-geometry meshes and extrapolated by a power-law fit
on the last entries.

Normalization notes.  theta is vol({f <= 0} inside B_R) / (b_n R^n), the
unit-ball-normalized density, so that the hypersurface Gauss-Bonnet identity
theta = chi_1-at-infinity holds (outputs carry theta-normalization=ball).
kappa_i divides the Lipschitz-Killing integrand K_i by the volume of the unit
normal sphere (for codimension one, K_i/2 = sigma_i), making kappa_0 of a
line equal its asymptotic chord-length density 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .familyspec import FamilySpec, RadiusSchedule
from .levelgeom import (
    LevelMesh,
    MeshError,
    _sigma_batch,
    boundary_lambda,
    integrate_over_level,
    manifold_lambda,
    mesh_surface,
    sublevel_volume,
    trace_curve,
)
from .polynomial import Polynomial
from .topology import LevelSet
from .util import ball_volume, sphere_volume


def geometric_constants(l: int) -> Tuple[float, float]:
    """(s_l, b_l): the l-volume of the unit sphere and the volume of the unit ball."""
    if not 0 <= l <= 16:
        raise ValueError("supported range is 0 <= l <= 16")
    return sphere_volume(l), ball_volume(l)


@dataclass
class DensityEstimate:
    target: str
    radii: Tuple[float, ...]
    raw: Tuple[Optional[float], ...]
    normalized: Tuple[Optional[float], ...]
    limit: Optional[float]
    error: Optional[float]
    status: str                 # "ok" | "non-convergent" | "failed"
    rule: str                   # "constant" | "power-law" | "last-value" | "none"
    flags: Dict[str, str] = field(default_factory=dict)


def extrapolate(values: Sequence[float], radii: Sequence[float]):
    """Limit estimate from per-radius normalized values.

    Fits v(R) = L + a R^(-alpha) through the decay ratios of successive
    differences over the last four points when the tail is monotone;
    otherwise returns the last value.  The reported error is the difference
    of the last two values (a diagnostic, not a rigorous bound).  Oscillation
    without decay is flagged non-convergent.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size < 3:
        raise ValueError("need at least 3 entries to extrapolate")
    scale = max(float(np.max(np.abs(v))), 1e-300)
    err = abs(float(v[-1] - v[-2]))
    d = np.diff(v[-4:] if v.size >= 4 else v)
    if np.max(np.abs(d)) < 1e-9 * scale:
        return float(v[-1]), 0.0, "ok", "constant"
    signs = np.sign(d[np.abs(d) > 1e-12 * scale])
    monotone = signs.size == 0 or np.all(signs == signs[0])
    if monotone and d.size >= 2:
        ratios = d[1:] / d[:-1]
        good = ratios[(ratios > 0.01) & (ratios < 0.99)]
        if good.size:
            rho = float(np.exp(np.mean(np.log(good))))
            limit = float(v[-1] + d[-1] * rho / (1.0 - rho))
            return limit, err, "ok", "power-law"
        return float(v[-1]), err, "ok", "last-value"
    if monotone:
        return float(v[-1]), err, "ok", "last-value"
    # oscillation: convergent if the swings die out
    if abs(d[-1]) < 0.25 * abs(d[0]):
        return float(v[-1]), err, "ok", "last-value"
    return float(v[-1]), err, "non-convergent", "none"


class FiberGeometry:
    """Meshes of one level set at every schedule radius, built lazily and cached."""

    def __init__(self, level_set: LevelSet, schedule: RadiusSchedule,
                 resolution: int = 48, trace_step: float = 0.01):
        if level_set.ambient not in (2, 3):
            raise ValueError("density pipelines support ambient dimension 2 or 3")
        self.level_set = level_set
        self.schedule = schedule
        self.resolution = resolution
        self.trace_step = trace_step
        self._meshes: Dict[float, LevelMesh] = {}

    @property
    def fiber_poly(self) -> Polynomial:
        return self.level_set.poly

    def mesh(self, R: float) -> LevelMesh:
        got = self._meshes.get(R)
        if got is None:
            if self.level_set.ambient == 2:
                got = trace_curve(self.fiber_poly, R, step=self.trace_step)
            else:
                got = mesh_surface(self.fiber_poly, R, resolution=self.resolution)
            self._meshes[R] = got
        return got


def _finish(target, radii, raws, normalized, flags=None) -> DensityEstimate:
    flags = flags or {}
    finite = [x for x in normalized if x is not None]
    if len(finite) < 3:
        return DensityEstimate(target=target, radii=tuple(radii), raw=tuple(raws),
                               normalized=tuple(normalized), limit=None, error=None,
                               status="failed", rule="none", flags=flags)
    limit, err, status, rule = extrapolate(finite, [r for r, x in zip(radii, normalized)
                                                    if x is not None])
    return DensityEstimate(target=target, radii=tuple(radii), raw=tuple(raws),
                           normalized=tuple(normalized), limit=limit, error=err,
                           status=status, rule=rule, flags=flags)


def _per_radius(geometry: FiberGeometry, integrand_index: Optional[int],
                normalizer, target: str, doubled: bool = False,
                flags=None) -> DensityEstimate:
    radii = geometry.schedule.radii
    raws: List[Optional[float]] = []
    normalized: List[Optional[float]] = []
    for R in radii:
        try:
            mesh = geometry.mesh(R)
            if mesh.is_empty:
                raw = 0.0
            elif integrand_index is None:
                raw = mesh.total_measure
            else:
                sig = _sigma_batch(mesh, integrand_index)
                raw = integrate_over_level(mesh, sig)
                if doubled:
                    raw *= 2.0
        except MeshError:
            raws.append(None)
            normalized.append(None)
            continue
        raws.append(raw)
        normalized.append(raw / normalizer(R))
    return _finish(target, radii, raws, normalized, flags)


def kappa_density(spec_or_set, y=None, i: int = 0,
                  schedule: Optional[RadiusSchedule] = None,
                  resolution: int = 48,
                  geometry: Optional[FiberGeometry] = None) -> DensityEstimate:
    """Curvature density at infinity kappa_i of one fiber.

    Integrates the normal-sphere mean of the i-th Lipschitz-Killing integrand
    over the ball-clipped fiber and normalizes by R^(d-i).  Odd i
    short-circuits to exactly 0 without meshing (the odd integrands vanish
    identically on a manifold).
    """
    level_set, schedule = _resolve(spec_or_set, y, schedule, "fiber")
    d = level_set.dim
    if d not in (1, 2):
        raise ValueError("curvature densities support fiber dimension 1 or 2")
    if i < 0 or i > d:
        raise ValueError(f"index i must lie in 0..{d}")
    flags = {"kappa-normalization": "normal-sphere-mean"}
    if i % 2 == 1:
        radii = schedule.radii
        zeros = tuple(0.0 for _ in radii)
        return DensityEstimate(target=f"kappa:{i}", radii=tuple(radii), raw=zeros,
                               normalized=zeros, limit=0.0, error=0.0,
                               status="ok", rule="constant", flags=flags)
    geometry = geometry or FiberGeometry(level_set, schedule, resolution=resolution)
    return _per_radius(geometry, i, lambda R: R ** (d - i), f"kappa:{i}", flags=flags)


def sigma_density(spec_or_set, y=None, i: int = 0,
                  schedule: Optional[RadiusSchedule] = None,
                  resolution: int = 48,
                  geometry: Optional[FiberGeometry] = None) -> DensityEstimate:
    """Symmetric principal curvature density at infinity sigma_i of a hypersurface fiber.

    Integrates sigma_i under the inward-normal orientation (-grad f) and
    normalizes by R^(n-1-i).
    """
    level_set, schedule = _resolve(spec_or_set, y, schedule, "fiber")
    n = level_set.ambient
    if not 0 <= i <= n - 1:
        raise ValueError(f"index i must lie in 0..{n - 1}")
    geometry = geometry or FiberGeometry(level_set, schedule, resolution=resolution)
    return _per_radius(geometry, i, lambda R: R ** (n - 1 - i), f"sigma:{i}")


def theta_density(spec_or_set, y=None, schedule: Optional[RadiusSchedule] = None,
                  samples: int = 200000, seed: int = 0) -> DensityEstimate:
    """Volume density at infinity of the sub-level {f <= 0}: vol / (b_n R^n).

    Ball-normalized so that the identity with the line-section average chi_1
    holds; outputs carry the flag theta-normalization=ball.
    """
    level_set, schedule = _resolve(spec_or_set, y, schedule, "sublevel")
    n = level_set.ambient
    bn = ball_volume(n)
    radii = schedule.radii
    raws: List[Optional[float]] = []
    normalized: List[Optional[float]] = []
    for j, R in enumerate(radii):
        vol, _ = sublevel_volume(level_set.poly, R, samples=samples, seed=seed + 17 * j)
        raws.append(vol)
        normalized.append(vol / (bn * R ** n))
    return _finish("theta", radii, raws, normalized,
                   {"theta-normalization": "ball"})


def lambda_infinity(spec_or_set, y=None, k: int = 0, which: str = "fiber",
                    schedule: Optional[RadiusSchedule] = None,
                    resolution: int = 48, samples: int = 200000, seed: int = 0,
                    geometry: Optional[FiberGeometry] = None) -> DensityEstimate:
    """Lipschitz-Killing invariant at infinity Lambda_k of a fiber or sub-level.

    Fibers use the manifold measures (doubled even curvature integrands);
    sub-levels use the boundary measures at the inward normal for k < n and
    the Hausdorff volume for k = n.  Normalization is b_k R^k for k >= 1 and
    the plain limit for k = 0.
    """
    level_set, schedule = _resolve(spec_or_set, y, schedule, which)
    n = level_set.ambient
    radii = schedule.radii
    flags = {}

    def normalizer(R):
        return ball_volume(k) * R ** k if k >= 1 else 1.0

    if level_set.kind == "fiber":
        d = n - 1
        if not 0 <= k <= d:
            zeros = tuple(0.0 for _ in radii)
            return DensityEstimate(target=f"lambda:{k}", radii=tuple(radii), raw=zeros,
                                   normalized=zeros, limit=0.0, error=0.0,
                                   status="ok", rule="constant", flags=flags)
        geometry = geometry or FiberGeometry(level_set, schedule, resolution=resolution)
        raws: List[Optional[float]] = []
        normalized: List[Optional[float]] = []
        for R in radii:
            try:
                mesh = geometry.mesh(R)
                raw = manifold_lambda(mesh, k)
            except MeshError:
                raws.append(None)
                normalized.append(None)
                continue
            raws.append(raw)
            normalized.append(raw / normalizer(R))
        return _finish(f"lambda:{k}", radii, raws, normalized, flags)

    # sub-level body
    if not 0 <= k <= n:
        raise ValueError(f"k must lie in 0..{n}")
    raws = []
    normalized = []
    boundary = LevelSet(level_set.poly, "fiber")
    geometry = geometry or FiberGeometry(boundary, schedule, resolution=resolution)
    for j, R in enumerate(radii):
        try:
            if k == n:
                raw, _ = sublevel_volume(level_set.poly, R, samples=samples,
                                         seed=seed + 23 * j)
            else:
                mesh = geometry.mesh(R)
                raw = boundary_lambda(mesh, k)
        except MeshError:
            raws.append(None)
            normalized.append(None)
            continue
        raws.append(raw)
        normalized.append(raw / normalizer(R))
    return _finish(f"lambda:{k}", radii, raws, normalized, flags)


def _resolve(spec_or_set, y, schedule, which) -> Tuple[LevelSet, RadiusSchedule]:
    if isinstance(spec_or_set, LevelSet):
        level_set = spec_or_set
        if level_set.kind != which:
            level_set = LevelSet(level_set.poly, which)
        schedule = schedule or RadiusSchedule()
        return level_set, schedule
    if isinstance(spec_or_set, FamilySpec):
        if y is None:
            raise ValueError("a parameter value y is required with a family spec")
        schedule = schedule or spec_or_set.schedule
        return LevelSet.from_spec(spec_or_set, y, which), schedule
    raise TypeError("expected a FamilySpec or a LevelSet")
