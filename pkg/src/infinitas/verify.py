"""Gauss-Bonnet-at-infinity identity checking and the parameter-continuity scanner.

The two sides of every identity are produced by independent pipelines: the
Lambda/sigma/theta side integrates curvature over meshes, the chi side counts
link points and averages plane sections.  A verdict is a pass when the sides
agree within max(0.05, 3 x combined error); any non-stabilized ingredient
makes the identity inconclusive rather than failed.

The scanner computes the full invariant vector on a parameter grid, flags
jumps between adjacent nodes, and cross-references every jump against the
generalized-critical-value estimate: away from those values the paper-level
theory says the invariants vary continuously, so jumps must land in cells
containing the estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .acv import AcvReport, estimate_K
from .density import (
    FiberGeometry,
    kappa_density,
    lambda_infinity,
    sigma_density,
    theta_density,
)
from .familyspec import HYPERSURFACE, MAP_GRAPH, FamilySpec, RadiusSchedule
from .levelgeom import MeshError
from .topology import (
    ChiInftyEstimate,
    LevelSet,
    LinkError,
    StabilizationError,
    chi_l_infty,
    euler_global,
    stable_link,
)
from .util import ball_volume, sphere_volume

ABS_FLOOR = 0.05
ERROR_MULTIPLIER = 3.0
JUMP_FLOOR = 0.1
JUMP_MULTIPLIER = 5.0


@dataclass(frozen=True)
class IdentityResidual:
    identity: str
    left: float
    right: float
    error: float
    verdict: str            # "pass" | "fail" | "inconclusive"
    detail: str = ""

    @staticmethod
    def judge(identity: str, left: Optional[float], right: Optional[float],
              error: float, detail: str = "") -> "IdentityResidual":
        if left is None or right is None or not np.isfinite(error):
            return IdentityResidual(identity, float("nan"), float("nan"),
                                    float("inf"), "inconclusive", detail)
        tol = max(ABS_FLOOR, ERROR_MULTIPLIER * error)
        verdict = "pass" if abs(left - right) <= tol else "fail"
        return IdentityResidual(identity, float(left), float(right), float(error),
                                verdict, detail)


def _lk_matrix(n: int) -> np.ndarray:
    """Upper triangular matrix mapping (chi(X), chi_n, ..., chi_1) to (Lambda_0..Lambda_n)."""
    L = np.eye(n + 1)
    L[0, 1] = -1.0
    for k in range(0, n - 1):
        L[k, k + 2] = -1.0
    return L


@dataclass
class _ChiTable:
    """chi_l estimates for l = 0..n plus the global Euler characteristic."""

    chi: Dict[int, Optional[float]]
    err: Dict[int, float]
    chi_global: Optional[int]
    hint_used: bool


def _chi_table(level_set: LevelSet, schedule: RadiusSchedule, planes: int,
               seed: int, chi_hint: Optional[int], key_base: int = 0) -> _ChiTable:
    n = level_set.ambient
    chi: Dict[int, Optional[float]] = {0: 0.0}
    err: Dict[int, float] = {0: 0.0}
    for l in range(1, n + 1):
        try:
            est = chi_l_infty(level_set, l, planes=planes, seed=seed,
                              schedule=schedule, key_base=key_base + l)
            chi[l] = est.value
            err[l] = est.stderr
        except (LinkError, StabilizationError, MeshError):
            chi[l] = None
            err[l] = float("inf")
    try:
        chi_global, hint_used = euler_global(level_set, schedule.r0 * 2,
                                             hint=chi_hint)
    except MeshError:
        chi_global, hint_used = (chi_hint, True) if chi_hint is not None else (None, False)
    return _ChiTable(chi=chi, err=err, chi_global=chi_global, hint_used=hint_used)


def gb_identity_check(level_set: LevelSet, schedule: Optional[RadiusSchedule] = None,
                      planes: int = 100, seed: int = 0,
                      chi_hint: Optional[int] = None) -> List[IdentityResidual]:
    """Check the Gauss-Bonnet identities relating Lambda_k and the chi_l of a set.

    Lambda_0 = chi(X) - chi_n - chi_{n-1}; Lambda_k = -chi_{n-k-1} + chi_{n-k+1}
    for k = 1..n-2; Lambda_l = chi_{n-l+1} for l = n-1, n; and the assembled
    triangular-matrix form.  Both sides come from independent pipelines.
    """
    schedule = schedule or RadiusSchedule()
    n = level_set.ambient
    if n > 3:
        raise ValueError("identity checks need ambient dimension <= 3")
    table = _chi_table(level_set, schedule, planes, seed, chi_hint)

    lam: Dict[int, Optional[float]] = {}
    lam_err: Dict[int, float] = {}
    for k in range(0, n + 1):
        try:
            est = lambda_infinity(level_set, k=k, which=level_set.kind,
                                  schedule=schedule, seed=seed)
            lam[k] = est.limit if est.status == "ok" else None
            lam_err[k] = est.error if est.error is not None else float("inf")
        except (MeshError, ValueError):
            lam[k] = None
            lam_err[k] = float("inf")

    out: List[IdentityResidual] = []

    def chi_of(l):
        return table.chi.get(l)

    def chi_err(l):
        return table.err.get(l, float("inf"))

    cg = None if table.chi_global is None else float(table.chi_global)
    rhs0 = None
    err0 = float("inf")
    if cg is not None and chi_of(n) is not None and chi_of(n - 1) is not None:
        rhs0 = cg - chi_of(n) - chi_of(n - 1)
        err0 = chi_err(n) + chi_err(n - 1)
    out.append(IdentityResidual.judge("GB-0", lam[0], rhs0,
                                      lam_err[0] + err0 if rhs0 is not None else float("inf"),
                                      detail="hint-used" if table.hint_used else ""))

    for k in range(1, n - 1):
        rhs = None
        e = float("inf")
        if chi_of(n - k - 1) is not None and chi_of(n - k + 1) is not None:
            rhs = -chi_of(n - k - 1) + chi_of(n - k + 1)
            e = chi_err(n - k - 1) + chi_err(n - k + 1)
        out.append(IdentityResidual.judge(f"GB-{k}", lam[k], rhs,
                                          lam_err[k] + e if rhs is not None else float("inf")))

    for l in (n - 1, n):
        rhs = chi_of(n - l + 1)
        e = chi_err(n - l + 1)
        name = f"GB-(n-1)" if l == n - 1 else "GB-n"
        out.append(IdentityResidual.judge(name, lam[l], rhs,
                                          (lam_err[l] + e) if rhs is not None else float("inf")))

    # matrix form: Lambda_* = L . (chi(X), chi_n, ..., chi_1)
    if cg is not None and all(chi_of(l) is not None for l in range(1, n + 1)) \
       and all(lam[k] is not None for k in range(0, n + 1)):
        chi_vec = np.array([cg] + [chi_of(n - j) for j in range(0, n)])
        predicted = _lk_matrix(n) @ chi_vec
        measured = np.array([lam[k] for k in range(0, n + 1)])
        disc = float(np.max(np.abs(predicted - measured)))
        err = sum(chi_err(l) for l in range(1, n + 1)) + sum(
            lam_err[k] for k in range(0, n + 1) if np.isfinite(lam_err[k]))
        out.append(IdentityResidual.judge("matrix-L", disc, 0.0, err))
    else:
        out.append(IdentityResidual.judge("matrix-L", None, None, float("inf")))
    return out


def hypersurface_gb_check(spec: FamilySpec, y, schedule: Optional[RadiusSchedule] = None,
                          planes: int = 100, seed: int = 0,
                          chi_hint: Optional[int] = None,
                          mc_samples: int = 200000) -> List[IdentityResidual]:
    """Check the hypersurface identities tying sigma/theta of {f_y = 0}, {f_y <= 0}.

    theta = chi_1 of the body; (1/s_{n-1}) sigma_{n-1} = chi - chi_n - chi_{n-1};
    (1/(s_i b_{n-i-1})) sigma_i = -chi_i + chi_{i+2} for i <= n-2; and the
    bridge sigma_{n-1-i} = s_{n-1-i} b_i Lambda_i of the body.
    """
    schedule = schedule or (spec.schedule if isinstance(spec, FamilySpec) else RadiusSchedule())
    if isinstance(spec, FamilySpec):
        if spec.kind != HYPERSURFACE and spec.s != 1:
            raise ValueError("hypersurface checks need a hypersurface family or s=1 graph")
        fiber = LevelSet.from_spec(spec, y, "fiber")
    else:
        fiber = spec
    n = fiber.ambient
    body = LevelSet(fiber.poly, "sublevel")
    if chi_hint is None and isinstance(spec, FamilySpec):
        chi_hint = spec.chi_hints.get("sublevel")

    geometry = FiberGeometry(fiber, schedule)
    sigma: Dict[int, Optional[float]] = {}
    sigma_err: Dict[int, float] = {}
    for i in range(0, n):
        est = sigma_density(fiber, i=i, schedule=schedule, geometry=geometry)
        sigma[i] = est.limit if est.status == "ok" else None
        sigma_err[i] = est.error if est.error is not None else float("inf")

    table = _chi_table(body, schedule, planes, seed, chi_hint)
    theta = theta_density(body, schedule=schedule, samples=mc_samples, seed=seed)

    out: List[IdentityResidual] = []

    theta_val = theta.limit if theta.status == "ok" else None
    e = (theta.error or 0.0) + table.err.get(1, float("inf"))
    out.append(IdentityResidual.judge("GB-hyp-n", theta_val, table.chi.get(1), e,
                                      detail="theta-normalization=ball"))

    cg = None if table.chi_global is None else float(table.chi_global)
    lhs = None
    err = float("inf")
    if sigma.get(n - 1) is not None:
        lhs = sigma[n - 1] / sphere_volume(n - 1)
        err = sigma_err[n - 1] / sphere_volume(n - 1)
    rhs = None
    if cg is not None and table.chi.get(n) is not None and table.chi.get(n - 1) is not None:
        rhs = cg - table.chi[n] - table.chi[n - 1]
        err = err + table.err[n] + table.err[n - 1] if lhs is not None else float("inf")
    out.append(IdentityResidual.judge("GB-hyp-(n-1)", lhs, rhs, err,
                                      detail="hint-used" if table.hint_used else ""))

    for i in range(0, n - 1):
        lhs = None
        err = float("inf")
        if sigma.get(i) is not None:
            norm = sphere_volume(i) * ball_volume(n - i - 1)
            lhs = sigma[i] / norm
            err = sigma_err[i] / norm
        rhs = None
        if table.chi.get(i) is not None and table.chi.get(i + 2) is not None:
            rhs = -table.chi[i] + table.chi[i + 2]
            err = (err + table.err.get(i, 0.0) + table.err[i + 2]) if lhs is not None else float("inf")
        out.append(IdentityResidual.judge(f"GB-hyp-{i}", lhs, rhs, err))

    # bridge between the fiber sigma densities and the body Lambda invariants
    for i in range(0, n):
        lam = lambda_infinity(body, k=i, which="sublevel", schedule=schedule,
                              seed=seed, samples=mc_samples)
        lhs = sigma.get(n - 1 - i)
        rhs = None
        err = float("inf")
        if lam.status == "ok" and lam.limit is not None:
            rhs = sphere_volume(n - 1 - i) * ball_volume(i) * lam.limit
            err = (sigma_err.get(n - 1 - i, 0.0)
                   + sphere_volume(n - 1 - i) * ball_volume(i) * (lam.error or 0.0))
        out.append(IdentityResidual.judge("sigma-lambda-bridge", lhs, rhs, err,
                                          detail=f"i={i}"))
    return out


# -- the scanner -------------------------------------------------------------------


@dataclass
class InvariantVector:
    """All invariants of one fiber (and its sub-level body when applicable).

    Missing entries are explicit None, never zeros.
    """

    y: float
    chi_infty: Dict[int, Optional[float]] = field(default_factory=dict)
    chi_err: Dict[int, float] = field(default_factory=dict)
    lambda_infty: Dict[int, Optional[float]] = field(default_factory=dict)
    lambda_err: Dict[int, float] = field(default_factory=dict)
    kappa_infty: Dict[int, Optional[float]] = field(default_factory=dict)
    kappa_err: Dict[int, float] = field(default_factory=dict)
    sigma_infty: Dict[int, Optional[float]] = field(default_factory=dict)
    sigma_err: Dict[int, float] = field(default_factory=dict)
    theta: Optional[float] = None
    theta_err: Optional[float] = None
    component_count: Optional[int] = None
    component_chi: Tuple[int, ...] = ()
    component_anchor: Tuple[Tuple[float, ...], ...] = ()
    status: str = "ok"            # "ok" | "partial" | "near-K"

    def entries(self):
        """Flat (quantity, value, error) view used by jump detection and CSV."""
        for l, v in sorted(self.chi_infty.items()):
            yield f"chi:{l}", v, self.chi_err.get(l, 0.0)
        for k, v in sorted(self.lambda_infty.items()):
            yield f"lambda:{k}", v, self.lambda_err.get(k, 0.0)
        for i, v in sorted(self.kappa_infty.items()):
            yield f"kappa:{i}", v, self.kappa_err.get(i, 0.0)
        for i, v in sorted(self.sigma_infty.items()):
            yield f"sigma:{i}", v, self.sigma_err.get(i, 0.0)
        if self.theta is not None or self.theta_err is not None:
            yield "theta", self.theta, self.theta_err or 0.0
        yield "components", self.component_count, 0.0


@dataclass(frozen=True)
class JumpFlag:
    quantity: str
    y_lo: float
    y_hi: float
    delta: float
    threshold: float
    contained: bool              # the cell intersects the estimated K set


@dataclass
class ScanResult:
    spec: FamilySpec
    grid: Tuple[float, ...]
    nodes: List[InvariantVector]
    jumps: List[JumpFlag]
    acv: AcvReport
    seed: int
    planes: int

    @property
    def uncontained_jumps(self) -> List[JumpFlag]:
        return [j for j in self.jumps if not j.contained]


def invariant_vector(spec: FamilySpec, y: float, schedule: RadiusSchedule,
                     planes: int, seed: int, node_key: int = 0,
                     mc_samples: int = 60000) -> InvariantVector:
    """All invariants of the fiber over y; per-quantity failures are isolated."""
    vec = InvariantVector(y=float(y))
    n = spec.n
    fiber = LevelSet.from_spec(spec, y, "fiber")
    failures = 0

    for l in range(1, n + 1):
        try:
            est = chi_l_infty(fiber, l, planes=planes, seed=seed,
                              schedule=schedule, key_base=node_key * 10 + l)
            vec.chi_infty[l] = est.value
            vec.chi_err[l] = est.stderr
        except (LinkError, StabilizationError, MeshError):
            vec.chi_infty[l] = None
            vec.chi_err[l] = float("inf")
            failures += 1

    geometry = FiberGeometry(fiber, schedule)
    try:
        smallest = geometry.mesh(schedule.r0)
        vec.component_count = smallest.component_count
        chis = []
        anchors = []
        for comp in range(smallest.component_count):
            mask = smallest.component_of_element == comp
            verts = np.unique(smallest.elements[mask])
            closed = smallest.component_closed[comp] if comp < len(smallest.component_closed) else False
            chis.append(0 if closed else 1)
            anchors.append(tuple(np.round(np.mean(smallest.points[verts], axis=0), 6)))
        vec.component_chi = tuple(chis)
        vec.component_anchor = tuple(anchors)
    except MeshError:
        vec.component_count = None
        failures += 1

    d = spec.fiber_dim
    lam_target = "fiber" if spec.kind == MAP_GRAPH else "sublevel"
    lam_top = d if lam_target == "fiber" else n
    for k in range(0, lam_top + 1):
        try:
            est = lambda_infinity(fiber, k=k, which=lam_target, schedule=schedule,
                                  seed=seed, samples=mc_samples,
                                  geometry=geometry if lam_target == "fiber" else None)
            vec.lambda_infty[k] = est.limit if est.status == "ok" else None
            vec.lambda_err[k] = est.error if est.error is not None else float("inf")
        except (MeshError, ValueError):
            vec.lambda_infty[k] = None
            vec.lambda_err[k] = float("inf")
            failures += 1

    for i in range(0, d + 1, 2):
        try:
            est = kappa_density(fiber, i=i, schedule=schedule, geometry=geometry)
            vec.kappa_infty[i] = est.limit if est.status == "ok" else None
            vec.kappa_err[i] = est.error if est.error is not None else float("inf")
        except (MeshError, ValueError):
            vec.kappa_infty[i] = None
            vec.kappa_err[i] = float("inf")
            failures += 1

    if spec.kind == HYPERSURFACE:
        for i in range(0, n):
            try:
                est = sigma_density(fiber, i=i, schedule=schedule, geometry=geometry)
                vec.sigma_infty[i] = est.limit if est.status == "ok" else None
                vec.sigma_err[i] = est.error if est.error is not None else float("inf")
            except (MeshError, ValueError):
                vec.sigma_infty[i] = None
                vec.sigma_err[i] = float("inf")
                failures += 1
        try:
            est = theta_density(fiber, schedule=schedule, samples=mc_samples,
                                seed=seed + node_key)
            vec.theta = est.limit if est.status == "ok" else None
            vec.theta_err = est.error
        except MeshError:
            vec.theta = None
            vec.theta_err = float("inf")
            failures += 1

    if failures:
        vec.status = "partial"
    return vec


def _detect_jumps(grid, nodes: List[InvariantVector], k_values: Sequence[float],
                  cell: float) -> List[JumpFlag]:
    jumps: List[JumpFlag] = []
    quantities = sorted({q for node in nodes for q, _, _ in node.entries()})
    for q in quantities:
        series = []
        for node in nodes:
            val = None
            err = 0.0
            for name, v, e in node.entries():
                if name == q:
                    val, err = v, e
                    break
            series.append((node.y, val, err))
        prev = None
        for y, val, err in series:
            if val is None:
                continue
            if prev is not None:
                y0, v0, e0 = prev
                pooled = np.hypot(e0 if np.isfinite(e0) else 0.0,
                                  err if np.isfinite(err) else 0.0)
                threshold = max(JUMP_FLOOR, JUMP_MULTIPLIER * pooled)
                delta = abs(val - v0)
                if delta > threshold:
                    contained = any(y0 - cell <= kv <= y + cell for kv in k_values)
                    jumps.append(JumpFlag(quantity=q, y_lo=y0, y_hi=y,
                                          delta=float(delta), threshold=float(threshold),
                                          contained=contained))
            prev = (y, val, err)
    return jumps


def continuity_scan(spec: FamilySpec, grid_values: Optional[Sequence[float]] = None,
                    schedule: Optional[RadiusSchedule] = None,
                    planes: Optional[int] = None, seed: Optional[int] = None,
                    starts: int = 64, threads: Optional[int] = None,
                    mc_samples: int = 60000) -> ScanResult:
    """Scan the invariant vector over the parameter grid and flag jumps.

    Every jump between adjacent successful nodes is cross-referenced against
    the generalized-critical-value estimate; nodes within one grid cell of the
    estimate are marked near-K (their values are reported, not asserted).
    """
    if spec.s != 1:
        raise ValueError("the scanner currently supports s = 1")
    if grid_values is None:
        if not spec.grid:
            raise ValueError("no grid in the spec and none supplied")
        grid_values = spec.grid[0].values
    grid = [float(v) for v in grid_values]
    schedule = schedule or spec.schedule
    planes = spec.planes if planes is None else planes
    seed = spec.seed if seed is None else seed

    acv_report = estimate_K(spec, grid, schedule=schedule, seed=seed, starts=starts)
    k_values = acv_report.k_values

    def node_task(args):
        idx, y = args
        return invariant_vector(spec, y, schedule, planes, seed, node_key=idx,
                                mc_samples=mc_samples)

    tasks = list(enumerate(grid))
    if threads is None:
        import os
        threads = int(os.environ.get("INFINITAS_THREADS", "0")) or (os.cpu_count() or 1)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            nodes = list(pool.map(node_task, tasks))
    else:
        nodes = [node_task(t) for t in tasks]

    cell = (grid[1] - grid[0]) if len(grid) > 1 else 0.0
    for node in nodes:
        if any(abs(node.y - kv) <= cell + 1e-12 for kv in k_values):
            node.status = "near-K"
    jumps = _detect_jumps(grid, nodes, k_values, cell)
    return ScanResult(spec=spec, grid=tuple(grid), nodes=nodes, jumps=jumps,
                      acv=acv_report, seed=seed, planes=planes)
