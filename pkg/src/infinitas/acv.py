"""Estimation of generalized critical values: ordinary and asymptotic.

The set of generalized critical values of the parameter projection splits into
ordinary critical values (found here by multistart Newton on the rank
-deficiency equations) and asymptotic critical values, where the Malgrange
functional M(w) = (1 + |w|) nu(D_w phi) decays to zero along points escaping
to infinity inside a fiber band.  The asymptotic side is discretized over a
geometric schedule of sphere radii: for each radius R the infimum of M over
{w on the total space : |phi(w) - c| <= eta, |w| = R} is estimated by seeded
multistart projected minimization, and the resulting profile is classified by
its decay ratio and fitted log-log slope.

All multistart work across grid nodes, radii and starts runs as one batched
vectorized minimization with per-row constraint data; substreams are seeded
per (node, radius), so results do not depend on batch layout or thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .familyspec import MAP_GRAPH, FamilySpec, RadiusSchedule
from .rabier import fiber_rabier
from .util import random_unit_vectors, rng_for

DEFAULT_ETA = 1e-2
DECAY_RATIO_THRESHOLD = 0.1
SLOPE_THRESHOLD = -0.25
DEDUP_RESOLUTION = 1e-6

MR_REGULAR = "MR-regular"
ACV_SUSPECT = "ACV-suspect"
FIBER_BOUNDED = "fiber-bounded"


@dataclass(frozen=True)
class ProfileEntry:
    radius: float
    value: Optional[float]          # inf of M on the sphere-band, None if infeasible
    status: str                     # "ok" | "fiber-bounded"
    witness: Optional[np.ndarray] = None


@dataclass(frozen=True)
class Classification:
    kind: str
    lower_bound: Optional[float] = None
    decay_ratio: Optional[float] = None
    slope: Optional[float] = None


@dataclass(frozen=True)
class CriticalPoint:
    value: Tuple[float, ...]
    witness: Tuple[float, ...]
    residual: float


@dataclass(frozen=True)
class AcvSuspect:
    lo: float
    hi: float
    value: float
    slope: Optional[float]
    witnesses: Tuple[Tuple[float, float], ...]   # (radius, M) with strictly decreasing M


@dataclass
class AcvReport:
    k0: List[CriticalPoint]
    kinf: List[AcvSuspect]
    classifications: List[Tuple[float, Classification]]
    coverage_warning: bool = False
    eta: float = DEFAULT_ETA
    thresholds: Dict[str, float] = field(default_factory=lambda: {
        "decay_ratio": DECAY_RATIO_THRESHOLD, "slope": SLOPE_THRESHOLD})

    @property
    def k_values(self) -> List[float]:
        vals = [cp.value[0] for cp in self.k0] + [s.value for s in self.kinf]
        return sorted(set(round(v, 9) for v in vals))


# -- batched objective/constraint evaluators (s = 1 fast paths) ----------------
#
# Each "problem" holds per-row constraint data: row i carries its own sphere
# radius R[i] and band center c[i], so one batch can mix grid nodes and radii.


class _GraphProblem:
    """Sphere-band minimization rows for a map-graph family with s = 1."""

    kind = MAP_GRAPH

    def __init__(self, spec: FamilySpec, R: np.ndarray, c: np.ndarray, eta: float):
        self.G = spec.polys[0]
        self.n = spec.n
        self.R = np.asarray(R, dtype=np.float64)
        self.c = np.asarray(c, dtype=np.float64)
        self.eta = eta
        self.dim = spec.n

    def lift_norm(self, X):
        g = self.G.evaluate_batch(X)
        return np.sqrt(np.sum(X * X, axis=1) + g * g)

    def objective(self, X):
        grads = self.G.gradient_batch(X)
        H = self.G.hessian_batch(X)
        nu = np.linalg.norm(grads, axis=1)
        nuphi = nu / np.sqrt(1.0 + nu * nu)
        weight = 1.0 + self.lift_norm(X)
        val = weight * nuphi
        safe = np.maximum(nu, 1e-30)
        grad_nu = np.einsum("mij,mj->mi", H, grads) / safe[:, None]
        dnuphi = (1.0 + nu * nu) ** -1.5
        # |w| is pinned to R by the constraints, so only the nu factor moves
        grad = (weight * dnuphi)[:, None] * grad_nu
        return val, grad

    def constraints(self, X):
        g = self.G.evaluate_batch(X)
        grads = self.G.gradient_batch(X)
        sphere = np.sum(X * X, axis=1) + g * g - self.R ** 2
        d_sphere = 2.0 * X + 2.0 * g[:, None] * grads
        clamped = np.clip(g, self.c - self.eta, self.c + self.eta)
        band = g - clamped
        d_band = np.where((band != 0.0)[:, None], grads, 0.0)
        r = np.stack([sphere / self.R, band], axis=1)
        J = np.stack([d_sphere / self.R[:, None], d_band], axis=1)
        return r, J

    def malgrange(self, X):
        grads = self.G.gradient_batch(X)
        nu = np.linalg.norm(grads, axis=1)
        return (1.0 + self.lift_norm(X)) * nu / np.sqrt(1.0 + nu * nu)


class _HypersurfaceProblem:
    """Sphere-band minimization rows for a hypersurface family with s = 1."""

    kind = "hypersurface-family"

    def __init__(self, spec: FamilySpec, R: np.ndarray, c: np.ndarray, eta: float):
        self.F = spec.polys[0]
        self.n = spec.n
        self.R = np.asarray(R, dtype=np.float64)
        self.c = np.asarray(c, dtype=np.float64)
        self.eta = eta
        self.dim = spec.n + 1

    def objective(self, W):
        g = self.F.gradient_batch(W)
        H = self.F.hessian_batch(W)
        a = g[:, : self.n]
        u = np.sum(a * a, axis=1)
        v = np.sum(g * g, axis=1)
        safe_u = np.maximum(u, 1e-60)
        safe_v = np.maximum(v, 1e-60)
        nuphi = np.sqrt(safe_u / safe_v)
        weight = 1.0 + np.linalg.norm(W, axis=1)
        val = weight * nuphi
        a_pad = np.zeros_like(g)
        a_pad[:, : self.n] = a
        grad_u = 2.0 * np.einsum("mij,mj->mi", H, a_pad)
        grad_v = 2.0 * np.einsum("mij,mj->mi", H, g)
        grad_nuphi = (grad_u * safe_v[:, None] - safe_u[:, None] * grad_v) / (
            2.0 * np.sqrt(safe_u)[:, None] * safe_v[:, None] ** 1.5)
        grad = weight[:, None] * grad_nuphi
        return val, grad

    def constraints(self, W):
        fval = self.F.evaluate_batch(W)
        fgrad = self.F.gradient_batch(W)
        sphere = np.sum(W * W, axis=1) - self.R ** 2
        d_sphere = 2.0 * W
        y = W[:, -1]
        clamped = np.clip(y, self.c - self.eta, self.c + self.eta)
        band = y - clamped
        d_band = np.zeros_like(W)
        d_band[:, -1] = np.where(band != 0.0, 1.0, 0.0)
        scale = 1.0 + np.max(np.abs(fgrad), axis=1)
        r = np.stack([fval / scale, sphere / self.R, band], axis=1)
        J = np.stack([fgrad / scale[:, None], d_sphere / self.R[:, None], d_band], axis=1)
        return r, J

    def malgrange(self, W):
        g = self.F.gradient_batch(W)
        a = g[:, : self.n]
        u = np.linalg.norm(a, axis=1)
        v = np.maximum(np.linalg.norm(g, axis=1), 1e-60)
        return (1.0 + np.linalg.norm(W, axis=1)) * (u / v)


def _restore(problem, points, iters=40, damping=1e-9):
    """Damped Gauss-Newton onto the sphere and fiber band (minimal-norm steps)."""
    pts = points.copy()
    bound = (1.25 * problem.R)[:, None]
    cap = (0.25 * problem.R)[:, None]
    for _ in range(iters):
        r, J = problem.constraints(pts)
        r = np.where(np.isfinite(r), r, 0.0)
        J = np.where(np.isfinite(J), J, 0.0)
        JJt = np.einsum("mkd,mld->mkl", J, J)
        k = JJt.shape[1]
        scale = np.maximum(np.einsum("mkk->m", JJt) / k, 1.0)
        JJt = JJt + (damping * scale)[:, None, None] * np.eye(k)[None, :, :]
        lam = np.linalg.solve(JJt, r[:, :, None])[:, :, 0]
        step = np.einsum("mkd,mk->md", J, lam)
        norms = np.linalg.norm(step, axis=1, keepdims=True)
        step = np.where(norms > cap, step * (cap / np.maximum(norms, 1e-30)), step)
        new = pts - step
        new = np.where(np.isfinite(new), new, pts)
        # the feasible set lies inside the sphere of radius R; keep iterates near it
        nrm = np.linalg.norm(new, axis=1, keepdims=True)
        new = np.where(nrm > bound, new * (bound / np.maximum(nrm, 1e-30)), new)
        pts = new
    return pts


def _feasible_mask(problem, points, tol=1e-7):
    r, _ = problem.constraints(points)
    return np.max(np.abs(r), axis=1) <= tol


def _project_tangent(J, grad, damping=1e-10):
    JJt = np.einsum("mkd,mld->mkl", J, J)
    k = JJt.shape[1]
    JJt = JJt + damping * np.eye(k)[None, :, :]
    Jg = np.einsum("mkd,md->mk", J, grad)
    lam = np.linalg.solve(JJt, Jg[:, :, None])[:, :, 0]
    return grad - np.einsum("mkd,mk->md", J, lam)


def _descend(problem, pts, alpha0, iters):
    alpha = alpha0 * problem.R
    vals, _ = problem.objective(pts)
    for _ in range(iters):
        v, g = problem.objective(pts)
        _, J = problem.constraints(pts)
        gp = _project_tangent(J, g)
        gn = np.linalg.norm(gp, axis=1, keepdims=True)
        direction = gp / np.maximum(gn, 1e-30)
        cand = pts - alpha[:, None] * direction
        cand = _restore(problem, cand, iters=4)
        cvals, _ = problem.objective(cand)
        cfeas = _feasible_mask(problem, cand)
        improved = cfeas & (cvals < v - 1e-16)
        pts = np.where(improved[:, None], cand, pts)
        vals = np.where(improved, cvals, v)
        alpha = np.where(improved, np.minimum(alpha * 1.4, 0.1 * problem.R),
                         np.maximum(alpha * 0.35, 1e-12 * problem.R))
    return pts, vals


def _make_problem(spec: FamilySpec, R_row, c_row, eta: float):
    if spec.kind == MAP_GRAPH:
        return _GraphProblem(spec, R_row, c_row, eta)
    return _HypersurfaceProblem(spec, R_row, c_row, eta)


def _start_block(spec: FamilySpec, R: float, c: float, eta: float,
                 starts: int, rng) -> np.ndarray:
    if spec.kind == MAP_GRAPH:
        return 0.95 * R * random_unit_vectors(rng, starts, spec.n)
    W0 = R * random_unit_vectors(rng, starts, spec.n + 1)
    W0[:, -1] = np.clip(W0[:, -1], c - eta, c + eta)
    return W0


def _batched_infima(spec: FamilySpec, centers: Sequence[float],
                    node_keys: Sequence[int], radii: Sequence[float],
                    starts: int, seed: int, eta: float,
                    descent_iters: int = 70):
    """Infimum of M per (center, radius) group; one vectorized run for everything.

    Returns a dict (center_index, radius_index) -> (value | None, witness | None).
    """
    blocks = []
    rows_R: List[float] = []
    rows_c: List[float] = []
    group_of_row: List[int] = []
    groups: List[Tuple[int, int]] = []
    for ci, (c, key) in enumerate(zip(centers, node_keys)):
        for j, R in enumerate(radii):
            rng = rng_for(seed, key, j)
            blocks.append(_start_block(spec, R, c, eta, starts, rng))
            gid = len(groups)
            groups.append((ci, j))
            rows_R.extend([R] * starts)
            rows_c.extend([c] * starts)
            group_of_row.extend([gid] * starts)
    pts = np.vstack(blocks)
    R_row = np.array(rows_R)
    c_row = np.array(rows_c)
    gids = np.array(group_of_row)
    n_groups = len(groups)

    problem = _make_problem(spec, R_row, c_row, eta)
    pts = _restore(problem, pts, iters=50)
    pts, vals = _descend(problem, pts, 0.05, descent_iters)

    # fine-scale polish of the best rows per group: basins can be narrow (~1/R)
    feas = _feasible_mask(problem, pts)
    score = np.where(feas, vals, np.inf)
    order = np.lexsort((score, gids))
    top_rows: List[int] = []
    seen: Dict[int, int] = {}
    for idx in order:
        g = int(gids[idx])
        if seen.get(g, 0) < 4 and np.isfinite(score[idx]):
            seen[g] = seen.get(g, 0) + 1
            top_rows.append(int(idx))
    if top_rows:
        top_rows = np.array(top_rows)
        sub = _make_problem(spec, R_row[top_rows], c_row[top_rows], eta)
        top = pts[top_rows]
        for scale in (1e-3, 1e-6):
            top, _ = _descend(sub, top, scale, 45)
        top = _restore(sub, top, iters=10)
        pts = np.vstack([pts, top])
        R_row = np.concatenate([R_row, R_row[top_rows]])
        c_row = np.concatenate([c_row, c_row[top_rows]])
        gids = np.concatenate([gids, gids[top_rows]])
        problem = _make_problem(spec, R_row, c_row, eta)

    feas = _feasible_mask(problem, pts)
    m_exact = problem.malgrange(pts)
    score = np.where(feas, m_exact, np.inf)

    out = {}
    for g, (ci, j) in enumerate(groups):
        rows = np.nonzero(gids == g)[0]
        sc = score[rows]
        best = int(np.argmin(sc))
        if np.isfinite(sc[best]):
            out[(ci, j)] = (float(sc[best]), pts[rows[best]])
        else:
            out[(ci, j)] = (None, None)
    return out


def _generic_profile_point(spec: FamilySpec, R: float, c: np.ndarray, eta: float,
                           starts: int, rng) -> Tuple[Optional[float], Optional[np.ndarray]]:
    """Slow fallback for s = 2: penalty minimization with simplex search."""
    from scipy import optimize

    def penalty(w):
        if spec.kind == MAP_GRAPH:
            w_full = spec.lift(w)
            res = 0.0
        else:
            w_full = w
            res = spec.defining_residual(w)
        sphere = (np.linalg.norm(w_full) - R) / R
        band = max(0.0, np.linalg.norm(w_full[spec.n:] - c) - eta)
        try:
            nu = fiber_rabier(spec, w_full, tol=np.inf)
        except Exception:
            nu = 1.0
        M = (1.0 + np.linalg.norm(w_full)) * nu
        return M + 1e4 * (sphere ** 2 + band ** 2 + res ** 2)

    dim = spec.n if spec.kind == MAP_GRAPH else spec.ambient
    best_val, best_w = None, None
    for _ in range(starts):
        w0 = 0.9 * R * random_unit_vectors(rng, 1, dim)[0]
        out = optimize.minimize(penalty, w0, method="Nelder-Mead",
                                options={"maxiter": 400, "xatol": 1e-8, "fatol": 1e-10})
        w_full = spec.lift(out.x) if spec.kind == MAP_GRAPH else out.x
        sphere_err = abs(np.linalg.norm(w_full) - R) / R
        band_err = max(0.0, np.linalg.norm(w_full[spec.n:] - c) - eta)
        res_err = spec.defining_residual(w_full)
        if sphere_err < 1e-5 and band_err < 1e-6 and res_err < 1e-6:
            nu = fiber_rabier(spec, w_full, tol=1e-5)
            Mval = (1.0 + np.linalg.norm(w_full)) * nu
            if best_val is None or Mval < best_val:
                best_val, best_w = Mval, out.x
    return best_val, best_w


def infimum_profile(spec: FamilySpec, c, schedule: Optional[RadiusSchedule] = None,
                    starts: int = 64, seed: int = 0, eta: float = DEFAULT_ETA,
                    node_key: int = 0) -> List[ProfileEntry]:
    """Per-radius infima of the Malgrange functional on the fiber band around c.

    For each radius R of the schedule, minimizes M over points of the total
    space with |phi(w) - c| <= eta and |w| = R by seeded multistart projected
    minimization.  Radii whose constraint set is empty (the band has been
    exhausted: compact fiber band) yield the sentinel status "fiber-bounded".
    """
    schedule = schedule or spec.schedule
    cv = np.atleast_1d(np.asarray(c, dtype=np.float64))
    radii = schedule.radii
    entries: List[ProfileEntry] = []
    if spec.s == 1:
        table = _batched_infima(spec, [float(cv[0])], [node_key], radii,
                                starts, seed, eta)
        for j, R in enumerate(radii):
            value, witness = table[(0, j)]
            if value is None:
                entries.append(ProfileEntry(radius=R, value=None, status=FIBER_BOUNDED))
            else:
                entries.append(ProfileEntry(radius=R, value=value, status="ok",
                                            witness=witness))
        return entries
    for j, R in enumerate(radii):
        rng = rng_for(seed, node_key, j)
        value, witness = _generic_profile_point(spec, R, cv, eta, starts, rng)
        if value is None:
            entries.append(ProfileEntry(radius=R, value=None, status=FIBER_BOUNDED))
        else:
            entries.append(ProfileEntry(radius=R, value=value, status="ok", witness=witness))
    return entries


def classify_value(profile: Sequence[ProfileEntry],
                   decay_ratio: float = DECAY_RATIO_THRESHOLD,
                   slope_threshold: float = SLOPE_THRESHOLD) -> Classification:
    """Classify a per-radius infimum profile.

    A profile whose tail leaves the feasible set is fiber-bounded (the fiber
    band is compact, the properness signature).  Otherwise the value is an
    ACV suspect when the profile decays strongly (last value below
    ``decay_ratio`` times the first) with a fitted log-log slope below
    ``slope_threshold``; else it is MR-regular with reported lower bound.
    """
    if not profile:
        raise ValueError("empty profile")
    finite = [e for e in profile if e.value is not None]
    if profile[-1].status == FIBER_BOUNDED and len(finite) < 3:
        return Classification(kind=FIBER_BOUNDED)
    if len(finite) < 3:
        raise ValueError("profile needs at least 3 finite entries")
    values = np.array([e.value for e in finite])
    radii = np.array([e.radius for e in finite])
    tail = min(4, len(finite))
    logs_r = np.log(radii[-tail:])
    logs_v = np.log(np.maximum(values[-tail:], 1e-300))
    slope = float(np.polyfit(logs_r, logs_v, 1)[0])
    ratio = float(values[-1] / max(values[0], 1e-300))
    if ratio < decay_ratio and slope < slope_threshold:
        return Classification(kind=ACV_SUSPECT, decay_ratio=ratio, slope=slope)
    return Classification(kind=MR_REGULAR, lower_bound=float(values.min()),
                          decay_ratio=ratio, slope=slope)


# -- ordinary critical values ----------------------------------------------------


def _newton_square(residual_fn, jac_fn, x0, iters=60, tol=1e-11):
    x = np.asarray(x0, dtype=np.float64).copy()
    for _ in range(iters):
        r = residual_fn(x)
        if np.max(np.abs(r)) < tol:
            return x, float(np.max(np.abs(r)))
        J = jac_fn(x)
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(J, r, rcond=None)
        nrm = np.linalg.norm(step)
        if nrm > 2.0:
            step *= 2.0 / nrm
        x = x - step
        if not np.all(np.isfinite(x)):
            return None, np.inf
    r = residual_fn(x)
    return (x, float(np.max(np.abs(r)))) if np.max(np.abs(r)) < 1e-8 else (None, np.inf)


def critical_values(spec: FamilySpec, box: Sequence[Tuple[float, float]],
                    starts: int = 64, seed: int = 0) -> Tuple[List[CriticalPoint], bool]:
    """Attained critical values inside the box, with witnesses.

    Multistart Newton on the square system expressing rank deficiency of the
    parameter projection; solutions are deduplicated at resolution 1e-6.
    Returns (critical points, coverage_warning); the warning is set when no
    start converged at all.
    """
    if spec.s not in (1, 2):
        raise ValueError("critical value search supports s = 1 or 2")
    box = [(float(a), float(b)) for a, b in box]
    rng = rng_for(seed, 7001)

    found: List[CriticalPoint] = []
    converged_any = False

    if spec.kind == MAP_GRAPH and spec.s == 1:
        if len(box) != spec.n + 1:
            raise ValueError("box must cover (x, y) coordinates")
        G = spec.polys[0]
        grads = G.gradient_polys()

        def residual(x):
            return np.array([g.evaluate(x) for g in grads])

        def jac(x):
            return np.array([[gg.evaluate(x) for gg in g.gradient_polys()] for g in grads])

        for _ in range(starts):
            x0 = np.array([rng.uniform(a, b) for a, b in box[: spec.n]])
            sol, res = _newton_square(residual, jac, x0)
            if sol is None:
                continue
            converged_any = True
            y = float(G.evaluate(sol))
            inside = all(a - 1e-9 <= v <= b + 1e-9 for v, (a, b) in zip(sol, box[: spec.n]))
            if inside and box[-1][0] - 1e-9 <= y <= box[-1][1] + 1e-9:
                found.append(CriticalPoint(value=(y,), witness=tuple(sol), residual=res))
    elif spec.kind != MAP_GRAPH and spec.s == 1:
        if len(box) != spec.n + 1:
            raise ValueError("box must cover (x, y) coordinates")
        F = spec.polys[0]
        x_grads = F.gradient_polys()[: spec.n]

        def residual(w):
            return np.array([F.evaluate(w)] + [g.evaluate(w) for g in x_grads])

        def jac(w):
            rows = [[g.evaluate(w) for g in F.gradient_polys()]]
            for g in x_grads:
                rows.append([gg.evaluate(w) for gg in g.gradient_polys()])
            return np.array(rows)

        for _ in range(starts):
            w0 = np.array([rng.uniform(a, b) for a, b in box])
            sol, res = _newton_square(residual, jac, w0)
            if sol is None:
                continue
            converged_any = True
            inside = all(a - 1e-9 <= v <= b + 1e-9 for v, (a, b) in zip(sol, box))
            if inside:
                found.append(CriticalPoint(value=(float(sol[-1]),),
                                           witness=tuple(sol[: spec.n]), residual=res))
    else:
        # s = 2: the rank-deficiency locus is positive-dimensional; sample it by
        # Gauss-Newton on the overdetermined system and report attained values.
        from scipy import optimize

        def residual(z):
            if spec.kind == MAP_GRAPH:
                x, phi = z[: spec.n], z[spec.n:]
                J = spec.map_jacobian(x)
                return np.concatenate([J.T @ phi, [phi @ phi - 1.0]])
            w = z[: spec.ambient]
            F = spec.polys[0]
            grad = np.array([g.evaluate(w) for g in F.gradient_polys()])
            gx = grad[: spec.n]
            return np.concatenate([[F.evaluate(w)], gx])

        zdim = spec.n + spec.s if spec.kind == MAP_GRAPH else spec.ambient
        for _ in range(starts):
            z0 = rng.standard_normal(zdim)
            out = optimize.least_squares(residual, z0, xtol=1e-14, ftol=1e-14, gtol=1e-14)
            if out.cost < 1e-16:
                converged_any = True
                if spec.kind == MAP_GRAPH:
                    x = out.x[: spec.n]
                    y = tuple(float(v) for v in spec.map_values(x))
                    witness = tuple(float(v) for v in x)
                else:
                    w = out.x[: spec.ambient]
                    y = tuple(float(v) for v in w[spec.n:])
                    witness = tuple(float(v) for v in w[: spec.n])
                found.append(CriticalPoint(value=y, witness=witness,
                                           residual=float(np.sqrt(2 * out.cost))))

    # dedupe on parameter values
    found.sort(key=lambda cp: cp.value)
    dedup: List[CriticalPoint] = []
    for cp in found:
        if dedup and np.max(np.abs(np.array(cp.value) - np.array(dedup[-1].value))) < DEDUP_RESOLUTION:
            if cp.residual < dedup[-1].residual:
                dedup[-1] = cp
            continue
        dedup.append(cp)
    return dedup, not converged_any


# -- the K estimator -----------------------------------------------------------


def estimate_K(spec: FamilySpec, grid_values: Optional[Sequence[float]] = None,
               schedule: Optional[RadiusSchedule] = None, seed: Optional[int] = None,
               starts: int = 64, eta: float = DEFAULT_ETA,
               x_box_halfwidth: float = 10.0) -> AcvReport:
    """Estimate the generalized critical values over a parameter grid (s = 1).

    Runs the ordinary critical-value search over a box spanning the grid range,
    classifies the Malgrange-infimum profile at every grid node, merges runs
    of adjacent ACV suspects into candidate points, and reports the union.
    """
    if spec.s != 1:
        raise ValueError("the grid estimator currently supports s = 1")
    if grid_values is None:
        if not spec.grid:
            raise ValueError("no grid in the spec and none supplied")
        grid_values = spec.grid[0].values
    grid_values = np.asarray(list(grid_values), dtype=np.float64)
    schedule = schedule or spec.schedule
    seed = spec.seed if seed is None else seed

    lo, hi = float(grid_values.min()), float(grid_values.max())
    box = [(-x_box_halfwidth, x_box_halfwidth)] * spec.n + [(lo, hi)]
    k0, coverage_warning = critical_values(spec, box, starts=starts, seed=seed)

    radii = schedule.radii
    table = _batched_infima(spec, [float(y) for y in grid_values],
                            list(range(len(grid_values))), radii, starts, seed, eta)

    classifications: List[Tuple[float, Classification]] = []
    profiles: Dict[int, List[ProfileEntry]] = {}
    for i, y in enumerate(grid_values):
        profile = []
        for j, R in enumerate(radii):
            value, witness = table[(i, j)]
            if value is None:
                profile.append(ProfileEntry(radius=R, value=None, status=FIBER_BOUNDED))
            else:
                profile.append(ProfileEntry(radius=R, value=value, status="ok",
                                            witness=witness))
        profiles[i] = profile
        classifications.append((float(y), classify_value(profile)))

    suspects: List[AcvSuspect] = []
    i = 0
    while i < len(classifications):
        if classifications[i][1].kind != ACV_SUSPECT:
            i += 1
            continue
        j = i
        while j + 1 < len(classifications) and classifications[j + 1][1].kind == ACV_SUSPECT:
            j += 1
        ys = [classifications[t][0] for t in range(i, j + 1)]
        slopes = [classifications[t][1].slope for t in range(i, j + 1)]
        # witness sequence with strictly decreasing M, from the best node's profile
        best_node = min(range(i, j + 1),
                        key=lambda t: classifications[t][1].decay_ratio or np.inf)
        witness_seq: List[Tuple[float, float]] = []
        for entry in profiles[best_node]:
            if entry.value is None:
                continue
            if not witness_seq or entry.value < witness_seq[-1][1]:
                witness_seq.append((entry.radius, entry.value))
        suspects.append(AcvSuspect(
            lo=min(ys), hi=max(ys), value=float(np.mean(ys)),
            slope=float(np.mean([s for s in slopes if s is not None])),
            witnesses=tuple(witness_seq)))
        i = j + 1

    return AcvReport(k0=k0, kinf=suspects, classifications=classifications,
                     coverage_warning=coverage_warning, eta=eta)


# -- statistical plane-section test ----------------------------------------------


def section_MR_test(spec: FamilySpec, c: float, k: int, planes: int = 100,
                    seed: Optional[int] = None, schedule: Optional[RadiusSchedule] = None,
                    starts: int = 32, eta: float = DEFAULT_ETA,
                    assume_regular: bool = False) -> float:
    """Fraction of random plane sections at which c keeps its regularity.

    Samples planes P of dimension k - s in x-space, restricts the family to
    P x R^s, re-classifies the Malgrange profile at c on each restriction and
    returns the fraction whose classification is regular.  Both MR-regular and
    fiber-bounded count as regular: a bounded fiber band is the properness
    signature, the strongest form of regularity at c.  Degenerate restrictions
    are flagged and resampled.
    """
    from .topology import sample_grassmannian

    if k < spec.ambient - spec.dim_total:
        raise ValueError("section dimension too small for transversality")
    l = k - spec.s
    if not 1 <= l <= spec.n:
        raise ValueError(f"plane dimension {l} out of range")
    seed = spec.seed if seed is None else seed
    schedule = schedule or spec.schedule

    if not assume_regular:
        base = classify_value(infimum_profile(spec, c, schedule, starts=starts,
                                              seed=seed, eta=eta, node_key=90001))
        if base.kind == ACV_SUSPECT:
            raise ValueError(f"value {c} is not MR-regular; the section test needs a regular value")

    passes = 0
    counted = 0
    attempt = 0
    while counted < planes:
        attempt += 1
        if attempt > 20 * planes:
            raise RuntimeError("too many degenerate plane restrictions")
        plane = sample_grassmannian(l, spec.n, 1, seed=seed, key_base=attempt)[0]
        restricted = spec.restrict_x(plane.basis)
        # degenerate section: the restriction lost all dependence on the plane
        if all(max((sum(e[:l]) for e in p.terms), default=0) == 0 for p in restricted.polys):
            continue
        counted += 1
        profile = infimum_profile(restricted, c, schedule, starts=starts,
                                  seed=seed, eta=eta, node_key=100000 + attempt)
        try:
            cls = classify_value(profile)
        except ValueError:
            continue
        if cls.kind in (MR_REGULAR, FIBER_BOUNDED):
            passes += 1
    return passes / planes
