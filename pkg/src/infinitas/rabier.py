"""Metric linear algebra of surjectivity and the fiber-transport machinery.

The Rabier number nu(A) of a linear map A: R^p -> R^q measures the distance
from A to the set of non-surjective maps; it vanishes exactly when A fails to
be surjective and equals the smallest of the q singular values otherwise.
Applied fiberwise to the parameter projection of a family it yields the
Malgrange functional M(w) = (1 + |w|) * nu(D_w phi) whose decay along points
escaping to infinity flags asymptotic critical values.  When M stays bounded
below, the right inverse of the differential integrates to a flow transporting
one fiber onto another; ``transport_fiber`` realizes that flow numerically
with an embedded Runge-Kutta pair plus a drift-correcting projection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .familyspec import FamilySpec, MAP_GRAPH
from .util import orthogonal_complement, orthonormalize, random_unit_vectors, rng_for

SURJECTIVITY_TOL = 1e-9
FRAME_TOL = 1e-10


class SingularPointError(RuntimeError):
    """The total space is singular (defining gradient vanished) at the query point."""


class FlowBlockedError(RuntimeError):
    """Fiber transport could not proceed; a generalized critical value is suspected."""


# -- Rabier number and equivalent characterizations ----------------------------


def rabier_number(A: np.ndarray) -> float:
    """min over unit covectors phi of |A^T phi|; zero iff A is not surjective.

    Computed as the square root of the smallest eigenvalue of A A^T.  For
    q > p the map cannot be surjective and 0 is returned immediately.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    q, p = A.shape
    if q > p:
        return 0.0
    if q == 1:
        return float(np.linalg.norm(A[0]))
    gram = A @ A.T
    eigs = np.linalg.eigvalsh(gram)
    return float(np.sqrt(max(eigs[0], 0.0)))


def is_surjective(A: np.ndarray) -> bool:
    """Surjectivity with the numeric cutoff applied after max-row-norm scaling."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    scale = np.max(np.linalg.norm(A, axis=1))
    if scale == 0.0:
        return False
    return rabier_number(A / scale) > SURJECTIVITY_TOL


def _sphere_minimize(h: Callable[[np.ndarray], float],
                     grad: Callable[[np.ndarray], np.ndarray],
                     dim: int, rng: np.random.Generator,
                     samples: int = 512, polish: int = 8, iters: int = 120) -> float:
    """Minimize h over the unit sphere: seeded sampling + projected gradient refine."""
    if dim == 1:
        return min(h(np.array([1.0])), h(np.array([-1.0])))
    pts = random_unit_vectors(rng, samples, dim)
    vals = np.array([h(u) for u in pts])
    order = np.argsort(vals, kind="stable")
    best = vals[order[0]]
    for idx in order[:polish]:
        u = pts[idx].copy()
        step = 0.5
        val = h(u)
        for _ in range(iters):
            g = grad(u)
            g = g - np.dot(g, u) * u
            gn = np.linalg.norm(g)
            if gn < 1e-14:
                break
            cand = u - step * g / gn
            cand /= np.linalg.norm(cand)
            cval = h(cand)
            if cval < val:
                u, val = cand, cval
                step = min(step * 1.3, 0.5)
            else:
                step *= 0.5
                if step < 1e-12:
                    break
        best = min(best, val)
    return best


def check_rabier_equivalences(A: np.ndarray, grid: int = 512, seed: int = 0) -> dict:
    """Evaluate the three equivalent surjectivity margins and their max discrepancy.

    (a) direct minimization of |A^T phi| over unit covectors,
    (b) the largest r with the ball B^q(0,r) inside the image A B^p(0,1),
        located by bisection with a sampled support-function inclusion test,
    (c) distance to the nearest rank-deficient map (smallest singular value).
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    q, p = A.shape
    if q > p or p > 8:
        raise ValueError("equivalence check expects q <= p <= 8")

    def h(u):
        return float(np.linalg.norm(A.T @ u))

    def hgrad(u):
        v = A.T @ u
        nv = np.linalg.norm(v)
        if nv < 1e-15:
            return np.zeros_like(u)
        return (A @ v) / nv

    inf_direct = _sphere_minimize(h, hgrad, q, rng_for(seed, 1), samples=max(grid, 64))

    # (b): bisection on the inscribed-ball radius.  The inclusion
    # B(0,r) subset A B(0,1) holds iff the support function |A^T u| of the
    # image body dominates r in every direction.
    directions = random_unit_vectors(rng_for(seed, 2), max(grid, 64), q)
    if q == 1:
        directions = np.array([[1.0], [-1.0]])
    support = np.array([h(u) for u in directions])
    k = min(8, len(directions))
    refine_idx = np.argsort(support, kind="stable")[:k]
    refined = [support[i] for i in refine_idx]
    for i in refine_idx:
        u = directions[i].copy()
        step = 0.3
        val = h(u)
        for _ in range(80):
            g = hgrad(u)
            g = g - np.dot(g, u) * u
            gn = np.linalg.norm(g)
            if gn < 1e-14:
                break
            cand = u - step * g / gn
            cand /= np.linalg.norm(cand)
            cval = h(cand)
            if cval < val:
                u, val = cand, cval
            else:
                step *= 0.5
                if step < 1e-12:
                    break
        refined.append(val)
    envelope = min(min(support), min(refined))
    lo, hi = 0.0, float(np.linalg.norm(A, 2)) + 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if mid <= envelope:
            lo = mid
        else:
            hi = mid
    ball_radius = lo

    sv = np.linalg.svd(A, compute_uv=False)
    dist_sigma = float(sv[-1])

    values = (inf_direct, ball_radius, dist_sigma)
    disc = max(abs(a - b) for a in values for b in values)
    return {
        "inf_adjoint": inf_direct,
        "ball_radius": ball_radius,
        "singular_distance": dist_sigma,
        "discrepancy": disc,
    }


def nu_of_graph_projection(A: np.ndarray) -> float:
    """Rabier number of the parameter projection restricted to the graph of A."""
    nu = rabier_number(A)
    return nu / float(np.sqrt(1.0 + nu * nu))


def delta_distance(u: np.ndarray, E: np.ndarray) -> float:
    """Distance from the unit vector u to the subspace spanned by E's columns.

    Equals max over unit v orthogonal to E of |<u, v>|, i.e. the norm of the
    projection of u onto the orthogonal complement of E.
    """
    u = np.asarray(u, dtype=np.float64)
    if abs(np.linalg.norm(u) - 1.0) > 1e-10:
        raise ValueError("u must be a unit vector")
    E = np.asarray(E, dtype=np.float64)
    if E.size == 0:
        return 1.0
    if E.ndim == 1:
        E = E[:, None]
    coeffs = E.T @ u
    residual = u - E @ coeffs
    return float(np.linalg.norm(residual))


# -- tangent frames and fiberwise quantities -----------------------------------


@dataclass(frozen=True)
class TangentFrame:
    """Orthonormal tangent/normal frames of the total space at a point."""

    point: np.ndarray
    tangent: np.ndarray   # (n+s, d) orthonormal columns
    normal: np.ndarray    # (n+s, codim) orthonormal columns


def fiber_tangent_frame(spec: FamilySpec, w: np.ndarray, tol: float = 1e-7) -> TangentFrame:
    """Tangent and normal frames of the total space at w (deterministic in w)."""
    w = np.asarray(w, dtype=np.float64)
    if spec.defining_residual(w) > tol:
        raise ValueError(f"point is off the total space (residual {spec.defining_residual(w):.3g})")
    if spec.kind == MAP_GRAPH:
        x = w[: spec.n]
        J = spec.map_jacobian(x)                      # s x n
        cols = np.vstack([np.eye(spec.n), J])         # (n+s) x n, full rank always
        tangent = orthonormalize(cols)
        normal = orthogonal_complement(tangent)
    else:
        F = spec.polys[0]
        grad = np.array([g.evaluate(w) for g in F.gradient_polys()])
        gn = np.linalg.norm(grad)
        if gn < 1e-9:
            raise SingularPointError(f"singular point of the total space at {w.tolist()}")
        normal = (grad / gn)[:, None]
        tangent = orthogonal_complement(normal)
    return TangentFrame(point=w, tangent=tangent, normal=normal)


def fiber_rabier(spec: FamilySpec, w: np.ndarray, tol: float = 1e-7) -> float:
    """Rabier number of the parameter projection of the total space at w."""
    frame = fiber_tangent_frame(spec, w, tol=tol)
    proj = frame.tangent[spec.n:, :]      # s x d matrix of the projection in the frame
    return rabier_number(proj)


def malgrange_functional(spec: FamilySpec, w: np.ndarray, tol: float = 1e-7) -> float:
    """M(w) = (1 + |w|) * nu of the projection; bounded below means MR-regular."""
    w = np.asarray(w, dtype=np.float64)
    return (1.0 + float(np.linalg.norm(w))) * fiber_rabier(spec, w, tol=tol)


def fiber_direction_frame(spec: FamilySpec, w: np.ndarray, tol: float = 1e-7) -> np.ndarray:
    """Orthonormal basis of the tangent space of the fiber through w.

    This is the kernel of the parameter projection restricted to the tangent
    space of the total space.
    """
    frame = fiber_tangent_frame(spec, w, tol=tol)
    proj = frame.tangent[spec.n:, :]
    kernel = orthogonal_complement(proj.T)   # basis of ker within frame coordinates
    if kernel.shape[1] == 0:
        return np.zeros((spec.ambient, 0))
    return orthonormalize(frame.tangent @ kernel)


def spherical_deviation(spec: FamilySpec, w: np.ndarray, tol: float = 1e-7) -> float:
    """Distance from the radial direction w/|w| to the fiber tangent space at w."""
    w = np.asarray(w, dtype=np.float64)
    norm = np.linalg.norm(w)
    if norm == 0.0:
        raise ValueError("spherical deviation is undefined at the origin")
    E = fiber_direction_frame(spec, w, tol=tol)
    return delta_distance(w / norm, E)


# -- right inverse and the transport flow ---------------------------------------


def right_inverse(A: np.ndarray) -> np.ndarray:
    """V = A^T (A A^T)^{-1}, satisfying A V = identity when A is surjective."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    if not is_surjective(A):
        raise ValueError("matrix is not surjective; no right inverse")
    gram = A @ A.T
    try:
        sol = np.linalg.solve(gram, A)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"near-singular normal matrix: {exc}")
    return sol.T


@dataclass
class FlowResult:
    endpoint: np.ndarray
    max_identity_residual: float
    steps_accepted: int
    steps_rejected: int
    min_malgrange: float


# Cash-Karp embedded 4(5) tableau
_CK_C = np.array([0.0, 1 / 5, 3 / 10, 3 / 5, 1.0, 7 / 8])
_CK_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [3 / 10, -9 / 10, 6 / 5],
    [-11 / 54, 5 / 2, -70 / 27, 35 / 27],
    [1631 / 55296, 175 / 512, 575 / 13824, 44275 / 110592, 253 / 4096],
]
_CK_B5 = np.array([37 / 378, 0.0, 250 / 621, 125 / 594, 0.0, 512 / 1771])
_CK_B4 = np.array([2825 / 27648, 0.0, 18575 / 48384, 13525 / 55296, 277 / 14336, 1 / 4])


def transport_fiber(spec: FamilySpec, x0: np.ndarray, target_y: np.ndarray,
                    rtol: float = 1e-8, identity_tol: float = 1e-6,
                    malgrange_floor: float = 1e-8, max_steps: int = 200000) -> FlowResult:
    """Transport x0 from its own fiber to the fiber over target_y.

    Integrates dx/dt = V(x) (y - c) over t in [0, 1], where V is the right
    inverse of the Jacobian and c = G(x0).  Along the exact flow the family
    values move affinely, G(x(t)) = c + t (y - c); the integrator enforces that
    identity to ``identity_tol`` at every accepted step, applying a Newton
    projection back onto the moving level whenever drift exceeds half the
    tolerance.  Step-size underflow raises FlowBlockedError with the suspected
    cause.
    """
    if spec.kind != MAP_GRAPH:
        raise ValueError("fiber transport is defined for map-graph families")
    x = np.asarray(x0, dtype=np.float64).copy()
    if x.shape != (spec.n,):
        raise ValueError(f"start point has shape {x.shape}, expected ({spec.n},)")
    y = np.atleast_1d(np.asarray(target_y, dtype=np.float64))
    if y.shape != (spec.s,):
        raise ValueError(f"target has shape {y.shape}, expected ({spec.s},)")
    c = spec.map_values(x)
    dy = y - c

    def field(xv: np.ndarray) -> np.ndarray:
        J = spec.map_jacobian(xv)
        if not is_surjective(J):
            raise FlowBlockedError(
                "flow blocked: suspected generalized critical value on segment")
        return right_inverse(J) @ dy

    def project(xv: np.ndarray, t: float) -> np.ndarray:
        # Newton steps onto the level G = c + t dy
        for _ in range(4):
            res = spec.map_values(xv) - (c + t * dy)
            if np.max(np.abs(res)) <= 0.25 * identity_tol:
                break
            J = spec.map_jacobian(xv)
            xv = xv - right_inverse(J) @ res
        return xv

    t = 0.0
    h = 0.05
    max_residual = 0.0
    accepted = rejected = 0
    min_m = np.inf
    while t < 1.0:
        h = min(h, 1.0 - t)
        if h < 1e-14:
            raise FlowBlockedError(
                "flow blocked: suspected generalized critical value on segment")
        try:
            k = []
            for i in range(6):
                xi = x.copy()
                for j, a in enumerate(_CK_A[i]):
                    xi = xi + h * a * k[j]
                k.append(field(xi))
        except FlowBlockedError:
            h *= 0.25
            rejected += 1
            if h < 1e-14:
                raise
            continue
        k = np.array(k)
        x5 = x + h * (_CK_B5 @ k)
        x4 = x + h * (_CK_B4 @ k)
        scale = np.maximum(np.abs(x), np.abs(x5)) * rtol + 1e-12
        err = float(np.max(np.abs(x5 - x4) / scale))
        if err > 1.0:
            h *= max(0.1, 0.9 * err ** -0.25)
            rejected += 1
            if accepted + rejected > max_steps:
                raise FlowBlockedError("flow blocked: step budget exhausted")
            continue
        t_new = t + h
        x_new = x5
        res = float(np.max(np.abs(spec.map_values(x_new) - (c + t_new * dy))))
        if res > 0.5 * identity_tol:
            x_new = project(x_new, t_new)
            res = float(np.max(np.abs(spec.map_values(x_new) - (c + t_new * dy))))
        if res > identity_tol:
            h *= 0.25
            rejected += 1
            if h < 1e-14:
                raise FlowBlockedError(
                    "flow blocked: suspected generalized critical value on segment")
            continue
        x, t = x_new, t_new
        accepted += 1
        max_residual = max(max_residual, res)
        m = malgrange_functional(spec, spec.lift(x))
        min_m = min(min_m, m)
        if m < malgrange_floor:
            raise FlowBlockedError(
                "flow blocked: suspected generalized critical value on segment")
        if err > 1e-10:
            h *= min(5.0, 0.9 * err ** -0.2)
        else:
            h *= 5.0
        if accepted + rejected > max_steps:
            raise FlowBlockedError("flow blocked: step budget exhausted")
    return FlowResult(endpoint=x, max_identity_residual=max_residual,
                      steps_accepted=accepted, steps_rejected=rejected,
                      min_malgrange=float(min_m))
