"""Discretization of one level set clipped to a ball, with curvature data.

Curves in R^2 are traced by predictor-corrector continuation with a
curvature-adaptive step; surfaces in R^3 are triangulated by marching
tetrahedra on a uniform grid with Newton-snapped vertices.  Curvature is
always evaluated from exact polynomial jets (the projected Hessian), so mesh
resolution only controls the quadrature of length/area, not the curvature
values.  The orientation convention is fixed throughout: the unit normal of a
level {f = 0} is -grad f / |grad f| (pointing into the sub-level {f < 0}),
and the principal curvatures are the opposites of the eigenvalues of the
derivative of that Gauss map.  Under that convention convex sub-level
boundaries (circles, spheres) have positive principal curvatures.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .polynomial import Polynomial
from .util import ball_volume, orthogonal_complement, rng_for, sphere_volume

GRADIENT_FLOOR = 1e-6


class MeshError(RuntimeError):
    """Meshing failed (singular sample, resolution too coarse, ...)."""


class SingularSampleError(MeshError):
    """A mesh sample hit a near-singular point of the level set."""

    def __init__(self, point):
        super().__init__(f"singular sample encountered at {np.asarray(point).tolist()}")
        self.point = np.asarray(point)


@dataclass
class LevelMesh:
    """A discretized level set clipped to the ball of radius ``clip_radius``.

    dimension 1: ``elements`` are segment vertex pairs; dimension 2: triangles.
    ``weights`` carry the element measures (lengths/areas) and sum to the total
    measure of the clipped set.  Per-vertex jet data of the defining polynomial
    is stored column-wise for vectorized curvature evaluation.
    """

    dimension: int
    points: np.ndarray            # (m, ambient)
    values: np.ndarray            # (m,)
    gradients: np.ndarray         # (m, ambient)
    hessians: np.ndarray          # (m, ambient, ambient)
    elements: np.ndarray          # (k, dimension+1) vertex indices
    weights: np.ndarray           # (k,) element measures
    component_of_element: np.ndarray   # (k,)
    boundary_element: np.ndarray  # (k,) True when the element touches the sphere
    clip_radius: float
    component_closed: Tuple[bool, ...] = ()   # per component, curves only

    @property
    def ambient(self) -> int:
        return self.points.shape[1] if self.points.size else self.dimension + 1

    @property
    def is_empty(self) -> bool:
        return self.elements.shape[0] == 0

    @property
    def total_measure(self) -> float:
        return float(np.sum(self.weights))

    @property
    def component_count(self) -> int:
        if self.is_empty:
            return 0
        return int(self.component_of_element.max()) + 1

    def validate(self, tol_value: float = 1e-8) -> None:
        """Check the on-level and regularity invariants of every vertex."""
        if self.points.size == 0:
            return
        gn = np.linalg.norm(self.gradients, axis=1)
        bad = np.abs(self.values) > tol_value * (1.0 + gn)
        if np.any(bad):
            raise MeshError(f"{int(bad.sum())} vertices are off the level set")
        if np.any(gn < GRADIENT_FLOOR):
            idx = int(np.argmin(gn))
            raise SingularSampleError(self.points[idx])


def _empty_mesh(dimension: int, ambient: int, R: float) -> LevelMesh:
    return LevelMesh(
        dimension=dimension,
        points=np.zeros((0, ambient)),
        values=np.zeros(0),
        gradients=np.zeros((0, ambient)),
        hessians=np.zeros((0, ambient, ambient)),
        elements=np.zeros((0, dimension + 1), dtype=np.int64),
        weights=np.zeros(0),
        component_of_element=np.zeros(0, dtype=np.int64),
        boundary_element=np.zeros(0, dtype=bool),
        clip_radius=R,
    )


def _newton_project(f: Polynomial, pts: np.ndarray, iters: int = 5) -> np.ndarray:
    """Pull points onto {f = 0} along the gradient direction."""
    out = pts.copy()
    for _ in range(iters):
        vals = f.evaluate_batch(out)
        grads = f.gradient_batch(out)
        gn2 = np.sum(grads * grads, axis=1)
        gn2 = np.maximum(gn2, 1e-30)
        out = out - (vals / gn2)[:, None] * grads
    return out


def _attach_jets(f: Polynomial, mesh: LevelMesh) -> None:
    mesh.values = f.evaluate_batch(mesh.points)
    mesh.gradients = f.gradient_batch(mesh.points)
    mesh.hessians = f.hessian_batch(mesh.points)


# -- curve tracing (n = 2) -------------------------------------------------------


def _curve_seeds(f: Polynomial, R: float, grid: int = 96) -> np.ndarray:
    axis = np.linspace(-R, R, grid + 1)
    X, Y = np.meshgrid(axis, axis, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    vals = f.evaluate_batch(pts).reshape(grid + 1, grid + 1)
    seeds = []
    sign = np.signbit(vals)
    flip_x = sign[:-1, :] != sign[1:, :]
    flip_y = sign[:, :-1] != sign[:, 1:]
    ix, iy = np.nonzero(flip_x)
    for a, b in zip(ix, iy):
        seeds.append([(axis[a] + axis[a + 1]) / 2, axis[b]])
    ix, iy = np.nonzero(flip_y)
    for a, b in zip(ix, iy):
        seeds.append([axis[a], (axis[b] + axis[b + 1]) / 2])
    if not seeds:
        return np.zeros((0, 2))
    seeds = np.array(seeds)
    seeds = seeds[np.linalg.norm(seeds, axis=1) <= R * (1 + 1e-9)]
    if seeds.shape[0] == 0:
        return np.zeros((0, 2))
    projected = _newton_project(f, seeds, iters=8)
    vals = np.abs(f.evaluate_batch(projected))
    gn = np.linalg.norm(f.gradient_batch(projected), axis=1)
    good = (vals <= 1e-9 * (1 + gn)) & (np.linalg.norm(projected, axis=1) <= R)
    return projected[good]


def _sphere_bisect(inside: np.ndarray, outside: np.ndarray, R: float,
                   f: Polynomial, iters: int = 60) -> np.ndarray:
    """Point on |x| = R along the level between an inside and an outside point."""
    a, b = inside.copy(), outside.copy()
    for _ in range(iters):
        mid = _newton_project(f, 0.5 * (a + b)[None, :], iters=2)[0]
        if np.linalg.norm(mid) <= R:
            a = mid
        else:
            b = mid
    return a


def trace_curve(f: Polynomial, R: float, step: float = 0.01,
                max_vertices: int = 400000) -> LevelMesh:
    """Trace {f = 0} in the disk of radius R by adaptive continuation.

    ``step`` is the turning-angle budget per segment (radians); the actual
    spatial step is min(R/40, step/|curvature|), which equidistributes the
    chord-length error.  Closed loops and boundary-to-boundary arcs are
    labeled per component; every sign-change seed of the initial grid scan is
    consumed by exactly one component.
    """
    if f.nvars != 2:
        raise ValueError("trace_curve expects a polynomial in two variables")
    seeds = _curve_seeds(f, R)
    if seeds.shape[0] == 0:
        return _empty_mesh(1, 2, R)

    h_max = R / 40.0
    h_min = R * 1e-7
    consumed = np.zeros(seeds.shape[0], dtype=bool)

    all_points: List[np.ndarray] = []
    all_elements: List[Tuple[int, int]] = []
    all_components: List[int] = []
    all_boundary: List[bool] = []
    component_closed: List[bool] = []

    def kappa_and_tangent(x):
        g = f.gradient_polys()
        grad = np.array([g[0].evaluate(x), g[1].evaluate(x)])
        gn = np.linalg.norm(grad)
        if gn < GRADIENT_FLOOR:
            raise SingularSampleError(x)
        t = np.array([-grad[1], grad[0]]) / gn
        hp = f.hessian_polys()
        H = np.array([[hp[0][0].evaluate(x), hp[0][1].evaluate(x)],
                      [hp[0][1].evaluate(x), hp[1][1].evaluate(x)]])
        k = float(t @ H @ t) / gn
        return k, t

    def march(start, direction_sign):
        """March from start; returns (polyline, 'loop'|'boundary'|'start')."""
        pts = [start.copy()]
        x = start.copy()
        prev_t = None
        total = 0
        while total < max_vertices:
            total += 1
            k, t = kappa_and_tangent(x)
            if prev_t is None:
                t = t * direction_sign
            elif float(t @ prev_t) < 0:
                t = -t
            h = min(h_max, step / max(abs(k), step / h_max))
            cand = x + h * t
            cand = _newton_project(f, cand[None, :], iters=4)[0]
            while np.linalg.norm(cand - x) > 2.0 * h and h > h_min:
                h *= 0.5
                cand = _newton_project(f, (x + h * t)[None, :], iters=4)[0]
            if h <= h_min:
                raise MeshError(f"continuation stalled near {x.tolist()}")
            if np.linalg.norm(cand) > R:
                hit = _sphere_bisect(x, cand, R, f)
                pts.append(hit)
                return pts, "boundary"
            # loop closure against the marching start
            if len(pts) > 3 and np.linalg.norm(cand - pts[0]) < 1.2 * h \
               and float((cand - x) @ (pts[0] - x)) > 0:
                pts.append(pts[0].copy())
                return pts, "loop"
            pts.append(cand)
            prev_t = t
            x = cand
        raise MeshError("vertex budget exhausted while tracing")

    # hash grid over traced points marks seeds as consumed
    def consume_near(polyline, radius):
        for i, s in enumerate(seeds):
            if consumed[i]:
                continue
            d = np.min(np.linalg.norm(polyline - s, axis=1))
            if d < radius:
                consumed[i] = True

    comp_id = 0
    for si in range(seeds.shape[0]):
        if consumed[si]:
            continue
        start = seeds[si]
        fwd, fend = march(start, +1.0)
        if fend == "loop":
            chain = fwd
            closed = True
        else:
            bwd, bend = march(start, -1.0)
            chain = list(reversed(bwd))[:-1] + fwd
            closed = False
        chain = np.array(chain)
        base = sum(len(p) for p in all_points)
        all_points.append(chain)
        m = chain.shape[0]
        for i in range(m - 1):
            all_elements.append((base + i, base + i + 1))
            all_components.append(comp_id)
        bflags = [False] * (m - 1)
        if not closed:
            if len(bflags) > 0:
                bflags[0] = True
                bflags[-1] = True
        all_boundary.extend(bflags)
        component_closed.append(closed)
        consume_near(chain, max(3.0 * h_max, 4 * R / 96))
        consumed[si] = True
        comp_id += 1

    points = np.vstack(all_points)
    elements = np.array(all_elements, dtype=np.int64)
    segs = points[elements[:, 1]] - points[elements[:, 0]]
    weights = np.linalg.norm(segs, axis=1)
    mesh = LevelMesh(
        dimension=1, points=points, values=np.zeros(len(points)),
        gradients=np.zeros_like(points),
        hessians=np.zeros((len(points), 2, 2)),
        elements=elements, weights=weights,
        component_of_element=np.array(all_components, dtype=np.int64),
        boundary_element=np.array(all_boundary, dtype=bool),
        clip_radius=R, component_closed=tuple(component_closed),
    )
    _attach_jets(f, mesh)
    mesh.validate()
    return mesh


# -- surface meshing (n = 3) -----------------------------------------------------

# Kuhn split of the unit cube into 6 tetrahedra (vertex indices in binary xyz order)
_CUBE_TETS = np.array([
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
], dtype=np.int64)

_CUBE_CORNERS = np.array([[i & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)])


def mesh_surface(f: Polynomial, R: float, resolution: int = 48,
                 snap_iters: int = 6) -> LevelMesh:
    """Triangulate {f = 0} inside the ball of radius R by marching tetrahedra.

    Vertices are Newton-snapped onto the level; triangles straddling the
    sphere are split at |x| = R by edge bisection so the clipping error is
    second order in the grid step.
    """
    if f.nvars != 3:
        raise ValueError("mesh_surface expects a polynomial in three variables")
    grid = np.linspace(-R, R, resolution + 1)
    h = grid[1] - grid[0]
    pts = np.stack(np.meshgrid(grid, grid, grid, indexing="ij"), axis=-1)
    vals = f.evaluate_batch(pts.reshape(-1, 3)).reshape(pts.shape[:3])

    def vid(i, j, k):
        return (i * (resolution + 1) + j) * (resolution + 1) + k

    neg = vals < 0
    # cells containing a sign change (cheap vectorized screen)
    cs = neg[:-1, :-1, :-1]
    mixed = np.zeros_like(cs)
    for di in (0, 1):
        for dj in (0, 1):
            for dk in (0, 1):
                mixed |= neg[di:resolution + di, dj:resolution + dj, dk:resolution + dk] != cs
    cells = np.argwhere(mixed)

    if cells.shape[0] == 0:
        # coarse probe: did we miss a thin sheet, or is the level empty?
        rng = rng_for(20210, resolution)
        probes = rng.uniform(-R, R, size=(4000, 3))
        projected = _newton_project(f, probes, iters=12)
        ok = (np.abs(f.evaluate_batch(projected)) < 1e-9) & \
             (np.linalg.norm(projected, axis=1) <= R)
        if np.any(ok):
            raise MeshError("resolution too coarse: the grid saw no sign change "
                            "but a probe found level points in the ball")
        return _empty_mesh(2, 3, R)

    flat_vals = vals.ravel()
    edge_cache = {}
    triangles: List[Tuple[int, int, int]] = []
    tri_vertices: List[np.ndarray] = []

    def edge_point(a_id, b_id):
        key = (a_id, b_id) if a_id < b_id else (b_id, a_id)
        cached = edge_cache.get(key)
        if cached is not None:
            return cached
        va, vb = flat_vals[key[0]], flat_vals[key[1]]
        pa = np.array([grid[key[0] // ((resolution + 1) ** 2)],
                       grid[(key[0] // (resolution + 1)) % (resolution + 1)],
                       grid[key[0] % (resolution + 1)]])
        pb = np.array([grid[key[1] // ((resolution + 1) ** 2)],
                       grid[(key[1] // (resolution + 1)) % (resolution + 1)],
                       grid[key[1] % (resolution + 1)]])
        t = va / (va - vb)
        p = pa + t * (pb - pa)
        idx = len(tri_vertices)
        tri_vertices.append(p)
        edge_cache[key] = idx
        return idx

    for (ci, cj, ck) in cells:
        corner_ids = [vid(ci + dx, cj + dy, ck + dz) for dx, dy, dz in _CUBE_CORNERS]
        for tet in _CUBE_TETS:
            ids = [corner_ids[t] for t in tet]
            vs = flat_vals[list(ids)]
            inside = [v < 0 for v in vs]
            count = sum(inside)
            if count == 0 or count == 4:
                continue
            if count == 1 or count == 3:
                lone = inside.index(True) if count == 1 else inside.index(False)
                others = [t for t in range(4) if t != lone]
                tri = [edge_point(ids[lone], ids[o]) for o in others]
                triangles.append(tuple(tri))
            else:
                ins = [t for t in range(4) if inside[t]]
                outs = [t for t in range(4) if not inside[t]]
                q = [edge_point(ids[ins[0]], ids[outs[0]]),
                     edge_point(ids[ins[0]], ids[outs[1]]),
                     edge_point(ids[ins[1]], ids[outs[1]]),
                     edge_point(ids[ins[1]], ids[outs[0]])]
                triangles.append((q[0], q[1], q[2]))
                triangles.append((q[0], q[2], q[3]))

    points = np.array(tri_vertices)
    points = _newton_project(f, points, iters=snap_iters)
    elements = np.array(triangles, dtype=np.int64)

    # clip to the ball, splitting straddling triangles at the sphere
    points, elements, boundary = _clip_triangles_to_ball(f, points, elements, R)
    if elements.shape[0] == 0:
        return _empty_mesh(2, 3, R)

    comp = _element_components(points.shape[0], elements)
    a = points[elements[:, 0]]
    b = points[elements[:, 1]]
    c = points[elements[:, 2]]
    weights = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    mesh = LevelMesh(
        dimension=2, points=points, values=np.zeros(len(points)),
        gradients=np.zeros_like(points), hessians=np.zeros((len(points), 3, 3)),
        elements=elements, weights=weights, component_of_element=comp,
        boundary_element=boundary, clip_radius=R,
    )
    _attach_jets(f, mesh)
    mesh.validate()
    return mesh


def _clip_triangles_to_ball(f: Polynomial, points: np.ndarray, elements: np.ndarray,
                            R: float):
    norms = np.linalg.norm(points, axis=1)
    inside = norms <= R
    keep: List[Tuple[int, int, int]] = []
    boundary: List[bool] = []
    pts_list = [p for p in points]

    def cut(i_in, i_out):
        a, b = pts_list[i_in], pts_list[i_out]
        lo, hi = a.copy(), b.copy()
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if np.linalg.norm(mid) <= R:
                lo = mid
            else:
                hi = mid
        p = _newton_project(f, lo[None, :], iters=3)[0]
        if np.linalg.norm(p) > R:
            p *= (R / np.linalg.norm(p)) * (1 - 1e-12)
        pts_list.append(p)
        return len(pts_list) - 1

    for tri in elements:
        flags = [inside[t] for t in tri]
        cnt = sum(flags)
        if cnt == 3:
            keep.append(tuple(tri))
            boundary.append(bool(np.any(norms[list(tri)] > R - 1e-9)))
        elif cnt == 0:
            continue
        elif cnt == 1:
            i_in = tri[flags.index(True)]
            outs = [t for t, fl in zip(tri, flags) if not fl]
            p1 = cut(i_in, outs[0])
            p2 = cut(i_in, outs[1])
            keep.append((i_in, p1, p2))
            boundary.append(True)
        else:
            ins = [t for t, fl in zip(tri, flags) if fl]
            i_out = tri[flags.index(False)]
            p1 = cut(ins[0], i_out)
            p2 = cut(ins[1], i_out)
            keep.append((ins[0], ins[1], p1))
            keep.append((ins[1], p2, p1))
            boundary.extend([True, True])

    if not keep:
        return np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=bool)
    new_points = np.array(pts_list)
    new_elements = np.array(keep, dtype=np.int64)
    used = np.unique(new_elements)
    remap = -np.ones(new_points.shape[0], dtype=np.int64)
    remap[used] = np.arange(used.shape[0])
    return new_points[used], remap[new_elements], np.array(boundary, dtype=bool)


def _element_components(n_vertices: int, elements: np.ndarray) -> np.ndarray:
    parent = np.arange(n_vertices)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for el in elements:
        r0 = find(el[0])
        for v in el[1:]:
            rv = find(v)
            if rv != r0:
                parent[rv] = r0
    roots = {}
    comp = np.zeros(elements.shape[0], dtype=np.int64)
    for i, el in enumerate(elements):
        r = find(el[0])
        if r not in roots:
            roots[r] = len(roots)
        comp[i] = roots[r]
    return comp


# -- curvature ---------------------------------------------------------------------


@dataclass(frozen=True)
class CurvatureSample:
    """Pointwise curvature data of a codimension-one level set."""

    point: np.ndarray
    principal: np.ndarray    # k_1..k_d, opposites of the Gauss-map eigenvalues
    sigma: np.ndarray        # sigma_0..sigma_d, elementary symmetric functions
    lk: Optional[np.ndarray] = None   # K_0..K_d when filled by lk_curvatures


def _elementary_symmetric(values: np.ndarray) -> np.ndarray:
    out = np.zeros(len(values) + 1)
    out[0] = 1.0
    for v in values:
        out[1:] = out[1:] + v * out[:-1]
    return out


def shape_operator(point: np.ndarray, gradient: np.ndarray,
                   hessian: np.ndarray) -> CurvatureSample:
    """Principal curvatures of a level set from one second-order jet.

    The Gauss map is -grad/|grad|; its tangential derivative is the negative
    of the projected Hessian over |grad|, so the principal curvatures (the
    opposites of the Gauss-map eigenvalues) are the eigenvalues of
    T^t H T / |grad| for any orthonormal tangent basis T.
    """
    g = np.asarray(gradient, dtype=np.float64)
    gn = np.linalg.norm(g)
    if gn < GRADIENT_FLOOR:
        raise SingularSampleError(point)
    T = orthogonal_complement((g / gn)[:, None])
    S = T.T @ np.asarray(hessian) @ T / gn
    principal = np.linalg.eigvalsh(S)
    sigma = _elementary_symmetric(principal)
    return CurvatureSample(point=np.asarray(point), principal=principal, sigma=sigma)


def curvature_samples(mesh: LevelMesh) -> List[CurvatureSample]:
    return [shape_operator(mesh.points[i], mesh.gradients[i], mesh.hessians[i])
            for i in range(mesh.points.shape[0])]


def _sigma_batch(mesh: LevelMesh, i: int) -> np.ndarray:
    """Vectorized sigma_i at all mesh vertices (codimension-one convention)."""
    m = mesh.points.shape[0]
    if m == 0:
        return np.zeros(0)
    gn = np.linalg.norm(mesh.gradients, axis=1)
    if np.any(gn < GRADIENT_FLOOR):
        raise SingularSampleError(mesh.points[int(np.argmin(gn))])
    amb = mesh.ambient
    d = amb - 1
    if i > d:
        return np.zeros(m)
    out = np.empty(m)
    for v in range(m):
        T = orthogonal_complement((mesh.gradients[v] / gn[v])[:, None])
        S = T.T @ mesh.hessians[v] @ T / gn[v]
        eigs = np.linalg.eigvalsh(S)
        out[v] = _elementary_symmetric(eigs)[i]
    return out


def lk_curvatures(sample: CurvatureSample, codim: int,
                  normal_nodes: int = 64) -> np.ndarray:
    """Lipschitz-Killing curvature integrands K_0..K_d from one curvature sample.

    Codimension 1: the unit normal sphere is two points and the odd symmetric
    functions cancel, K_i = 2 sigma_i for even i and 0 for odd i.  Codimension
    2 (curves in R^3): K_i is the trapezoid quadrature of sigma_i(x, v) over
    the unit normal circle.
    """
    d = len(sample.principal)
    if codim == 1:
        out = np.zeros(d + 1)
        for i in range(0, d + 1, 2):
            out[i] = 2.0 * sample.sigma[i]
        return out
    if codim == 2:
        if d != 1:
            raise ValueError("codimension-2 path supports curves only")
        # sigma_1(x, v) = <curvature vector, v> varies as cos(theta) on the circle
        theta = np.linspace(0.0, 2 * np.pi, normal_nodes, endpoint=False)
        k = float(sample.principal[0])
        K0 = 2 * np.pi  # integral of sigma_0 = 1 over the normal circle
        K1 = float(np.sum(k * np.cos(theta)) * (2 * np.pi / normal_nodes))
        return np.array([K0, K1])
    raise ValueError(f"unsupported codimension {codim}")


def integrate_over_level(mesh: LevelMesh, integrand) -> float:
    """Integrate a per-vertex quantity over the mesh (element-mean quadrature).

    ``integrand`` is either an array of per-vertex values or a callable
    applied to the vertex array.  Exact for constants: the constant 1 returns
    the total measure.
    """
    if mesh.is_empty:
        return 0.0
    if callable(integrand):
        vals = np.asarray([integrand(p) for p in mesh.points], dtype=np.float64)
    else:
        vals = np.asarray(integrand, dtype=np.float64)
    if vals.shape != (mesh.points.shape[0],):
        raise ValueError("integrand values must align with mesh vertices")
    element_means = np.mean(vals[mesh.elements], axis=1)
    return float(np.sum(element_means * mesh.weights))


def sublevel_volume(f: Polynomial, R: float, samples: int = 200000,
                    seed: int = 0) -> Tuple[float, float]:
    """Monte-Carlo volume of {f <= 0} inside the ball of radius R, with stderr."""
    if samples < 1000:
        raise ValueError("need at least 1e3 samples")
    n = f.nvars
    rng = rng_for(seed, 31001)
    g = rng.standard_normal((samples, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radii = R * rng.random(samples) ** (1.0 / n)
    pts = g * radii[:, None]
    frac = np.mean(f.evaluate_batch(pts) <= 0.0)
    vol_ball = ball_volume(n) * R ** n
    estimate = float(frac * vol_ball)
    stderr = float(vol_ball * np.sqrt(max(frac * (1 - frac), 0.0) / samples))
    return estimate, stderr


def boundary_lambda(mesh: LevelMesh, k: int, R: Optional[float] = None) -> float:
    """Lipschitz-Killing measure Lambda_k of the sub-level body from its boundary mesh.

    For the full-dimensional body {f <= 0} in R^n the k-th measure (k < n) is
    carried entirely by the boundary: (1/s_{n-k-1}) times the boundary
    integral of sigma_{n-1-k} evaluated at the inward normal -grad f/|grad f|,
    which is exactly the orientation this mesh's curvature convention uses.
    """
    n = mesh.ambient
    if not 0 <= k <= n - 1:
        raise ValueError(f"k must lie in 0..{n - 1}")
    if mesh.is_empty:
        return 0.0
    sig = _sigma_batch(mesh, n - 1 - k)
    return integrate_over_level(mesh, sig) / sphere_volume(n - k - 1)


def manifold_lambda(mesh: LevelMesh, k: int) -> float:
    """Lambda_k of a codimension-one manifold level set (no boundary contribution).

    Uses lambda_k = K_{d-k} / s_{n-k-1} with the doubled even curvature
    integrand; for k = d this reduces to the measure itself.
    """
    n = mesh.ambient
    d = n - 1
    if not 0 <= k <= d:
        return 0.0
    if mesh.is_empty:
        return 0.0
    i = d - k
    if i % 2 == 1:
        return 0.0
    sig = _sigma_batch(mesh, i)
    return 2.0 * integrate_over_level(mesh, sig) / sphere_volume(n - k - 1)
