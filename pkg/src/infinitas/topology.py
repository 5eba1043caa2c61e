"""Links at infinity, Grassmannian sampling, and Euler characteristics.

The link at infinity of a closed set S is its intersection with a sphere of
radius beyond the point where the topological type has stabilized; this module
computes Euler characteristics of such links across a radius schedule, detects
stabilization (three agreeing radii), averages link characteristics of random
plane sections over the Grassmannian, and estimates global Euler
characteristics of the catalog sets from cubical or simplicial complexes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .familyspec import FamilySpec, MAP_GRAPH, RadiusSchedule
from .levelgeom import MeshError, mesh_surface, trace_curve
from .polynomial import Polynomial, restrict_to_plane
from .util import rng_for

TANGENCY_TOL = 1e-6
JITTER_RETRIES = 5


class LinkError(RuntimeError):
    """A link computation failed (persistent tangency, degenerate set, ...)."""


class StabilizationError(LinkError):
    """The link Euler characteristic did not stabilize over the schedule."""


@dataclass(frozen=True)
class LevelSet:
    """A concrete definable set: a level {f = 0} or a sub-level {f <= 0}."""

    poly: Polynomial
    kind: str                      # "fiber" | "sublevel"

    def __post_init__(self):
        if self.kind not in ("fiber", "sublevel"):
            raise ValueError(f"unknown set kind {self.kind!r}")

    @property
    def ambient(self) -> int:
        return self.poly.nvars

    @property
    def dim(self) -> int:
        return self.ambient - 1 if self.kind == "fiber" else self.ambient

    @classmethod
    def from_spec(cls, spec: FamilySpec, y, which: str = "fiber") -> "LevelSet":
        return cls(poly=spec.fiber_polynomial(y), kind=which)


@dataclass(frozen=True)
class PlaneSample:
    """An l-plane in R^n: orthonormal basis columns plus its seed lineage."""

    l: int
    basis: np.ndarray
    seed_lineage: Tuple[int, ...]


@dataclass
class LinkReport:
    radii: Tuple[float, ...]
    chi: Tuple[Optional[int], ...]
    components: Tuple[Optional[int], ...]
    stable_chi: Optional[int]
    stabilization_radius: Optional[float]

    @property
    def stabilized(self) -> bool:
        return self.stable_chi is not None


def sample_grassmannian(l: int, n: int, count: int, seed: int = 0,
                        key_base: int = 0) -> List[PlaneSample]:
    """Uniform (rotation-invariant) random l-planes in R^n, seeded substreams.

    Orthonormalized standard-Gaussian frames; for l = n the full space is the
    unique plane and is returned every time.
    """
    if not 1 <= l <= n or n > 6:
        raise ValueError("need 1 <= l <= n <= 6")
    out = []
    for i in range(count):
        lineage = (seed, key_base, i)
        if l == n:
            out.append(PlaneSample(l=l, basis=np.eye(n), seed_lineage=lineage))
            continue
        rng = rng_for(seed, 40000 + key_base, i)
        g = rng.standard_normal((n, l))
        q, r = np.linalg.qr(g)
        signs = np.sign(np.diag(r))
        signs[signs == 0] = 1.0
        out.append(PlaneSample(l=l, basis=q * signs, seed_lineage=lineage))
    return out


def section_set(level_set: LevelSet, plane: PlaneSample) -> Tuple[LevelSet, bool]:
    """Restrict the set to a plane through the origin; True flags a degenerate cut."""
    restricted = restrict_to_plane(level_set.poly, plane.basis)
    degenerate = restricted.is_zero()
    return LevelSet(poly=restricted, kind=level_set.kind), degenerate


# -- circle scanning (ambient dimension 2) ---------------------------------------


def _circle_trig_coeffs(f: Polynomial, R: float) -> np.ndarray:
    """Coefficients of z^D * f(R cos t, R sin t) as a polynomial in z = e^{it}."""
    D = max(f.degree(), 1)
    acc = np.zeros(2 * D + 1, dtype=np.complex128)
    for (e1, e2), c in f.terms.items():
        # cos t = (z^2+1)/(2z), sin t = (z^2-1)/(2iz); multiply through by z^D
        p = np.array([1.0 + 0j])
        p = np.polymul(p, np.polynomial.polynomial.polypow([1.0, 0.0, 1.0], e1)) \
            if e1 else p
        if e2:
            p = np.polymul(p, np.polynomial.polynomial.polypow([-1.0, 0.0, 1.0], e2))
        factor = c * R ** (e1 + e2) / (2.0 ** (e1 + e2) * (1j) ** e2)
        # p is in ascending powers of z, degree 2(e1+e2); shift by z^(D-e1-e2)
        shift = D - (e1 + e2)
        term = np.zeros(2 * D + 1, dtype=np.complex128)
        term[shift: shift + len(p)] = factor * np.asarray(p, dtype=np.complex128)
        acc += term
    return acc


def _circle_roots(f: Polynomial, R: float):
    """Angles where f vanishes on the circle of radius R, exactly located.

    The restriction of f to the circle is a trigonometric polynomial; its
    zeros are the unit-modulus roots of a complex companion polynomial, so
    arbitrarily close pairs of transversal crossings are resolved.  Raises
    LinkError on a detected tangency (double root on the circle).
    """
    coeffs = _circle_trig_coeffs(f, R)
    scale = float(np.max(np.abs(coeffs)))
    if scale < 1e-300:
        raise LinkError("the set contains the whole circle (degenerate radius)")
    coeffs = coeffs / scale
    # np.roots wants descending powers
    desc = coeffs[::-1]
    nz = np.nonzero(np.abs(desc) > 1e-14)[0]
    if nz.size == 0:
        raise LinkError("the set contains the whole circle (degenerate radius)")
    desc = desc[nz[0]:]
    if len(desc) <= 1:
        return [], np.array([f.evaluate(np.array([R, 0.0]))])
    roots_z = np.roots(desc)
    on_circle = roots_z[np.abs(np.abs(roots_z) - 1.0) < 1e-6]
    thetas = sorted(float(np.angle(z)) % (2 * np.pi) for z in on_circle)

    # dedupe, then verify transversality of each crossing by the sign structure
    merged: List[float] = []
    for t in thetas:
        if merged and abs(t - merged[-1]) < 1e-9:
            raise LinkError(f"tangential intersection near angle {t:.6f}")
        merged.append(t)
    if len(merged) >= 2 and (merged[0] + 2 * np.pi) - merged[-1] < 1e-9:
        raise LinkError("tangential intersection near angle 0")

    def eval_at(t):
        return f.evaluate(np.array([R * np.cos(t), R * np.sin(t)]))

    roots = []
    for idx, t in enumerate(merged):
        lo = merged[idx - 1] if idx > 0 else merged[-1] - 2 * np.pi
        hi = merged[idx + 1] if idx + 1 < len(merged) else merged[0] + 2 * np.pi
        a = t - 0.49 * (t - lo)
        b = t + 0.49 * (hi - t)
        fa, fb = eval_at(a), eval_at(b)
        if fa == 0.0 or fb == 0.0 or (fa < 0) == (fb < 0):
            raise LinkError(f"tangential intersection near angle {t:.6f}")
        for _ in range(80):
            mid = 0.5 * (a + b)
            fm = eval_at(mid)
            if fm == 0.0:
                a = b = mid
                break
            if (fm < 0) == (fa < 0):
                a, fa = mid, fm
            else:
                b, fb = mid, fm
        roots.append((0.5 * (a + b)) % (2 * np.pi))

    probe = np.linspace(0.0, 2 * np.pi, 64, endpoint=False)
    pts = np.stack([R * np.cos(probe), R * np.sin(probe)], axis=1)
    vals = f.evaluate_batch(pts)
    return sorted(roots), vals


def _chi_ambient2(level_set: LevelSet, R: float) -> Tuple[int, int]:
    """(chi, component count) of the link for sets in the plane."""
    f = level_set.poly
    roots, vals = _circle_roots(f, R)
    if level_set.kind == "fiber":
        return len(roots), len(roots)
    # sub-level: alternating arcs; sign changes come in pairs
    if not roots:
        everywhere = bool(np.all(vals <= 0))
        return (0, 1) if everywhere else (0, 0)
    arcs = len(roots) // 2
    return arcs, arcs


def _chi_ambient1(level_set: LevelSet, R: float) -> Tuple[int, int]:
    f = level_set.poly
    vals = [f.evaluate(np.array([-R])), f.evaluate(np.array([R]))]
    if level_set.kind == "fiber":
        count = sum(1 for v in vals if v == 0.0)
        return count, count
    count = sum(1 for v in vals if v <= 0.0)
    return count, count


# -- geodesic sphere meshes (ambient dimension 3) ---------------------------------

_ICO_CACHE: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}


def _icosphere(level: int) -> Tuple[np.ndarray, np.ndarray]:
    """Unit geodesic sphere: icosahedron with ``level`` midpoint subdivisions."""
    if level in _ICO_CACHE:
        return _ICO_CACHE[level]
    phi = (1 + np.sqrt(5.0)) / 2
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    for _ in range(level):
        verts_list = [v for v in verts]
        midpoint = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            got = midpoint.get(key)
            if got is not None:
                return got
            m = verts_list[a] + verts_list[b]
            m = m / np.linalg.norm(m)
            verts_list.append(m)
            midpoint[key] = len(verts_list) - 1
            return midpoint[key]

        new_faces = []
        for (a, b, c) in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)])
        verts = np.array(verts_list)
        faces = np.array(new_faces, dtype=np.int64)
    _ICO_CACHE[level] = (verts, faces)
    return verts, faces


def _triangle_complex_chi(faces: np.ndarray) -> int:
    if faces.shape[0] == 0:
        return 0
    V = np.unique(faces).size
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    E = np.unique(edges, axis=0).shape[0]
    return int(V - E + faces.shape[0])


def _face_components(faces: np.ndarray) -> int:
    if faces.shape[0] == 0:
        return 0
    parent = {}

    def find(a):
        parent.setdefault(a, a)
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for tri in faces:
        r = find(int(tri[0]))
        for v in tri[1:]:
            rv = find(int(v))
            if rv != r:
                parent[rv] = r
    roots = {find(int(tri[0])) for tri in faces}
    return len(roots)


def _chi_ambient3(level_set: LevelSet, R: float, base_level: int = 4) -> Tuple[int, int]:
    """(chi, components) of the link on the sphere of radius R.

    Fibers cut closed curves on the sphere, whose Euler characteristic
    vanishes; the component count is still estimated from the crossing band.
    Sub-levels cut regions: chi = V - E + F over the triangles whose majority
    vertex sign is non-positive, evaluated after one global midpoint
    refinement, at increasing subdivision levels until two consecutive levels
    agree (levels 3..7).
    """
    f = level_set.poly
    if level_set.kind == "fiber":
        verts, faces = _icosphere(base_level)
        vals = f.evaluate_batch(verts * R)
        sign = vals <= 0
        mixed = faces[(sign[faces].sum(axis=1) % 3) != 0]
        comp = _face_components(mixed)
        return 0, comp

    prev_chi = None
    for level in range(3, 8):
        # one midpoint refinement beyond the nominal level supplies the
        # majority-vote vertices for boundary triangles
        verts, faces = _icosphere(level + 1)
        vals = f.evaluate_batch(verts * R)
        inside = vals <= 0
        votes = inside[faces].sum(axis=1)
        kept = faces[votes >= 2]
        chi = _triangle_complex_chi(kept)
        comp = _face_components(kept)
        if prev_chi is not None and chi == prev_chi:
            return chi, comp
        prev_chi = chi
    raise LinkError("sphere-region Euler characteristic did not converge in refinement")


def link_euler(level_set: LevelSet, R: float) -> Tuple[int, int]:
    """Euler characteristic (and component count) of the set's link at radius R.

    Dimension-dispatched on the ambient space; tangential intersections are
    retried at jittered radii (up to 1% perturbation, five attempts) before
    erroring out, since generic radii avoid tangencies.
    """
    n = level_set.ambient
    if n > 3:
        raise ValueError("links are computed in ambient dimension <= 3")
    attempt_radii = [R] + [R * (1 + 0.01 * (k + 1) * (-1) ** k) for k in range(JITTER_RETRIES)]
    last_err: Optional[Exception] = None
    for rr in attempt_radii:
        try:
            if n == 1:
                return _chi_ambient1(level_set, rr)
            if n == 2:
                return _chi_ambient2(level_set, rr)
            return _chi_ambient3(level_set, rr)
        except LinkError as err:
            last_err = err
            continue
    raise LinkError(f"persistent tangency at radius {R}: {last_err}")


def stable_link(level_set: LevelSet, schedule: RadiusSchedule) -> LinkReport:
    """Links across the radius schedule with the three-agreement stability rule."""
    radii = schedule.radii
    chis: List[Optional[int]] = []
    comps: List[Optional[int]] = []
    for R in radii:
        try:
            chi, comp = link_euler(level_set, R)
        except LinkError:
            chi, comp = None, None
        chis.append(chi)
        comps.append(comp)
    stable = None
    r_s = None
    if len(chis) >= 3 and chis[-1] is not None and chis[-1] == chis[-2] == chis[-3]:
        stable = chis[-1]
        r_s = radii[-3]
        for i in range(len(chis) - 3, -1, -1):
            if chis[i] == stable:
                r_s = radii[i]
            else:
                break
    return LinkReport(radii=tuple(radii), chi=tuple(chis), components=tuple(comps),
                      stable_chi=stable, stabilization_radius=r_s)


@dataclass
class ChiInftyEstimate:
    value: float
    stderr: float
    planes_used: int
    failures: int
    exact: bool


def chi_l_infty(level_set: LevelSet, l: int, planes: int = 100,
                seed: int = 0, schedule: Optional[RadiusSchedule] = None,
                key_base: int = 0) -> ChiInftyEstimate:
    """Half the Grassmannian average of link Euler characteristics of l-plane sections.

    For l = n the full space is the only plane and half the stable link
    characteristic is returned exactly.  Otherwise planes are sampled from the
    rotation-invariant probability measure, which absorbs the Grassmannian
    volume normalization, leaving only the factor 1/2.  Degenerate sections
    are resampled; the estimate aborts when more than 5% of the sampled planes
    fail to stabilize.
    """
    n = level_set.ambient
    schedule = schedule or RadiusSchedule()
    if not (l <= 3 or l == n):
        raise ValueError("sections are supported for l <= 3")
    if l == n:
        report = stable_link(level_set, schedule)
        if not report.stabilized:
            raise StabilizationError("link did not stabilize for the full-space section")
        return ChiInftyEstimate(value=report.stable_chi / 2.0, stderr=0.0,
                                planes_used=1, failures=0, exact=True)
    values = []
    failures = 0
    attempts = 0
    while len(values) < planes:
        attempts += 1
        if attempts > 20 * planes:
            raise LinkError("too many degenerate sections while sampling planes")
        plane = sample_grassmannian(l, n, 1, seed=seed, key_base=key_base * 100000 + attempts)[0]
        sectioned, degenerate = section_set(level_set, plane)
        if degenerate:
            continue
        try:
            report = stable_link(sectioned, schedule)
        except LinkError:
            failures += 1
            values.append(None)
            continue
        if not report.stabilized:
            failures += 1
            values.append(None)
            continue
        values.append(report.stable_chi)
    if failures > 0.05 * planes:
        raise StabilizationError(
            f"{failures} of {planes} plane sections failed to stabilize")
    good = np.array([v for v in values if v is not None], dtype=np.float64)
    mean = float(np.mean(good)) / 2.0
    stderr = float(np.std(good, ddof=1) / np.sqrt(len(good))) / 2.0 if len(good) > 1 else 0.0
    return ChiInftyEstimate(value=mean, stderr=stderr, planes_used=len(good),
                            failures=failures, exact=False)


# -- global Euler characteristics ---------------------------------------------------


def _chi_traced_curve(f: Polynomial, R: float) -> int:
    mesh = trace_curve(f, R)
    if mesh.is_empty:
        return 0
    # an open arc contributes 1, a closed loop 0
    return sum(0 if closed else 1 for closed in mesh.component_closed)


def _cubical_chi_2d(f: Polynomial, R: float, resolution: int) -> int:
    axis = np.linspace(-R, R, resolution + 1)
    h = axis[1] - axis[0]
    centers = axis[:-1] + h / 2
    X, Y = np.meshgrid(centers, centers, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    occupied = (f.evaluate_batch(pts) <= 0) & (np.linalg.norm(pts, axis=1) <= R)
    ii, jj = np.nonzero(occupied.reshape(resolution, resolution))
    if ii.size == 0:
        return 0
    M = resolution + 2
    ii = ii.astype(np.int64)
    jj = jj.astype(np.int64)
    verts = np.concatenate([
        ii * M + jj, (ii + 1) * M + jj, ii * M + (jj + 1), (ii + 1) * M + (jj + 1)])
    h_edges = np.concatenate([ii * M + jj, ii * M + (jj + 1)])   # along the first axis
    v_edges = np.concatenate([ii * M + jj, (ii + 1) * M + jj])   # along the second axis
    V = np.unique(verts).size
    E = np.unique(h_edges).size + np.unique(v_edges).size
    return int(V - E + ii.size)


def _cubical_chi_3d(f: Polynomial, R: float, resolution: int) -> int:
    axis = np.linspace(-R, R, resolution + 1)
    h = axis[1] - axis[0]
    centers = axis[:-1] + h / 2
    X, Y, Z = np.meshgrid(centers, centers, centers, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    occupied = (f.evaluate_batch(pts) <= 0) & (np.linalg.norm(pts, axis=1) <= R)
    idx = np.nonzero(occupied.reshape(resolution, resolution, resolution))
    ii, jj, kk = (a.astype(np.int64) for a in idx)
    if ii.size == 0:
        return 0
    M = resolution + 2

    def enc(a, b, c):
        return (a * M + b) * M + c

    cells = ii.size
    verts = []
    for da in (0, 1):
        for db in (0, 1):
            for dc in (0, 1):
                verts.append(enc(ii + da, jj + db, kk + dc))
    V = np.unique(np.concatenate(verts)).size
    # edges along x, y, z counted in their own id families
    ex = [enc(ii, jj + db, kk + dc) for db in (0, 1) for dc in (0, 1)]
    ey = [enc(ii + da, jj, kk + dc) for da in (0, 1) for dc in (0, 1)]
    ez = [enc(ii + da, jj + db, kk) for da in (0, 1) for db in (0, 1)]
    E = (np.unique(np.concatenate(ex)).size
         + np.unique(np.concatenate(ey)).size
         + np.unique(np.concatenate(ez)).size)
    fx = [enc(ii + da, jj, kk) for da in (0, 1)]      # faces normal to x
    fy = [enc(ii, jj + db, kk) for db in (0, 1)]
    fz = [enc(ii, jj, kk + dc) for dc in (0, 1)]
    F = (np.unique(np.concatenate(fx)).size
         + np.unique(np.concatenate(fy)).size
         + np.unique(np.concatenate(fz)).size)
    return int(V - E + F - cells)


def _surface_chi(f: Polynomial, R: float, resolution: int) -> int:
    mesh = mesh_surface(f, R, resolution=resolution)
    if mesh.is_empty:
        return 0
    return _triangle_complex_chi(mesh.elements)


def euler_global(level_set: LevelSet, R: float, resolution: int = 96,
                 hint: Optional[int] = None) -> Tuple[int, bool]:
    """Euler characteristic of the set clipped to the ball of radius R.

    Uses the traced polyline complex (plane curves), the pixel complex (plane
    regions), the marching triangulation (surfaces in R^3), or the voxel
    complex (bodies in R^3).  The value is accepted only when it is stable
    both under mesh refinement and under enlarging the radius; otherwise the
    caller-supplied hint is returned with the hint-used flag set, or an error
    is raised when there is none.
    """
    n = level_set.ambient
    f = level_set.poly

    def compute(rr: float, res: int) -> int:
        if n == 2 and level_set.kind == "fiber":
            return _chi_traced_curve(f, rr)
        if n == 2:
            return _cubical_chi_2d(f, rr, res)
        if n == 3 and level_set.kind == "fiber":
            return _surface_chi(f, rr, min(res, 64))
        if n == 3:
            return _cubical_chi_3d(f, rr, min(res, 72))
        raise ValueError("global Euler characteristics need ambient dimension <= 3")

    try:
        values = [compute(R, resolution), compute(R, int(resolution * 4 / 3)),
                  compute(R * 1.5, resolution)]
    except MeshError:
        if hint is not None:
            return hint, True
        raise
    if values[0] == values[1] == values[2]:
        return values[0], False
    if hint is not None:
        return hint, True
    raise MeshError(f"Euler characteristic did not stabilize: {values}")
