"""Problem statements: polynomial families of level sets with scan configuration.

A family is given either as a map-graph (a polynomial map G: R^n -> R^s whose
graph is the total space) or as a hypersurface family (a single polynomial
F in x1..xn, y1..ys cutting out the total space F = 0).  The parameter
projection onto the y-coordinates is the object every downstream module
studies.  Specs are read from TOML files; the exact schema is documented in
the README.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .polynomial import Polynomial, parse_polynomial

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

MAP_GRAPH = "map-graph"
HYPERSURFACE = "hypersurface-family"


class SpecError(ValueError):
    """Invalid family specification (file syntax or semantic invariants)."""


@dataclass(frozen=True)
class RadiusSchedule:
    """Geometric radius schedule r0, r0*factor, ..., discretizing 'radius to infinity'."""

    r0: float = 4.0
    factor: float = 2.0
    steps: int = 7

    def __post_init__(self):
        if self.r0 <= 0:
            raise SpecError("schedule r0 must be positive")
        if self.factor <= 1:
            raise SpecError("schedule factor must exceed 1")
        if self.steps < 3:
            raise SpecError("schedule needs at least 3 steps")
        if self.r0 * self.factor ** (self.steps - 1) > 1e9:
            raise SpecError("schedule final radius exceeds 1e9")

    @property
    def radii(self) -> Tuple[float, ...]:
        return tuple(self.r0 * self.factor ** j for j in range(self.steps))


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    steps: int

    def __post_init__(self):
        if self.hi < self.lo:
            raise SpecError("grid max below min")
        if self.steps < 1:
            raise SpecError("grid needs at least one step")

    @property
    def values(self) -> np.ndarray:
        if self.steps == 1:
            return np.array([0.5 * (self.lo + self.hi)])
        return np.linspace(self.lo, self.hi, self.steps)


@dataclass(frozen=True)
class FamilySpec:
    """A polynomial family with ambient dimensions and scan configuration."""

    kind: str
    n: int
    s: int
    polys: Tuple[Polynomial, ...]
    chi_hints: Dict[str, int] = field(default_factory=dict)
    grid: Tuple[GridSpec, ...] = ()
    schedule: RadiusSchedule = field(default_factory=RadiusSchedule)
    planes: int = 100
    mesh_level: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (MAP_GRAPH, HYPERSURFACE):
            raise SpecError(f"unknown family kind {self.kind!r}")
        if self.n < 1 or self.s < 1:
            raise SpecError("dimensions n and s must be positive")
        if self.kind == MAP_GRAPH:
            if len(self.polys) != self.s:
                raise SpecError(f"map-graph family needs exactly s={self.s} polynomials")
            for p in self.polys:
                if p.nvars != self.n:
                    raise SpecError("map-graph polynomials must have n variables")
        else:
            if len(self.polys) != 1:
                raise SpecError("hypersurface family needs exactly one polynomial")
            if self.polys[0].nvars != self.n + self.s:
                raise SpecError("hypersurface polynomial must have n+s variables")
        if self.dim_total < self.s:
            raise SpecError("total space dimension must be at least s")
        if not (0 <= self.seed < 2 ** 64):
            raise SpecError("seed must be a 64-bit unsigned integer")

    # -- dimensions ---------------------------------------------------------

    @property
    def dim_total(self) -> int:
        """Dimension d of the total space (graph: n; hypersurface: n+s-1)."""
        return self.n if self.kind == MAP_GRAPH else self.n + self.s - 1

    @property
    def fiber_dim(self) -> int:
        return self.dim_total - self.s

    @property
    def ambient(self) -> int:
        """Dimension of the ambient space R^n x R^s containing the total space."""
        return self.n + self.s

    # -- family access --------------------------------------------------------

    def map_values(self, x: np.ndarray) -> np.ndarray:
        """G(x) for map-graph families."""
        if self.kind != MAP_GRAPH:
            raise SpecError("map_values only applies to map-graph families")
        return np.array([p.evaluate(x) for p in self.polys])

    def map_jacobian(self, x: np.ndarray) -> np.ndarray:
        """s x n Jacobian DG(x) for map-graph families."""
        if self.kind != MAP_GRAPH:
            raise SpecError("map_jacobian only applies to map-graph families")
        return np.array([[g.evaluate(x) for g in p.gradient_polys()] for p in self.polys])

    def lift(self, x: np.ndarray) -> np.ndarray:
        """Total-space point (x, G(x)) above x (map-graph families)."""
        return np.concatenate([np.asarray(x, dtype=np.float64), self.map_values(x)])

    def defining_residual(self, w: np.ndarray) -> float:
        """How far w is from the total space (0 means on it)."""
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.ambient,):
            raise SpecError(f"point has shape {w.shape}, expected ({self.ambient},)")
        if self.kind == MAP_GRAPH:
            return float(np.max(np.abs(w[self.n:] - self.map_values(w[: self.n]))))
        return abs(self.polys[0].evaluate(w))

    def fiber_polynomials(self, y: Sequence[float]) -> Tuple[Polynomial, ...]:
        """Defining polynomials of the fiber over y, as polynomials in x1..xn."""
        yv = np.atleast_1d(np.asarray(y, dtype=np.float64))
        if yv.shape != (self.s,):
            raise SpecError(f"parameter has shape {yv.shape}, expected ({self.s},)")
        if self.kind == MAP_GRAPH:
            return tuple(p.shift_constant(-float(c)) for p, c in zip(self.polys, yv))
        assignments = {self.n + j: float(yv[j]) for j in range(self.s)}
        return (self.polys[0].substitute_values(assignments),)

    def fiber_polynomial(self, y: Sequence[float]) -> Polynomial:
        """Single defining polynomial of the fiber (requires s = 1 or hypersurface kind)."""
        polys = self.fiber_polynomials(y)
        if len(polys) != 1:
            raise SpecError("fiber is cut out by several polynomials; no single equation")
        return polys[0]

    def restrict_x(self, basis: np.ndarray) -> "FamilySpec":
        """Restrict the family to the plane P x R^s with P spanned by ``basis`` in x-space."""
        B = np.asarray(basis, dtype=np.float64)
        if B.shape[0] != self.n:
            raise SpecError("plane basis must have n rows")
        l = B.shape[1]
        new_x = tuple(f"u{i+1}" for i in range(l))
        if self.kind == MAP_GRAPH:
            polys = tuple(p.compose_linear(B, new_x) for p in self.polys)
        else:
            y_names = self.polys[0].variables[self.n:]
            full = np.zeros((self.n + self.s, l + self.s))
            full[: self.n, :l] = B
            full[self.n:, l:] = np.eye(self.s)
            polys = (self.polys[0].compose_linear(full, new_x + tuple(y_names)),)
        return FamilySpec(
            kind=self.kind, n=l, s=self.s, polys=polys, chi_hints=dict(self.chi_hints),
            grid=self.grid, schedule=self.schedule, planes=self.planes,
            mesh_level=self.mesh_level, seed=self.seed,
        )


# -- builders -----------------------------------------------------------------


def _x_names(n: int) -> Tuple[str, ...]:
    return tuple(f"x{i+1}" for i in range(n))


def _y_names(s: int) -> Tuple[str, ...]:
    return tuple(f"y{j+1}" for j in range(s))


def map_graph_family(exprs: Sequence[str] | str, n: int, **kwargs) -> FamilySpec:
    """Build a map-graph family from expression strings in x1..xn."""
    if isinstance(exprs, str):
        exprs = [exprs]
    names = _x_names(n)
    polys = tuple(parse_polynomial(e, names) for e in exprs)
    return FamilySpec(kind=MAP_GRAPH, n=n, s=len(polys), polys=polys, **kwargs)


def hypersurface_family(expr: str, n: int, s: int = 1, **kwargs) -> FamilySpec:
    """Build a hypersurface family from one expression string in x1..xn, y1..ys."""
    names = _x_names(n) + _y_names(s)
    poly = parse_polynomial(expr, names)
    return FamilySpec(kind=HYPERSURFACE, n=n, s=s, polys=(poly,), **kwargs)


# -- TOML loading ---------------------------------------------------------------


def _get(table, key, typ, default=None, required=False):
    if key not in table:
        if required:
            raise SpecError(f"missing required field {key!r}")
        return default
    val = table[key]
    if typ is float and isinstance(val, int):
        val = float(val)
    if not isinstance(val, typ):
        raise SpecError(f"field {key!r} has wrong type (expected {typ.__name__})")
    return val


def load_spec(path: str) -> FamilySpec:
    """Load a family specification from a TOML file (schema in the README)."""
    try:
        with open(path, "rb") as fh:
            data = _toml.load(fh)
    except FileNotFoundError:
        raise SpecError(f"spec file not found: {path}")
    except _toml.TOMLDecodeError as exc:
        raise SpecError(f"spec file is not valid TOML: {exc}")
    return spec_from_dict(data)


def spec_from_dict(data: dict) -> FamilySpec:
    fam = data.get("family")
    if not isinstance(fam, dict):
        raise SpecError("missing [family] table")
    kind = _get(fam, "kind", str, required=True)
    n = _get(fam, "n", int, required=True)
    s = _get(fam, "s", int, default=1)
    expr = fam.get("expr")
    if expr is None:
        raise SpecError("missing required field 'expr'")
    exprs = [expr] if isinstance(expr, str) else list(expr)
    if not all(isinstance(e, str) for e in exprs):
        raise SpecError("family.expr must be a string or a list of strings")

    chi_hints = {}
    hints = data.get("hints", {})
    if isinstance(hints, dict):
        for name, value in hints.get("chi", {}).items():
            if not isinstance(value, int):
                raise SpecError(f"hints.chi.{name} must be an integer")
            chi_hints[name] = value

    grids: List[GridSpec] = []
    scan = data.get("scan", {})
    if isinstance(scan, dict) and "grid" in scan:
        gtab = scan["grid"]
        # either a single {min,max,steps} table or one sub-table per parameter
        if "min" in gtab:
            grids.append(GridSpec(_get(gtab, "min", float, required=True),
                                  _get(gtab, "max", float, required=True),
                                  _get(gtab, "steps", int, required=True)))
        else:
            for pname in sorted(gtab):
                sub = gtab[pname]
                grids.append(GridSpec(_get(sub, "min", float, required=True),
                                      _get(sub, "max", float, required=True),
                                      _get(sub, "steps", int, required=True)))

    sched_tab = data.get("schedule", {})
    schedule = RadiusSchedule(
        r0=_get(sched_tab, "r0", float, default=4.0),
        factor=_get(sched_tab, "factor", float, default=2.0),
        steps=_get(sched_tab, "steps", int, default=7),
    )

    sampling = data.get("sampling", {})
    planes = _get(sampling, "planes", int, default=100)
    mesh_level = _get(sampling, "mesh_level", int, default=4)
    seed = _get(data, "seed", int, default=0)

    if kind == MAP_GRAPH:
        names = _x_names(n)
        polys = tuple(parse_polynomial(e, names) for e in exprs)
        s = len(polys)
    elif kind == HYPERSURFACE:
        if len(exprs) != 1:
            raise SpecError("hypersurface family takes a single expression")
        names = _x_names(n) + _y_names(s)
        polys = (parse_polynomial(exprs[0], names),)
    else:
        raise SpecError(f"unknown family kind {kind!r}")

    return FamilySpec(
        kind=kind, n=n, s=s, polys=polys, chi_hints=chi_hints,
        grid=tuple(grids), schedule=schedule, planes=planes,
        mesh_level=mesh_level, seed=seed,
    )
