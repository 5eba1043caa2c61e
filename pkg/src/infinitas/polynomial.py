"""Sparse multivariate polynomials with exact formal calculus and fast jet evaluation.

A polynomial is stored as a map from exponent tuples (one non-negative integer
per variable) to double-precision coefficients.  All arithmetic (parsing,
expansion, differentiation, linear substitution) is done on this sparse form;
only evaluation rounds.  Terms are kept in a canonical sorted order so that
printing and evaluation are deterministic: identical inputs always produce
bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

Exponent = Tuple[int, ...]

MAX_EXPONENT = 30


class PolynomialError(ValueError):
    """Malformed polynomial input (syntax, undeclared variable, bad exponent)."""


class ParseError(PolynomialError):
    """Syntax error while parsing an expression string; carries the offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


@dataclass(frozen=True)
class Jet2:
    """Second-order jet of a polynomial at a point: value, gradient, Hessian.

    The Hessian is built symmetric by construction (both triangles filled from
    the same mixed partial), so ``hessian == hessian.T`` holds exactly.
    """

    point: np.ndarray
    value: float
    gradient: np.ndarray
    hessian: np.ndarray


def _normalize(terms: Dict[Exponent, float], nvars: int) -> Tuple[Tuple[Exponent, float], ...]:
    out = []
    for exp, coeff in terms.items():
        if len(exp) != nvars:
            raise PolynomialError(f"exponent tuple {exp} has wrong length (expected {nvars})")
        if coeff != 0.0:
            out.append((tuple(int(e) for e in exp), float(coeff)))
    out.sort(key=lambda t: (sum(t[0]), t[0]))
    return tuple(out)


class Polynomial:
    """Immutable sparse polynomial over an ordered tuple of named variables."""

    __slots__ = ("variables", "terms", "_exp_array", "_coeff_array", "_grad_cache", "_hess_cache")

    def __init__(self, variables: Sequence[str], terms: Dict[Exponent, float]):
        object.__setattr__(self, "variables", tuple(variables))
        object.__setattr__(self, "terms", dict(_normalize(terms, len(self.variables))))
        items = sorted(self.terms.items(), key=lambda t: (sum(t[0]), t[0]))
        if items:
            exps = np.array([e for e, _ in items], dtype=np.int64)
            coeffs = np.array([c for _, c in items], dtype=np.float64)
        else:
            exps = np.zeros((0, len(self.variables)), dtype=np.int64)
            coeffs = np.zeros((0,), dtype=np.float64)
        object.__setattr__(self, "_exp_array", exps)
        object.__setattr__(self, "_coeff_array", coeffs)
        object.__setattr__(self, "_grad_cache", None)
        object.__setattr__(self, "_hess_cache", None)

    def __setattr__(self, name, value):  # immutability guard
        raise AttributeError("Polynomial is immutable")

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls, variables: Sequence[str]) -> "Polynomial":
        return cls(variables, {})

    @classmethod
    def constant(cls, variables: Sequence[str], value: float) -> "Polynomial":
        return cls(variables, {(0,) * len(variables): float(value)})

    @classmethod
    def variable(cls, variables: Sequence[str], index: int) -> "Polynomial":
        exp = [0] * len(variables)
        exp[index] = 1
        return cls(variables, {tuple(exp): 1.0})

    # -- basic queries -----------------------------------------------------

    @property
    def nvars(self) -> int:
        return len(self.variables)

    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        if not self.terms:
            return 0
        return max(sum(e) for e in self.terms)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Polynomial)
            and self.variables == other.variables
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.variables, tuple(sorted(self.terms.items()))))

    # -- arithmetic (term-dict level, exact) -------------------------------

    def _same_vars(self, other: "Polynomial"):
        if self.variables != other.variables:
            raise PolynomialError("variable lists differ")

    def __add__(self, other: "Polynomial") -> "Polynomial":
        self._same_vars(other)
        out = dict(self.terms)
        for exp, c in other.terms.items():
            out[exp] = out.get(exp, 0.0) + c
        return Polynomial(self.variables, out)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        self._same_vars(other)
        out = dict(self.terms)
        for exp, c in other.terms.items():
            out[exp] = out.get(exp, 0.0) - c
        return Polynomial(self.variables, out)

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.variables, {e: -c for e, c in self.terms.items()})

    def __mul__(self, other) -> "Polynomial":
        if isinstance(other, (int, float)):
            return Polynomial(self.variables, {e: c * other for e, c in self.terms.items()})
        self._same_vars(other)
        out: Dict[Exponent, float] = {}
        for ea, ca in self.terms.items():
            for eb, cb in other.terms.items():
                exp = tuple(x + y for x, y in zip(ea, eb))
                out[exp] = out.get(exp, 0.0) + ca * cb
        return Polynomial(self.variables, out)

    __rmul__ = __mul__

    def shift_constant(self, value: float) -> "Polynomial":
        """Return self + value (added to the constant term)."""
        out = dict(self.terms)
        zero = (0,) * self.nvars
        out[zero] = out.get(zero, 0.0) + float(value)
        return Polynomial(self.variables, out)

    def power(self, k: int) -> "Polynomial":
        if k < 0:
            raise PolynomialError("negative exponent")
        result = Polynomial.constant(self.variables, 1.0)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base if k > 1 else base
            k >>= 1
        return result

    # -- calculus ----------------------------------------------------------

    def differentiate(self, var: int) -> "Polynomial":
        """Exact formal partial derivative with respect to variable ``var``."""
        if not 0 <= var < self.nvars:
            raise PolynomialError(f"variable index {var} out of range")
        out: Dict[Exponent, float] = {}
        for exp, c in self.terms.items():
            e = exp[var]
            if e == 0:
                continue
            new = list(exp)
            new[var] = e - 1
            key = tuple(new)
            out[key] = out.get(key, 0.0) + c * e
        return Polynomial(self.variables, out)

    def gradient_polys(self) -> Tuple["Polynomial", ...]:
        cached = self._grad_cache
        if cached is None:
            cached = tuple(self.differentiate(i) for i in range(self.nvars))
            object.__setattr__(self, "_grad_cache", cached)
        return cached

    def hessian_polys(self) -> Tuple[Tuple["Polynomial", ...], ...]:
        cached = self._hess_cache
        if cached is None:
            grads = self.gradient_polys()
            rows = []
            for i in range(self.nvars):
                row = []
                for j in range(self.nvars):
                    row.append(grads[min(i, j)].differentiate(max(i, j)))
                rows.append(tuple(row))
            cached = tuple(rows)
            object.__setattr__(self, "_hess_cache", cached)
        return cached

    # -- evaluation ---------------------------------------------------------

    def __call__(self, point: Sequence[float]) -> float:
        return self.evaluate(point)

    def evaluate(self, point: Sequence[float]) -> float:
        pt = np.asarray(point, dtype=np.float64)
        if pt.shape != (self.nvars,):
            raise PolynomialError(f"point has {pt.shape} entries, expected {self.nvars}")
        if self._coeff_array.size == 0:
            return 0.0
        monos = np.prod(pt[None, :] ** self._exp_array, axis=1)
        return float(np.dot(self._coeff_array, monos))

    def evaluate_batch(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at an (m, nvars) array of points, returning shape (m,)."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != self.nvars:
            raise PolynomialError("points must have shape (m, nvars)")
        if self._coeff_array.size == 0:
            return np.zeros(pts.shape[0])
        monos = np.prod(pts[:, None, :] ** self._exp_array[None, :, :], axis=2)
        return monos @ self._coeff_array

    def gradient_batch(self, points: np.ndarray) -> np.ndarray:
        """Gradients at an (m, nvars) array of points; returns (m, nvars)."""
        grads = self.gradient_polys()
        pts = np.asarray(points, dtype=np.float64)
        out = np.empty((pts.shape[0], self.nvars))
        for i, g in enumerate(grads):
            out[:, i] = g.evaluate_batch(pts)
        return out

    def hessian_batch(self, points: np.ndarray) -> np.ndarray:
        """Hessians at an (m, nvars) array of points; returns (m, nvars, nvars)."""
        hess = self.hessian_polys()
        pts = np.asarray(points, dtype=np.float64)
        m = pts.shape[0]
        out = np.empty((m, self.nvars, self.nvars))
        for i in range(self.nvars):
            for j in range(i, self.nvars):
                vals = hess[i][j].evaluate_batch(pts)
                out[:, i, j] = vals
                out[:, j, i] = vals
        return out

    # -- substitution --------------------------------------------------------

    def substitute_values(self, assignments: Dict[int, float]) -> "Polynomial":
        """Fix some variables to numeric values; result is in the remaining ones."""
        keep = [i for i in range(self.nvars) if i not in assignments]
        new_vars = tuple(self.variables[i] for i in keep)
        out: Dict[Exponent, float] = {}
        for exp, c in self.terms.items():
            coeff = c
            for i, val in assignments.items():
                coeff *= float(val) ** exp[i]
            key = tuple(exp[i] for i in keep)
            out[key] = out.get(key, 0.0) + coeff
        return Polynomial(new_vars, out)

    def compose_linear(self, matrix: np.ndarray, new_variables: Sequence[str]) -> "Polynomial":
        """Substitute x = matrix @ u where u are ``new_variables`` (matrix is nvars x l)."""
        mat = np.asarray(matrix, dtype=np.float64)
        if mat.shape[0] != self.nvars:
            raise PolynomialError("substitution matrix has wrong row count")
        l = mat.shape[1]
        lin = [
            Polynomial(new_variables, {tuple(int(j == k) for k in range(l)): float(mat[i, j])
                                       for j in range(l) if mat[i, j] != 0.0})
            for i in range(self.nvars)
        ]
        result = Polynomial.zero(new_variables)
        for exp, c in sorted(self.terms.items(), key=lambda t: (sum(t[0]), t[0])):
            mono = Polynomial.constant(new_variables, c)
            for i, e in enumerate(exp):
                if e:
                    mono = mono * lin[i].power(e)
            result = result + mono
        return result

    # -- printing ------------------------------------------------------------

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts: List[str] = []
        for exp, c in sorted(self.terms.items(), key=lambda t: (sum(t[0]), t[0])):
            factors = []
            if abs(c) != 1.0 or all(e == 0 for e in exp):
                factors.append(repr(abs(c)))
            for name, e in zip(self.variables, exp):
                if e == 1:
                    factors.append(name)
                elif e > 1:
                    factors.append(f"{name}^{e}")
            body = "*".join(factors)
            if not parts:
                parts.append(body if c > 0 else f"-{body}")
            else:
                parts.append(f"{'+' if c > 0 else '-'} {body}")
        return " ".join(parts)

    def __repr__(self) -> str:
        return f"Polynomial({list(self.variables)!r}, '{self}')"


# -- jets -------------------------------------------------------------------


def evaluate_jet(p: Polynomial, point: Sequence[float]) -> Jet2:
    """Value, gradient and Hessian of ``p`` at ``point`` from exact formal derivatives."""
    pt = np.asarray(point, dtype=np.float64)
    if pt.shape != (p.nvars,):
        raise PolynomialError(f"point has shape {pt.shape}, expected ({p.nvars},)")
    value = p.evaluate(pt)
    grad = np.array([g.evaluate(pt) for g in p.gradient_polys()])
    hp = p.hessian_polys()
    hess = np.empty((p.nvars, p.nvars))
    for i in range(p.nvars):
        for j in range(i, p.nvars):
            v = hp[i][j].evaluate(pt)
            hess[i, j] = v
            hess[j, i] = v
    return Jet2(point=pt, value=value, gradient=grad, hessian=hess)


def differentiate(p: Polynomial, var: int) -> Polynomial:
    return p.differentiate(var)


# -- plane restriction --------------------------------------------------------

ORTHONORMAL_TOL = 1e-12


def restrict_to_plane(p: Polynomial, basis: np.ndarray,
                      new_names: Sequence[str] | None = None) -> Polynomial:
    """Restrict ``p`` to the linear plane spanned by the orthonormal columns of ``basis``.

    Returns the polynomial q(u) = p(basis @ u) in fresh variables u1..ul whose
    zero set is the preimage of the zero set of ``p`` under the plane
    parametrization.  The restriction may be identically zero (the plane lies
    inside the level); callers treat that as a degenerate-section flag, not an
    error.
    """
    B = np.asarray(basis, dtype=np.float64)
    if B.ndim != 2 or B.shape[0] != p.nvars:
        raise PolynomialError("basis must be an (nvars, l) matrix")
    gram = B.T @ B
    if not np.allclose(gram, np.eye(B.shape[1]), atol=ORTHONORMAL_TOL * 10):
        raise PolynomialError("basis columns are not orthonormal")
    if new_names is None:
        new_names = tuple(f"u{i+1}" for i in range(B.shape[1]))
    return p.compose_linear(B, new_names)


# -- parser -------------------------------------------------------------------

_NUMBER_START = set("0123456789.")


def _tokenize(text: str):
    tokens = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in "+-*^()/":
            tokens.append((ch, ch, i))
            i += 1
            continue
        if ch in _NUMBER_START:
            j = i
            seen_dot = False
            while j < n and (text[j].isdigit() or (text[j] == "." and not seen_dot)):
                if text[j] == ".":
                    seen_dot = True
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    while k < n and text[k].isdigit():
                        k += 1
                    j = k
            tokens.append(("num", text[i:j], i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("name", text[i:j], i))
            i = j
            continue
        raise ParseError(f"unexpected character {ch!r}", i)
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    """Recursive-descent parser for the expression grammar documented in README."""

    def __init__(self, text: str, variables: Sequence[str]):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.variables = tuple(variables)
        self.var_index = {name: i for i, name in enumerate(self.variables)}

    def peek(self):
        return self.tokens[self.pos]

    def next(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str):
        tok = self.next()
        if tok[0] != kind:
            raise ParseError(f"expected {kind!r}, found {tok[1]!r}", tok[2])
        return tok

    def parse(self) -> Polynomial:
        result = self.parse_expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ParseError(f"unexpected trailing input {tok[1]!r}", tok[2])
        return result

    def parse_expr(self) -> Polynomial:
        node = self.parse_term()
        while self.peek()[0] in ("+", "-"):
            op = self.next()[0]
            rhs = self.parse_term()
            node = node + rhs if op == "+" else node - rhs
        return node

    def parse_term(self) -> Polynomial:
        node = self.parse_factor()
        while self.peek()[0] in ("*", "/"):
            op, _, pos = self.next()
            rhs = self.parse_factor()
            if op == "*":
                node = node * rhs
            else:
                # division is only admitted by a nonzero constant (rational coefficients)
                if rhs.degree() > 0 or rhs.is_zero():
                    raise ParseError("division is only allowed by a nonzero constant", pos)
                node = node * (1.0 / rhs.terms[(0,) * rhs.nvars])
        return node

    def parse_factor(self) -> Polynomial:
        tok = self.peek()
        if tok[0] == "-":
            self.next()
            return -self.parse_factor()
        if tok[0] == "+":
            self.next()
            return self.parse_factor()
        node = self.parse_atom()
        if self.peek()[0] == "^":
            _, _, pos = self.next()
            etok = self.next()
            if etok[0] != "num" or not etok[1].isdigit():
                raise ParseError("exponent must be a non-negative integer", etok[2])
            e = int(etok[1])
            if e > MAX_EXPONENT:
                raise PolynomialError(f"exponent {e} exceeds the maximum {MAX_EXPONENT}")
            node = node.power(e)
        return node

    def parse_atom(self) -> Polynomial:
        tok = self.next()
        if tok[0] == "num":
            return Polynomial.constant(self.variables, float(tok[1]))
        if tok[0] == "name":
            if tok[1] not in self.var_index:
                raise PolynomialError(f"undeclared variable {tok[1]!r}")
            return Polynomial.variable(self.variables, self.var_index[tok[1]])
        if tok[0] == "(":
            node = self.parse_expr()
            self.expect(")")
            return node
        raise ParseError(f"unexpected token {tok[1]!r}", tok[2])


def parse_polynomial(text: str, variables: Sequence[str]) -> Polynomial:
    """Parse an expression over +, -, *, /const, ^int and the declared variables."""
    return _Parser(text, variables).parse()
