"""Polynomial core: parsing, calculus, jet evaluation, plane restriction."""

import numpy as np
import pytest

from infinitas.polynomial import (
    ParseError,
    Polynomial,
    PolynomialError,
    evaluate_jet,
    parse_polynomial,
    restrict_to_plane,
)


def central_jet(p, pt, h=1e-5):
    """Finite-difference oracle for gradient and Hessian, independent of the jet path."""
    pt = np.asarray(pt, dtype=float)
    n = len(pt)
    grad = np.empty(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        grad[i] = (p.evaluate(pt + e) - p.evaluate(pt - e)) / (2 * h)
    hess = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = h
            ej[j] = h
            hess[i, j] = (
                p.evaluate(pt + ei + ej) - p.evaluate(pt + ei - ej)
                - p.evaluate(pt - ei + ej) + p.evaluate(pt - ei - ej)
            ) / (4 * h * h)
    return grad, hess


class TestParse:
    def test_expansion(self):
        p = parse_polynomial("x1 + x1^2*x2", ["x1", "x2"])
        assert p.terms == {(1, 0): 1.0, (2, 1): 1.0}

    def test_zero_product(self):
        p = parse_polynomial("0*x1", ["x1"])
        assert p.is_zero()
        assert p.terms == {}

    def test_hypersurface_expression(self):
        p = parse_polynomial("x1*x2 - y1", ["x1", "x2", "y1"])
        assert p.terms == {(1, 1, 0): 1.0, (0, 0, 1): -1.0}

    def test_parentheses_and_rational(self):
        p = parse_polynomial("(x1 + 1)^2 - 1/2*x2", ["x1", "x2"])
        assert p.terms == {(0, 0): 1.0, (1, 0): 2.0, (2, 0): 1.0, (0, 1): -0.5}

    def test_unary_minus(self):
        p = parse_polynomial("-x1^2 + -3", ["x1"])
        assert p.terms == {(2,): -1.0, (0,): -3.0}

    def test_syntax_error_carries_position(self):
        with pytest.raises(ParseError) as err:
            parse_polynomial("x1 + * x2", ["x1", "x2"])
        assert err.value.position == 5

    def test_undeclared_variable(self):
        with pytest.raises(PolynomialError, match="undeclared"):
            parse_polynomial("x1 + z", ["x1"])

    def test_exponent_overflow(self):
        with pytest.raises(PolynomialError, match="exceeds"):
            parse_polynomial("x1^31", ["x1"])

    def test_round_trip_idempotent(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            nvars = int(rng.integers(1, 4))
            names = [f"x{i+1}" for i in range(nvars)]
            terms = {}
            for _ in range(int(rng.integers(1, 6))):
                exp = tuple(int(e) for e in rng.integers(0, 4, nvars))
                terms[exp] = round(float(rng.standard_normal()), 3)
            p = Polynomial(names, terms)
            q = parse_polynomial(str(p), names)
            assert q.terms == p.terms
            assert str(q) == str(p)


class TestCalculus:
    def test_power_rule(self):
        p = parse_polynomial("x1 + x1^2*x2", ["x1", "x2"])
        assert p.differentiate(0).terms == {(0, 0): 1.0, (1, 1): 2.0}
        assert p.differentiate(1).terms == {(2, 0): 1.0}

    def test_constant_derivative(self):
        p = parse_polynomial("5", ["x1"])
        assert p.differentiate(0).is_zero()

    def test_jet_quadric(self):
        p = parse_polynomial("x1^2 + x2^2", ["x1", "x2"])
        jet = evaluate_jet(p, [1.0, 0.0])
        assert jet.value == 1.0
        assert np.allclose(jet.gradient, [2.0, 0.0])
        assert np.allclose(jet.hessian, np.diag([2.0, 2.0]))

    def test_jet_bilinear(self):
        p = parse_polynomial("x1*x2", ["x1", "x2"])
        jet = evaluate_jet(p, [3.0, 4.0])
        assert jet.value == 12.0
        assert np.allclose(jet.gradient, [4.0, 3.0])
        assert np.allclose(jet.hessian, [[0.0, 1.0], [1.0, 0.0]])

    def test_jet_broughton_point(self):
        p = parse_polynomial("x1 + x1^2*x2", ["x1", "x2"])
        jet = evaluate_jet(p, [-0.5, 1.0])
        assert jet.value == pytest.approx(-0.25)
        assert np.allclose(jet.gradient, [0.0, 0.25])
        grad_fd, _ = central_jet(p, [-0.5, 1.0])
        assert np.allclose(jet.gradient, grad_fd, atol=1e-7)

    def test_jet_matches_finite_differences_randomized(self):
        rng = np.random.default_rng(11)
        for trial in range(100):
            nvars = int(rng.integers(1, 5))
            names = [f"x{i+1}" for i in range(nvars)]
            terms = {}
            for _ in range(int(rng.integers(1, 7))):
                exp = [0] * nvars
                budget = int(rng.integers(0, 5))
                for _ in range(budget):
                    exp[int(rng.integers(0, nvars))] += 1
                terms[tuple(exp)] = float(rng.standard_normal())
            p = Polynomial(names, terms)
            pt = rng.uniform(-1.5, 1.5, nvars)
            jet = evaluate_jet(p, pt)
            grad_fd, hess_fd = central_jet(p, pt)
            scale = 1.0 + np.max(np.abs(grad_fd))
            assert np.max(np.abs(jet.gradient - grad_fd)) / scale < 1e-4
            hscale = 1.0 + np.max(np.abs(hess_fd))
            assert np.max(np.abs(jet.hessian - hess_fd)) / hscale < 1e-4
            assert np.array_equal(jet.hessian, jet.hessian.T)

    def test_dimension_mismatch(self):
        p = parse_polynomial("x1", ["x1", "x2"])
        with pytest.raises(PolynomialError):
            evaluate_jet(p, [1.0])

    def test_evaluation_is_deterministic(self):
        p = parse_polynomial("x1^3 - 2*x1*x2 + x2^2", ["x1", "x2"])
        pt = [0.1234567, -3.14159]
        assert p.evaluate(pt) == p.evaluate(pt)
        batch = p.evaluate_batch(np.array([pt, pt]))
        assert batch[0] == batch[1] == p.evaluate(pt)


class TestRestrict:
    def test_identity_section(self):
        p = parse_polynomial("x1*x2 - 1", ["x1", "x2"])
        q = restrict_to_plane(p, np.eye(2))
        assert q.terms == {(1, 1): 1.0, (0, 0): -1.0}

    def test_diagonal_line(self):
        p = parse_polynomial("x1*x2 - 1", ["x1", "x2"])
        basis = np.array([[1.0], [1.0]]) / np.sqrt(2.0)
        q = restrict_to_plane(p, basis)
        assert set(q.terms) == {(2,), (0,)}
        assert q.terms[(2,)] == pytest.approx(0.5)
        assert q.terms[(0,)] == -1.0

    def test_degenerate_section_is_zero_not_error(self):
        p = parse_polynomial("x1", ["x1", "x2"])
        q = restrict_to_plane(p, np.array([[0.0], [1.0]]))
        assert q.is_zero()

    def test_non_orthonormal_rejected(self):
        p = parse_polynomial("x1", ["x1", "x2"])
        with pytest.raises(PolynomialError, match="orthonormal"):
            restrict_to_plane(p, np.array([[1.0], [1.0]]))

    def test_commutes_with_evaluation(self):
        rng = np.random.default_rng(23)
        for _ in range(40):
            nvars = int(rng.integers(2, 5))
            l = int(rng.integers(1, nvars + 1))
            names = [f"x{i+1}" for i in range(nvars)]
            terms = {}
            for _ in range(int(rng.integers(1, 6))):
                exp = [0] * nvars
                for _ in range(int(rng.integers(0, 5))):
                    exp[int(rng.integers(0, nvars))] += 1
                terms[tuple(exp)] = float(rng.standard_normal())
            p = Polynomial(names, terms)
            B = np.linalg.qr(rng.standard_normal((nvars, l)))[0]
            q = restrict_to_plane(p, B)
            u = rng.uniform(-1, 1, l)
            assert q.evaluate(u) == pytest.approx(p.evaluate(B @ u), abs=1e-12, rel=1e-12)

    def test_degree_does_not_increase(self):
        p = parse_polynomial("x1^3*x2 + x2^2", ["x1", "x2"])
        B = np.linalg.qr(np.random.default_rng(3).standard_normal((2, 2)))[0]
        assert restrict_to_plane(p, B).degree() <= p.degree()
