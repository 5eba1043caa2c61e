"""Rabier numbers, equivalent characterizations, frames, and the transport flow."""

import numpy as np
import pytest

from infinitas.familyspec import hypersurface_family, map_graph_family
from infinitas.rabier import (
    FlowBlockedError,
    SingularPointError,
    check_rabier_equivalences,
    delta_distance,
    fiber_rabier,
    fiber_tangent_frame,
    malgrange_functional,
    nu_of_graph_projection,
    rabier_number,
    right_inverse,
    spherical_deviation,
    transport_fiber,
)


def brute_force_nu(A, samples=200000, seed=0):
    """Dense-grid oracle for min |A^T phi| over unit covectors, with refinement."""
    A = np.atleast_2d(np.asarray(A, float))
    q = A.shape[0]
    if q == 1:
        return float(np.linalg.norm(A[0]))
    if q == 2:
        angles = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
        phis = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    else:
        rng = np.random.default_rng(seed)
        g = rng.standard_normal((samples, q))
        phis = g / np.linalg.norm(g, axis=1, keepdims=True)
    vals = np.linalg.norm(phis @ A, axis=1)
    return float(vals.min())


class TestRabierNumber:
    def test_identity(self):
        assert rabier_number(np.eye(2)) == pytest.approx(1.0)

    def test_single_row_is_norm(self):
        assert rabier_number(np.array([[3.0, 4.0]])) == pytest.approx(5.0)

    def test_rank_deficient_is_zero(self):
        assert rabier_number(np.array([[1.0, 2.0], [2.0, 4.0]])) == pytest.approx(0.0, abs=1e-12)

    def test_tall_matrix_cannot_be_surjective(self):
        assert rabier_number(np.array([[1.0], [0.0]])) == 0.0

    def test_diagonal_against_brute_force(self):
        A = np.array([[2.0, 0.0, 0.0], [0.0, 3.0, 0.0]])
        assert rabier_number(A) == pytest.approx(2.0)
        assert rabier_number(A) == pytest.approx(brute_force_nu(A), abs=1e-6)

    def test_homogeneity(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            q = int(rng.integers(1, 5))
            p = int(rng.integers(q, 7))
            A = rng.standard_normal((q, p))
            lam = float(rng.standard_normal())
            lhs = rabier_number(lam * A)
            rhs = abs(lam) * rabier_number(A)
            assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)

    def test_restriction_monotonicity(self):
        # full value is attained on the orthogonal complement of the kernel and
        # dominates the value of any restriction
        rng = np.random.default_rng(6)
        for _ in range(100):
            q = int(rng.integers(1, 4))
            p = int(rng.integers(q + 1, 7))
            A = rng.standard_normal((q, p))
            _, sv, vt = np.linalg.svd(A)
            row_space = vt[:q].T
            assert rabier_number(A @ row_space) == pytest.approx(rabier_number(A), abs=1e-8)
            k = int(rng.integers(1, p + 1))
            P = np.linalg.qr(rng.standard_normal((p, k)))[0]
            assert rabier_number(A @ P) <= rabier_number(A) + 1e-8


class TestEquivalences:
    def test_identity_all_equal(self):
        rep = check_rabier_equivalences(np.eye(2))
        assert rep["discrepancy"] <= 1e-6
        assert rep["singular_distance"] == pytest.approx(1.0)

    def test_rank_one_boundary(self):
        rep = check_rabier_equivalences(np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert rep["discrepancy"] <= 1e-6
        assert rep["inf_adjoint"] == pytest.approx(0.0, abs=1e-6)

    def test_random_2x3(self):
        rng = np.random.default_rng(9)
        worst = 0.0
        for i in range(200):
            A = rng.standard_normal((2, 3))
            rep = check_rabier_equivalences(A, seed=i)
            worst = max(worst, rep["discrepancy"])
        assert worst <= 1e-4


class TestGraphProjection:
    def test_zero_maps_to_zero(self):
        assert nu_of_graph_projection(np.zeros((1, 2))) == 0.0

    def test_unit_nu(self):
        # nu(A) = 1 for A = (1, 0); projection value 1/sqrt(2)
        assert nu_of_graph_projection(np.array([[1.0, 0.0]])) == pytest.approx(1 / np.sqrt(2))

    def test_against_graph_sampling(self):
        rng = np.random.default_rng(13)
        for trial in range(20):
            A = rng.standard_normal((2, 3))
            # restrict to the row space so the graph has no flat kernel directions
            _, _, vt = np.linalg.svd(A)
            N = vt[:2].T      # orthonormal basis of the row space
            An = A @ N
            samples = rng.standard_normal((120000, 2))
            samples /= np.linalg.norm(samples, axis=1, keepdims=True)
            imgs = samples @ An.T
            norms2 = 1.0 + np.sum(imgs ** 2, axis=1)
            vals = np.linalg.norm(imgs, axis=1) / np.sqrt(norms2)
            brute = float(vals.min())
            assert nu_of_graph_projection(A) == pytest.approx(brute, abs=1e-4)


class TestDeltaDistance:
    def test_inside(self):
        E = np.array([[1.0], [0.0]])
        assert delta_distance(np.array([1.0, 0.0]), E) == pytest.approx(0.0)

    def test_orthogonal(self):
        E = np.array([[0.0], [1.0]])
        assert delta_distance(np.array([1.0, 0.0]), E) == pytest.approx(1.0)

    def test_diagonal(self):
        E = np.array([[1.0], [0.0]])
        u = np.array([1.0, 1.0]) / np.sqrt(2)
        assert delta_distance(u, E) == pytest.approx(1 / np.sqrt(2))

    def test_brute_force_maximization(self):
        # delta is max |<u, v>| over unit v orthogonal to E
        rng = np.random.default_rng(31)
        for _ in range(20):
            n = int(rng.integers(2, 6))
            k = int(rng.integers(1, n))
            E = np.linalg.qr(rng.standard_normal((n, k)))[0]
            u = rng.standard_normal(n)
            u /= np.linalg.norm(u)
            vs = rng.standard_normal((20000, n))
            vs -= (vs @ E) @ E.T
            norms = np.linalg.norm(vs, axis=1, keepdims=True)
            vs = vs[norms[:, 0] > 1e-8] / norms[norms[:, 0] > 1e-8]
            brute = float(np.abs(vs @ u).max())
            assert delta_distance(u, E) == pytest.approx(brute, abs=1e-3)

    def test_non_unit_rejected(self):
        with pytest.raises(ValueError):
            delta_distance(np.array([2.0, 0.0]), np.array([[1.0], [0.0]]))


class TestFrames:
    def test_hypersurface_frame(self, hyperbola_family):
        w = np.array([1.0, 1.0, 1.0])
        frame = fiber_tangent_frame(hyperbola_family, w)
        normal = frame.normal[:, 0]
        expected = np.array([1.0, 1.0, -1.0]) / np.sqrt(3.0)
        assert abs(abs(normal @ expected) - 1.0) < 1e-10
        assert np.allclose(frame.tangent.T @ frame.tangent, np.eye(2), atol=1e-10)
        assert np.max(np.abs(normal @ frame.tangent)) < 1e-10

    def test_graph_frame(self, linear_graph):
        w = linear_graph.lift(np.array([0.0, 0.0]))
        frame = fiber_tangent_frame(linear_graph, w)
        span = frame.tangent @ frame.tangent.T
        e1 = np.array([1.0, 0.0, 1.0]) / np.sqrt(2)
        e2 = np.array([0.0, 1.0, 0.0])
        expected = np.outer(e1, e1) + np.outer(e2, e2)
        assert np.allclose(span, expected, atol=1e-10)

    def test_singular_point_rejected(self):
        spec = hypersurface_family("x1^2 + x2^2 - y1^2", n=2)
        with pytest.raises(SingularPointError):
            fiber_tangent_frame(spec, np.zeros(3))


class TestFiberRabier:
    def test_linear_graph_value(self, linear_graph):
        for x in ([0.0, 0.0], [3.0, -2.0], [10.0, 5.0]):
            w = linear_graph.lift(np.array(x))
            assert fiber_rabier(linear_graph, w) == pytest.approx(1 / np.sqrt(2), abs=1e-10)

    def test_hypersurface_matches_graph(self):
        spec = hypersurface_family("y1 - x1", n=2)
        w = np.array([2.0, 7.0, 2.0])
        assert fiber_rabier(spec, w) == pytest.approx(1 / np.sqrt(2), abs=1e-10)

    def test_circle_graph_formula(self, circle_graph):
        for r in (0.5, 1.0, 2.0):
            x = np.array([r, 0.0])
            w = circle_graph.lift(x)
            expected = 2 * r / np.sqrt(1 + 4 * r * r)
            assert fiber_rabier(circle_graph, w) == pytest.approx(expected, abs=1e-10)

    def test_matches_graph_projection_formula(self, broughton_graph):
        rng = np.random.default_rng(17)
        for _ in range(25):
            x = rng.uniform(-2, 2, 2)
            w = broughton_graph.lift(x)
            J = broughton_graph.map_jacobian(x)
            assert fiber_rabier(broughton_graph, w) == pytest.approx(
                nu_of_graph_projection(J), abs=1e-8)


class TestMalgrange:
    def test_linear_at_origin(self, linear_graph):
        w = linear_graph.lift(np.zeros(2))
        assert malgrange_functional(linear_graph, w) == pytest.approx(1 / np.sqrt(2))

    def test_linear_growth(self, linear_graph):
        x = np.array([0.0, 10.0])
        w = linear_graph.lift(x)
        assert malgrange_functional(linear_graph, w) == pytest.approx(11 / np.sqrt(2))

    def test_broughton_witness_decay(self, broughton_graph):
        # along x = (-1/(2t), t) the functional decays like 1/(4t);
        # at finite t the exact leading form is (1+t)/(4t^2)
        prev = np.inf
        for t in (10.0, 100.0, 1000.0):
            x = np.array([-0.5 / t, t])
            w = broughton_graph.lift(x)
            m = malgrange_functional(broughton_graph, w)
            assert m < prev
            assert m == pytest.approx((1 + t) / (4 * t * t), rel=0.01)
            assert m == pytest.approx(1 / (4 * t), rel=0.2)
            prev = m


class TestSphericalDeviation:
    def test_product_geometry(self, linear_graph):
        w = linear_graph.lift(np.array([0.0, 50.0]))
        assert spherical_deviation(linear_graph, w) == pytest.approx(0.0, abs=1e-10)

    def test_matches_brute_force(self, circle_graph):
        from infinitas.rabier import fiber_direction_frame
        rng = np.random.default_rng(41)
        for r in (0.7, 1.3):
            x = np.array([r, 0.0])
            w = circle_graph.lift(x)
            E = fiber_direction_frame(circle_graph, w)
            u = w / np.linalg.norm(w)
            vs = rng.standard_normal((20000, 3))
            vs -= (vs @ E) @ E.T
            vs /= np.linalg.norm(vs, axis=1, keepdims=True)
            brute = float(np.abs(vs @ u).max())
            assert spherical_deviation(circle_graph, w) == pytest.approx(brute, abs=1e-3)

    def test_broughton_regular_fiber_decays(self, broughton_graph):
        # on the fiber over 1 the deviation goes to zero as the sphere radius grows
        values = []
        for radius in (10.0, 100.0, 1000.0):
            # solve for the branch point with x2 = radius: x1 + x1^2 * radius = 1
            coeffs = [radius, 1.0, -1.0]
            roots = np.roots(coeffs)
            x1 = float(min((r.real for r in roots if abs(r.imag) < 1e-12 and r.real > 0)))
            w = broughton_graph.lift(np.array([x1, radius]))
            values.append(spherical_deviation(broughton_graph, w))
        assert values[0] > values[1] > values[2]
        assert values[2] < 0.05


class TestRightInverse:
    def test_unit_row(self):
        V = right_inverse(np.array([[1.0, 0.0]]))
        assert np.allclose(V, [[1.0], [0.0]])

    def test_closed_form(self):
        A = np.array([[3.0, 4.0]])
        V = right_inverse(A)
        assert np.allclose(V, A.T / 25.0)
        assert (A @ V)[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_rank_deficient_rejected(self):
        with pytest.raises(ValueError):
            right_inverse(np.array([[1.0, 2.0], [2.0, 4.0]]))

    def test_right_inverse_property(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            q = int(rng.integers(1, 4))
            p = int(rng.integers(q, 6))
            A = rng.standard_normal((q, p))
            if rabier_number(A) < 1e-3:
                continue
            V = right_inverse(A)
            assert np.max(np.abs(A @ V - np.eye(q))) < 1e-8


class TestTransport:
    def test_translation_flow(self, linear_graph):
        res = transport_fiber(linear_graph, np.array([0.0, 5.0]), np.array([2.0]))
        assert np.allclose(res.endpoint, [2.0, 5.0], atol=1e-8)
        assert res.max_identity_residual <= 1e-6

    def test_radial_flow_circle(self, circle_graph):
        res = transport_fiber(circle_graph, np.array([1.0, 0.0]), np.array([4.0]))
        assert np.linalg.norm(res.endpoint) == pytest.approx(2.0, abs=1e-6)
        # stays on the ray through the start
        assert abs(res.endpoint[1]) < 1e-8
        assert res.max_identity_residual <= 1e-6

    def test_broughton_transport(self, broughton_graph):
        res = transport_fiber(broughton_graph, np.array([1.0, 0.0]), np.array([1.5]))
        g = broughton_graph.map_values(res.endpoint)[0]
        assert g == pytest.approx(1.5, abs=1e-6)
        assert res.max_identity_residual <= 1e-6

    def test_blocked_at_critical_segment(self, product_graph):
        # crossing the critical value 0 of x1*x2 from  c=1 to -1 stalls the flow
        with pytest.raises(FlowBlockedError):
            transport_fiber(product_graph, np.array([1.0, 1.0]), np.array([-1.0]))
