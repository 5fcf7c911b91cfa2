"""Tests for the chart-level geometry kernel.

Expected values for the hand-checkable cases were computed from the
closed-form connection of the polar plane (diag(1, r^2)) and the round
unit sphere (diag(1, sin^2 theta)), which have textbook coefficients and
sectional curvature.
"""

import numpy as np
import pytest

from nonholo import geometry as geo
from nonholo.errors import DifferentiationError, NonInvertibleMetricError


def planar_coin_metric(m=1.0, J=1.0):
    return lambda q: np.diag([m, m, J])


def polar_metric(q):
    r = q[0]
    return np.diag([1.0, r * r])


def sphere_metric(q):
    theta = q[0]
    return np.diag([1.0, np.sin(theta) ** 2])


def bumpy_metric(q):
    # Smooth SPD metric with nonconstant entries: I + A^T A.
    a = 0.3 * np.array([[np.sin(q[0]), q[1]], [q[0] * q[1], np.cos(q[1])]])
    return np.eye(2) + a.T @ a


class TestFdScheme:
    def test_rejects_nonpositive_step(self):
        with pytest.raises(ValueError):
            geo.FdScheme(step=0.0)

    def test_rejects_unknown_order(self):
        with pytest.raises(ValueError):
            geo.FdScheme(order=3)


class TestChristoffel:
    def test_constant_diagonal_metric_is_flat(self):
        gamma = geo.christoffel(planar_coin_metric(1.7, 0.4), np.zeros(3))
        assert np.max(np.abs(gamma)) == 0.0

    def test_identity_metric_is_flat(self):
        gamma = geo.christoffel(lambda q: np.eye(4), np.array([0.3, -1.0, 2.0, 0.1]))
        assert np.max(np.abs(gamma)) == 0.0

    def test_polar_metric_coefficients(self):
        # Hand evaluation of the coefficient formula for diag(1, r^2) at r = 1.3:
        # the only nonzero entries are (r; theta, theta) = -r and
        # (theta; r, theta) = (theta; theta, r) = 1/r.
        r = 1.3
        gamma = geo.christoffel(polar_metric, np.array([r, 0.4]))
        expected = np.zeros((2, 2, 2))
        expected[0, 1, 1] = -r
        expected[1, 0, 1] = expected[1, 1, 0] = 1.0 / r
        assert np.max(np.abs(gamma - expected)) < 1e-9

    def test_symmetric_in_last_two_indices(self, rng):
        for _ in range(5):
            q = rng.uniform(0.5, 1.5, size=2)
            gamma = geo.christoffel(bumpy_metric, q)
            assert np.max(np.abs(gamma - gamma.transpose(0, 2, 1))) < 1e-9

    def test_metric_compatibility(self, rng):
        # d_k g_ij - Gamma^l_{ki} g_lj - Gamma^l_{kj} g_il = 0 for the
        # metric-compatible connection; both sides sampled numerically.
        for metric in (polar_metric, sphere_metric, bumpy_metric):
            for _ in range(4):
                q = rng.uniform(0.6, 1.4, size=2)
                g = geo.metric_matrix(metric, q)
                dg = geo.central_difference(metric, q)
                gamma = geo.christoffel(metric, q)
                defect = (dg - np.einsum("lki,lj->kij", gamma, g)
                          - np.einsum("lkj,il->kij", gamma, g))
                assert np.max(np.abs(defect)) < 1e-8

    def test_analytic_partials_bypass(self):
        # Zero partials forced on a constant metric must agree with FD.
        q = np.array([0.2, 0.9, -0.4])
        gamma_fd = geo.christoffel(planar_coin_metric(2.0, 3.0), q)
        gamma_an = geo.christoffel(planar_coin_metric(2.0, 3.0), q,
                                   partials=lambda p: np.zeros((3, 3, 3)))
        assert np.array_equal(gamma_fd, gamma_an)

    def test_singular_metric_raises(self):
        with pytest.raises(NonInvertibleMetricError):
            geo.christoffel(lambda q: np.diag([1.0, 0.0]), np.zeros(2))

    def test_nonfinite_field_raises(self):
        def bad(q):
            return np.diag([1.0, np.inf]) if q[0] > 0 else np.eye(2)

        with pytest.raises((DifferentiationError, NonInvertibleMetricError)):
            geo.christoffel(bad, np.zeros(2))


class TestMusicalIsomorphisms:
    def test_diagonal_inertia_sharp(self):
        # diag(m, m, J) with J = 2 sends (0, 0, 1) to (0, 0, 1/2).
        g = np.diag([1.0, 1.0, 2.0])
        assert np.allclose(geo.sharp(g, np.array([0.0, 0.0, 1.0])),
                           [0.0, 0.0, 0.5], atol=1e-15)

    def test_identity_metric_sharp_is_copy(self, rng):
        cov = rng.normal(size=5)
        assert np.allclose(geo.sharp(np.eye(5), cov), cov, atol=0.0)

    def test_small_diagonal_solve(self):
        # diag(2, 3) applied inversely to (4, 9) gives (2, 3).
        assert np.allclose(geo.sharp(np.diag([2.0, 3.0]), np.array([4.0, 9.0])),
                           [2.0, 3.0], atol=1e-15)

    def test_flat_after_sharp_is_identity(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 6))
            a = rng.normal(size=(n, n))
            g = a @ a.T + n * np.eye(n)
            cov = rng.normal(size=n)
            assert np.max(np.abs(geo.flat(g, geo.sharp(g, cov)) - cov)) < 1e-12

    def test_singular_matrix_raises(self):
        with pytest.raises(NonInvertibleMetricError):
            geo.sharp(np.zeros((2, 2)), np.ones(2))


class TestCovariantAcceleration:
    def test_zero_coefficients_return_vdot(self, rng):
        vdot = rng.normal(size=3)
        out = geo.covariant_acceleration(np.zeros((3, 3, 3)), rng.normal(size=3), vdot)
        assert np.array_equal(out, vdot)

    def test_zero_velocity_returns_vdot(self, rng):
        gamma = rng.normal(size=(3, 3, 3))
        vdot = rng.normal(size=3)
        assert np.allclose(geo.covariant_acceleration(gamma, np.zeros(3), vdot), vdot)

    def test_knife_edge_coefficients_at_zero_heading(self):
        # Constrained-connection coefficients of the rolling coin at
        # q3 = 0: the only surviving quadratic-form entry for v=(1,0,1)
        # is the (2; 1,3) coefficient -cos(0) = -1, so the covariant
        # acceleration with vdot = 0 is (0, -1, 0).
        gamma = np.zeros((3, 3, 3))
        q3 = 0.0
        gamma[0, 2, 0] = np.sin(2 * q3)
        gamma[0, 2, 1] = -np.cos(2 * q3)
        gamma[1, 2, 0] = -np.cos(2 * q3)
        gamma[1, 2, 1] = -np.sin(2 * q3)
        out = geo.covariant_acceleration(gamma, np.array([1.0, 0.0, 1.0]), np.zeros(3))
        assert np.allclose(out, [0.0, -1.0, 0.0], atol=1e-15)

    def test_dimension_mismatch_raises(self):
        with pytest.raises(ValueError):
            geo.covariant_acceleration(np.zeros((2, 2, 2)), np.zeros(3), np.zeros(3))


class TestCurvature:
    def test_zero_field_gives_zero_tensor(self):
        r = geo.curvature(lambda q: np.zeros((3, 3, 3)), np.zeros(3))
        assert np.max(np.abs(r)) == 0.0

    def test_constant_metric_is_flat(self):
        gamma_field = lambda q: geo.christoffel(planar_coin_metric(2.0, 0.5), q)
        r = geo.curvature(gamma_field, np.array([0.1, -0.2, 0.9]))
        assert np.max(np.abs(r)) < 1e-12

    def test_unit_sphere_sectional_curvature(self):
        q = np.array([0.9, 0.3])
        gamma_field = lambda p: geo.christoffel(sphere_metric, p)
        r = geo.curvature(gamma_field, q)
        g = sphere_metric(q)
        # K = g(R(e1, e2) e2, e1) / (g11 g22 - g12^2) = 1 on the unit sphere.
        num = np.einsum("l,l->", r[:, 0, 1, 1], g[:, 0])
        den = g[0, 0] * g[1, 1] - g[0, 1] ** 2
        assert abs(num / den - 1.0) < 1e-4

    def test_antisymmetry_in_first_two_lower_indices(self, rng):
        q = rng.uniform(0.6, 1.2, size=2)
        r = geo.curvature(lambda p: geo.christoffel(bumpy_metric, p), q)
        assert np.max(np.abs(r + r.transpose(0, 2, 1, 3))) < 1e-6

    def test_first_bianchi_for_torsion_free_input(self, rng):
        for metric in (sphere_metric, bumpy_metric):
            q = rng.uniform(0.7, 1.3, size=2)
            r = geo.curvature(lambda p: geo.christoffel(metric, p), q)
            cyc = r + r.transpose(0, 2, 3, 1) + r.transpose(0, 3, 1, 2)
            assert np.max(np.abs(cyc)) < 1e-5


class TestScalarDerivative:
    def test_matches_gradient_dot_direction(self, rng):
        f = lambda q: float(np.sin(q[0]) * q[1] ** 2)
        q = np.array([0.4, 1.2])
        x = rng.normal(size=2)
        expected = np.cos(q[0]) * q[1] ** 2 * x[0] + 2 * np.sin(q[0]) * q[1] * x[1]
        assert abs(geo.scalar_derivative(f, q, x) - expected) < 1e-8
