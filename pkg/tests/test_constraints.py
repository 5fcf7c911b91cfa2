"""Tests for distribution bases, projectors, and the constrained connection."""

import numpy as np
import pytest

from nonholo import constraints as con
from nonholo import geometry as geo
from nonholo.coin import CoinParams, build_coin
from nonholo.dynamics import MechanicalSystem
from nonholo.errors import DegenerateConstraintError


def knife_constraint(q):
    return np.array([np.sin(q[2]), -np.cos(q[2]), 0.0])


def bare_coin(m=1.0, J=1.0):
    """Coin data without any overrides: exercises the generic path."""
    return MechanicalSystem(
        n=3, metric=lambda q: np.diag([m, m, J]),
        constraints=con.ConstraintSet((knife_constraint,)),
        actuated=(lambda q: np.array([np.cos(q[2]), np.sin(q[2]), 0.0]),
                  lambda q: np.array([0.0, 0.0, 1.0])),
        unactuated=(lambda q: np.array([-np.sin(q[2]), np.cos(q[2]), 0.0]),))


def curved_constrained_system():
    """Curved metric plus the heading constraint: nonzero constrained curvature."""
    return MechanicalSystem(
        n=3, metric=lambda q: np.diag([1.0, 1.0 + q[0] ** 2, 1.0]),
        constraints=con.ConstraintSet((knife_constraint,)),
        actuated=(lambda q: np.array([1.0, 0.0, 0.0]),
                  lambda q: np.array([0.0, 0.0, 1.0])),
        unactuated=(lambda q: np.array([0.0, 1.0, 0.0]),))


def random_constrained_system(rng, n=5, m=2):
    rows = rng.normal(size=(m, n))
    a = rng.normal(size=(n, n))
    g = a @ a.T + n * np.eye(n)
    fields = tuple((lambda r: (lambda q: r + 0.1 * np.sin(q[0]) * r))(rows[i])
                   for i in range(m))
    return MechanicalSystem(
        n=n, metric=lambda q: g.copy(), constraints=con.ConstraintSet(fields),
        actuated=tuple((lambda i: (lambda q: np.eye(n)[i]))(i) for i in range(n)),
        unactuated=())


class TestDistributionBasis:
    def test_coin_span_at_zero_heading(self):
        sysm = bare_coin()
        basis = con.basis_at(sysm, np.zeros(3))
        # Both (0,0,1) and (1,0,0) must lie in the span of the basis rows.
        for vec in (np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0])):
            coeff, *_ = np.linalg.lstsq(basis.x.T, vec, rcond=None)
            assert np.linalg.norm(basis.x.T @ coeff - vec) < 1e-12

    def test_empty_constraints_give_coordinate_basis(self):
        basis = con.distribution_basis(con.ConstraintSet(()), lambda q: np.eye(4),
                                       np.zeros(4))
        assert np.array_equal(basis.x, np.eye(4))
        assert np.array_equal(basis.dual, np.eye(4))
        assert basis.complement.shape == (0, 4)

    def test_random_constraints_annihilated(self, rng):
        sysm = random_constrained_system(rng)
        for _ in range(5):
            q = rng.normal(size=5)
            basis = con.basis_at(sysm, q)
            omega = sysm.constraints.matrix(q)
            assert np.max(np.abs(omega @ basis.x.T)) < 1e-10
            pairing = basis.dual @ basis.x.T
            assert abs(np.linalg.det(pairing)) > 1e-8

    def test_dual_pairs_to_identity_diagonal(self, rng):
        sysm = random_constrained_system(rng)
        basis = con.basis_at(sysm, rng.normal(size=5))
        pairing = basis.dual @ basis.x.T
        assert np.allclose(np.diag(pairing), 1.0, atol=1e-12)

    def test_dual_annihilates_metric_complement(self, rng):
        # The dual covectors vanish on the metric-orthogonal complement of
        # the distribution, which is what multiplier coefficients require.
        sysm = random_constrained_system(rng)
        q = rng.normal(size=5)
        basis = con.basis_at(sysm, q)
        g = con.metric_at(sysm, q)
        pair = con.projectors(basis, g)
        z = pair.q @ rng.normal(size=5)  # arbitrary vector in the complement
        assert np.max(np.abs(basis.dual @ z)) < 1e-10

    def test_rank_deficient_constraints_raise(self):
        dup = con.ConstraintSet((knife_constraint, knife_constraint))
        with pytest.raises(DegenerateConstraintError):
            con.distribution_basis(dup, lambda q: np.eye(3), np.zeros(3))

    def test_reference_alignment_is_continuous(self, rng):
        sysm = random_constrained_system(rng)
        q = rng.normal(size=5)
        basis = con.basis_at(sysm, q)
        for h in (1e-4, 1e-6):
            nearby = con.basis_at(sysm, q + h, ref=basis)
            assert np.max(np.abs(nearby.x - basis.x)) < 50 * h + 1e-9


class TestProjectors:
    def test_coin_projector_values(self):
        sysm = bare_coin()
        q = np.array([0.0, 0.0, np.pi / 4])
        pair = con.projectors(con.basis_at(sysm, q), con.metric_at(sysm, q))
        assert np.allclose(pair.p[:2, :2], 0.5, atol=1e-12)
        assert abs(pair.p[2, 2] - 1.0) < 1e-12
        q0 = np.zeros(3)
        pair0 = con.projectors(con.basis_at(sysm, q0), con.metric_at(sysm, q0))
        assert np.allclose(pair0.p, np.diag([1.0, 0.0, 1.0]), atol=1e-12)

    def test_no_constraints_give_identity(self):
        basis = con.distribution_basis(con.ConstraintSet(()), lambda q: np.eye(3),
                                       np.zeros(3))
        pair = con.projectors(basis, np.diag([2.0, 3.0, 4.0]))
        assert np.array_equal(pair.p, np.eye(3))
        assert np.max(np.abs(pair.q)) == 0.0

    def test_projector_algebra(self, rng):
        for sysm in (bare_coin(2.0, 0.7), random_constrained_system(rng)):
            for _ in range(4):
                q = rng.normal(size=sysm.n)
                g = con.metric_at(sysm, q)
                pair = con.projectors(con.basis_at(sysm, q), g)
                assert np.max(np.abs(pair.p @ pair.p - pair.p)) < 1e-10
                assert np.max(np.abs(pair.q @ pair.q - pair.q)) < 1e-10
                assert np.max(np.abs(pair.p + pair.q - np.eye(sysm.n))) < 1e-10
                assert np.max(np.abs(g @ pair.p - pair.p.T @ g)) < 1e-10
                omega = sysm.constraints.matrix(q)
                z = rng.normal(size=sysm.n)
                if omega.shape[0]:
                    assert np.max(np.abs(omega @ (pair.p @ z))) < 1e-10


class TestProjectorDerivatives:
    def test_coin_heading_derivative(self):
        # d/dq3 of the complement projector's (1,1) entry is sin(2 q3).
        sysm = bare_coin()
        for q3 in (0.3, 1.1, 2.0):
            pair = con.projector_derivatives(sysm, np.array([0.0, 0.0, q3]))
            assert abs(pair.nabla_q[2, 0, 0] - np.sin(2 * q3)) < 1e-8
            assert np.max(np.abs(pair.nabla_p + pair.nabla_q)) == 0.0

    def test_analytic_override_matches_fd(self):
        coin_an = build_coin(CoinParams(1.3, 0.6))
        coin_fd = build_coin(CoinParams(1.3, 0.6), analytic=False)
        q = np.array([0.4, -0.2, 0.9])
        pa = con.projector_derivatives(coin_an, q)
        pf = con.projector_derivatives(coin_fd, q)
        assert np.max(np.abs(pa.p - pf.p)) < 1e-12
        assert np.max(np.abs(pa.nabla_q - pf.nabla_q)) < 1e-8

    def test_constant_constraints_give_zero(self):
        sysm = MechanicalSystem(
            n=3, metric=lambda q: np.eye(3),
            constraints=con.ConstraintSet((lambda q: np.array([0.0, 1.0, 0.0]),)),
            actuated=(lambda q: np.eye(3)[0], lambda q: np.eye(3)[2]),
            unactuated=(lambda q: np.eye(3)[1],))
        pair = con.projector_derivatives(sysm, np.array([0.2, 0.5, -1.0]))
        assert np.max(np.abs(pair.nabla_q)) < 1e-12

    def test_unconstrained_gives_zero(self, rng):
        sysm = random_constrained_system(rng, n=3, m=0)
        pair = con.projector_derivatives(sysm, rng.normal(size=3))
        assert np.max(np.abs(pair.nabla_q)) < 1e-12


class TestNonholonomicConnection:
    def test_coin_quadratic_form(self, rng):
        sysm = bare_coin()
        for q3 in (0.0, np.pi / 4, 1.7):
            q = np.array([0.5, -0.5, q3])
            gb = con.nonholonomic_christoffel(sysm, q)
            v = rng.normal(size=3)
            c2, s2 = np.cos(2 * q3), np.sin(2 * q3)
            expected = np.array([v[2] * (v[0] * s2 - v[1] * c2),
                                 v[2] * (-v[0] * c2 - v[1] * s2), 0.0])
            assert np.max(np.abs(np.einsum("ijk,j,k->i", gb, v, v) - expected)) < 1e-8

    def test_no_constraints_reduce_to_levi_civita(self, rng):
        sysm = MechanicalSystem(
            n=2, metric=lambda q: np.diag([1.0, q[0] ** 2 + 1.0]),
            constraints=con.ConstraintSet(()),
            actuated=(lambda q: np.eye(2)[0], lambda q: np.eye(2)[1]))
        q = rng.uniform(0.5, 1.5, size=2)
        gb = con.nonholonomic_christoffel(sysm, q)
        gamma = con.christoffel_at(sysm, q)
        # Differencing the identity projector leaves only rounding noise
        # amplified by the step, a few 1e-12.
        assert np.max(np.abs(gb - gamma)) < 1e-10

    def test_stability_of_distribution(self, rng):
        # Fields with values in the distribution stay in it under the
        # constrained covariant derivative.
        sysm = bare_coin()
        q = rng.normal(size=3)
        gb = con.nonholonomic_christoffel(sysm, q)

        def y_field(p):
            basis = con.basis_at(sysm, p)
            return np.sin(p[0]) * basis.x[0] + np.cos(p[2]) * basis.x[1]

        x = rng.normal(size=3)
        dy = geo.central_difference(y_field, q)
        result = np.einsum("j,ji->i", x, dy) + np.einsum("ijk,j,k->i", gb, x, y_field(q))
        omega = sysm.constraints.matrix(q)
        assert np.max(np.abs(omega @ result)) < 1e-7

    def test_scalar_derivative_shares_code_path(self):
        assert con.nonholonomic_scalar_derivative is geo.scalar_derivative


class TestOneFormDerivative:
    def test_unconstrained_equals_plain_transport(self, rng):
        sysm = MechanicalSystem(
            n=2, metric=lambda q: np.diag([1.0, q[0] ** 2 + 1.0]),
            constraints=con.ConstraintSet(()),
            actuated=(lambda q: np.eye(2)[0], lambda q: np.eye(2)[1]))
        q = rng.uniform(0.5, 1.5, size=2)
        x = rng.normal(size=2)
        lam = rng.normal(size=2)
        dlam = rng.normal(size=2)
        got = con.nonholonomic_oneform_derivative(sysm, q, x, lam, dlam)
        gamma = con.christoffel_at(sysm, q)
        expected = dlam - np.einsum("mjk,j,m->k", gamma, x, lam)
        assert np.max(np.abs(got - expected)) < 1e-10

    def test_duality_with_vector_derivative(self, rng):
        # Independent route: differentiate the pairing lambda(Z) and the
        # field Q Z directly, using the product form of the constrained
        # derivative, and compare with the one-form formula.
        sysm = bare_coin()
        q = rng.normal(size=3)

        def lam_field(p):
            basis = con.basis_at(sysm, p)
            return basis.dual[0]

        def z_field(p):
            return np.array([np.sin(p[2]), p[0] * p[1], np.cos(p[0])])

        x = rng.normal(size=3)
        lam = lam_field(q)
        dlam = np.einsum("j,jk->k", x, geo.central_difference(lam_field, q))
        lhs = con.nonholonomic_oneform_derivative(sysm, q, x, lam, dlam)

        gamma = con.christoffel_at(sysm, q)
        pairq = con.projectors(con.basis_at(sysm, q), con.metric_at(sysm, q))

        def qz_field(p):
            pq = con.projectors(con.basis_at(sysm, p), con.metric_at(sysm, p)).q
            return pq @ z_field(p)

        dz = geo.central_difference(z_field, q)
        nabla_x_z = (np.einsum("j,ji->i", x, dz)
                     + np.einsum("ijk,j,k->i", gamma, x, z_field(q)))
        dqz = geo.central_difference(qz_field, q)
        nabla_x_qz = (np.einsum("j,ji->i", x, dqz)
                      + np.einsum("ijk,j,k->i", gamma, x, qz_field(q)))
        bar_nabla_x_z = pairq.p @ nabla_x_z + nabla_x_qz

        scalar_rate = geo.scalar_derivative(lambda p: float(lam_field(p) @ z_field(p)),
                                            q, x)
        rhs_pairing = scalar_rate - float(lam @ bar_nabla_x_z)
        assert abs(float(lhs @ z_field(q)) - rhs_pairing) < 1e-6

    def test_constant_oneform_zero_heading_rate(self, rng):
        # Constant covector, flat connection, direction without heading
        # component: every term of the constrained derivative vanishes.
        sysm = bare_coin()
        q = rng.normal(size=3)
        x = np.array([0.7, -0.3, 0.0])
        lam = rng.normal(size=3)
        got = con.nonholonomic_oneform_derivative(sysm, q, x, lam, np.zeros(3))
        assert np.max(np.abs(got)) < 1e-10


class TestNonholonomicCurvature:
    def test_unconstrained_equals_plain_curvature(self):
        sysm = MechanicalSystem(
            n=2, metric=lambda q: np.diag([1.0, np.sin(q[0]) ** 2]),
            constraints=con.ConstraintSet(()),
            actuated=(lambda q: np.eye(2)[0], lambda q: np.eye(2)[1]))
        q = np.array([0.9, 0.3])
        assert np.max(np.abs(con.nonholonomic_curvature(sysm, q)
                             - con.curvature_at(sysm, q))) < 1e-9

    def test_coin_direct_vs_correction(self):
        sysm = bare_coin()
        for q3 in np.linspace(0.1, 2.9, 8):
            q = np.array([0.2, -0.1, q3])
            direct = con.nonholonomic_curvature(sysm, q)
            corr = con.nonholonomic_curvature_correction(sysm, q)
            assert np.max(np.abs(direct - corr)) < 1e-5

    def test_curved_system_direct_vs_correction(self):
        # On this system the constrained curvature is order one, so the
        # two independent evaluations are a meaningful cross-check.
        sysm = curved_constrained_system()
        for q in (np.array([0.3, -0.2, 0.5]), np.array([-0.6, 0.4, 1.2])):
            direct = con.nonholonomic_curvature(sysm, q)
            corr = con.nonholonomic_curvature_correction(sysm, q)
            assert np.max(np.abs(direct)) > 0.5
            assert np.max(np.abs(direct - corr)) < 1e-5

    def test_constant_data_flat(self):
        sysm = MechanicalSystem(
            n=3, metric=lambda q: np.eye(3),
            constraints=con.ConstraintSet((lambda q: np.array([0.0, 1.0, 0.0]),)),
            actuated=(lambda q: np.eye(3)[0], lambda q: np.eye(3)[2]),
            unactuated=(lambda q: np.eye(3)[1],))
        r = con.nonholonomic_curvature(sysm, np.array([0.1, 0.2, 0.3]))
        assert np.max(np.abs(r)) < 1e-10


class TestBasisPartials:
    def test_fd_dual_partials_match_analytic(self):
        coin_an = build_coin(CoinParams())
        coin_fd = build_coin(CoinParams(), analytic=False)
        q = np.array([0.3, 0.1, 1.2])
        analytic = con.basis_with_partials(coin_an, q)
        generic = con.basis_with_partials(coin_fd, q)
        assert np.max(np.abs(analytic.dual - generic.dual)) < 1e-12
        assert np.max(np.abs(analytic.dual_partials - generic.dual_partials)) < 1e-8
