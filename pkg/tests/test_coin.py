"""Fixture-model tests: closed forms, typo policy, cross-form equivalences."""

import numpy as np
import pytest

from nonholo import constraints as con
from nonholo import dynamics as dyn
from nonholo import geometry as geo
from nonholo.coin import (CoinParams, FixtureComponent, build_coin,
                          coin_hamiltonian_spec, expected_eom,
                          expected_eom_unsimplified, expected_projector,
                          extremal_family, extremal_family_printed, fixture_check,
                          printed_drive_oneform, random_constrained_state)


class TestParams:
    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            CoinParams(0.0, 1.0)
        with pytest.raises(ValueError):
            CoinParams(1.0, -2.0)

    def test_unit_params_identity_metric(self):
        sysm = build_coin(CoinParams(1.0, 1.0))
        assert np.array_equal(sysm.metric(np.zeros(3)), np.eye(3))


class TestModelData:
    def test_constraint_at_zero_heading(self):
        sysm = build_coin(CoinParams())
        assert np.allclose(sysm.constraints.matrix(np.zeros(3))[0], [0.0, -1.0, 0.0],
                           atol=1e-15)

    def test_unactuated_annihilates_drive_field(self):
        sysm = build_coin(CoinParams(1.7, 0.3))
        for q3 in np.linspace(0.0, 3.0, 7):
            q = np.array([0.0, 0.0, q3])
            y = dyn.input_vector_fields(sysm, q)
            ftilde = sysm.unactuated_matrix(q)
            assert abs(float(ftilde[0] @ y[0])) < 1e-14

    def test_dual_basis_orthogonal_to_constraint(self):
        sysm = build_coin(CoinParams())
        for q3 in np.linspace(0.0, 3.0, 7):
            q = np.array([0.0, 0.0, q3])
            basis = con.basis_at(sysm, q)
            omega = sysm.constraints.matrix(q)[0]
            assert np.max(np.abs(basis.dual @ omega)) < 1e-12


class TestTypoPolicy:
    def test_corrected_drive_oneform_matches_raised_field(self):
        # The raised drive field has components (cos/m, sin/m, 0); only
        # the corrected co-vector (cos, sin, 0) reproduces it.
        sysm = build_coin(CoinParams(2.0, 1.0))
        q = np.array([0.0, 0.0, 0.9])
        y1 = dyn.input_vector_fields(sysm, q)[0]
        assert np.allclose(y1, [np.cos(0.9) / 2, np.sin(0.9) / 2, 0.0], atol=1e-14)

    def test_printed_drive_oneform_fails(self):
        q3 = 0.9
        g = np.diag([2.0, 2.0, 1.0])
        y_printed = geo.sharp(g, printed_drive_oneform(q3))
        y_expected = np.array([np.cos(q3) / 2, np.sin(q3) / 2, 0.0])
        assert np.max(np.abs(y_printed - y_expected)) > 0.05

    def test_corrected_multiplier_family_satisfies_rates(self):
        t = np.linspace(0.0, 2.0, 21)
        mu0 = np.array([0.7, -0.4])
        eta0 = np.array([0.2, 1.1])
        mu, eta = extremal_family(t, mu0, eta0)
        # eta' = -mu and mu' = 0, checked against exact differences.
        dt = t[1] - t[0]
        deta = (eta[2:] - eta[:-2]) / (2 * dt)
        assert np.max(np.abs(deta + mu[1:-1])) < 1e-12
        assert np.max(np.abs(mu - mu0)) == 0.0

    def test_printed_multiplier_family_fails(self):
        t = np.linspace(0.0, 2.0, 21)
        mu0 = np.array([0.0, -0.4])  # nonzero spin multiplier exposes the typo
        eta0 = np.array([0.2, 1.1])
        _, eta_printed = extremal_family_printed(t, mu0, eta0)
        dt = t[1] - t[0]
        deta = (eta_printed[2:] - eta_printed[:-2]) / (2 * dt)
        assert np.max(np.abs(deta + mu0)) > 0.1


class TestFormEquivalence:
    def test_raw_and_simplified_accelerations_agree_on_constraint(self, rng):
        for _ in range(50):
            q, v = random_constrained_state(rng)
            tau = rng.normal(size=2)
            raw = expected_eom_unsimplified(q, v, tau, 1.3, 0.4)
            simplified = expected_eom(q, v, tau, 1.3, 0.4)
            assert np.max(np.abs(raw - simplified)) < 1e-12

    def test_projector_trace_and_eigenvalues(self):
        for q3 in (0.0, 0.8, 2.2):
            p = expected_projector(q3)
            assert abs(np.trace(p) - 2.0) < 1e-14
            eigs = np.sort(np.linalg.eigvalsh(p))
            assert np.allclose(eigs, [0.0, 1.0, 1.0], atol=1e-14)


class TestFixtureChecks:
    @pytest.mark.parametrize("component,analytic_tol,fd_tol", [
        (FixtureComponent.PROJECTOR, 1e-12, 1e-12),
        (FixtureComponent.GAMMA, 1e-12, 1e-6),
        (FixtureComponent.EOM, 1e-12, 1e-8),
        (FixtureComponent.MAPPING, 1e-12, 1e-12),
    ])
    def test_component_against_closed_form(self, component, analytic_tol, fd_tol):
        coin_an = build_coin(CoinParams(1.0, 1.0))
        coin_fd = build_coin(CoinParams(1.0, 1.0), analytic=False)
        assert fixture_check(coin_an, component)["max_error"] <= analytic_tol
        assert fixture_check(coin_fd, component)["max_error"] <= fd_tol

    def test_adjoint_rates_closed_form(self):
        coin_an = build_coin(CoinParams(1.0, 1.0))
        assert fixture_check(coin_an, FixtureComponent.ADJOINT_ODE,
                             grid=50)["max_error"] <= 1e-12

    def test_classical_rates_closed_form(self):
        coin_an = build_coin(CoinParams(1.0, 1.0))
        assert fixture_check(coin_an, FixtureComponent.CLASSICAL,
                             grid=50)["max_error"] <= 1e-6

    def test_multiplier_family_reproduced_by_integration(self):
        coin_an = build_coin(CoinParams(1.0, 1.0))
        rep = fixture_check(coin_an, FixtureComponent.ANALYTIC_EXTREMAL)
        assert rep["max_error"] <= 1e-10

    def test_heavier_coin_parameters(self):
        coin_an = build_coin(CoinParams(2.5, 0.8))
        for component in (FixtureComponent.PROJECTOR, FixtureComponent.GAMMA,
                          FixtureComponent.EOM):
            assert fixture_check(coin_an, component)["max_error"] <= 1e-12


class TestHamiltonianSpecBridge:
    def test_coordinate_dynamics_match_connection_form(self, rng):
        # The hand-written first-order acceleration and the projected
        # geodesic right-hand side derive the same motion by different
        # routes; they must agree on constrained states.
        coin_an = build_coin(CoinParams(1.4, 0.7))
        spec = coin_hamiltonian_spec(CoinParams(1.4, 0.7))
        for _ in range(100):
            q, v = random_constrained_state(rng)
            tau = rng.normal(size=2)
            _, vdot = dyn.forward_rhs(coin_an, dyn.DynState(q, v), tau)
            assert np.max(np.abs(vdot - spec.f(q, v, tau))) < 1e-10

    def test_running_cost_matches_input_norm(self, rng):
        coin_an = build_coin(CoinParams(2.0, 3.0))
        spec = coin_hamiltonian_spec(CoinParams(2.0, 3.0))
        for _ in range(10):
            q = rng.normal(size=3)
            tau = rng.normal(size=2)
            u = dyn.input_vector(coin_an, q, tau)
            assert abs(spec.running_cost(q, tau) - 0.5 * float(u @ u)) < 1e-14
