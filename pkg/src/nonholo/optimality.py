"""Geometric first-order optimality conditions for minimum-effort control.

The adjoint one-forms of the constrained problem live in the span of
the distribution's dual co-vector basis, so they are stored as
coefficient vectors of length ``n - m``.  The adjoint equations are

    u + xi_sharp = eta_sharp          (control recovery, identity metric)
    nabla_v mu  = [R(eta_sharp, v) v]_flat + coupling(eta, grad P, lambda)
    nabla_v eta = -mu

where the sharps and flats copy components (identity metric), the
covariant rates use the unconstrained connection, and ``coupling`` is
the reaction-force term that vanishes whenever inputs stay inside the
distribution.  The first equation is solved pointwise; the last two are
full covector equations projected onto the dual basis by pairing with
the basis vectors.  The projection is exactly the classical step of
combining component equations weighted by the heading cosines; the part
of the equation outside the span is *measured* and reported as
``residual_orthogonal`` instead of being silently dropped.

Two condition modes are supported: ``SIMPLIFIED`` omits the reaction
coupling term from the first adjoint equation (exact whenever the
reaction force vanishes along the motion), ``FULL`` keeps it.
``SIMPLIFIED`` is the default and reproduces the coin fixtures.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import constraints as con
from . import dynamics as dyn
from .constraints import DistributionBasis
from .errors import ActuationDegeneracyError, ConfigError, IntegrationDivergedError
from .geometry import DEFAULT_FD, Array, FdScheme


class ConditionMode(enum.Enum):
    """Treatment of the reaction-force coupling in the first adjoint equation."""

    SIMPLIFIED = "paper"
    FULL = "full"


@dataclass
class AdjointState:
    """Adjoint coefficients on the dual basis carried at a point."""

    mu: Array
    eta: Array
    basis: DistributionBasis

    def expand(self) -> tuple[Array, Array]:
        """Full covector components of both multipliers."""
        d = self.basis.dual
        return d.T @ np.asarray(self.mu, dtype=float), d.T @ np.asarray(self.eta, dtype=float)


@dataclass
class ExtremalState:
    """Combined configuration, velocity and adjoint state."""

    q: Array
    v: Array
    adj: AdjointState


@dataclass
class ExtremalTrajectory:
    """Sampled extremal with adjoint coefficients and recovered controls."""

    times: Array
    qs: Array
    vs: Array
    mus: Array
    etas: Array
    taus: Array
    xis: Array | None = None
    diagnostics: dict[str, Array] = field(default_factory=dict)


@dataclass
class ResidualRecord:
    """Per-sample defect of each optimality equation along a trajectory."""

    control: Array
    mu_proj: Array
    mu_orth: Array
    eta: Array
    curvature_term: Array
    lambda_term: Array


def recover_control(system: dyn.MechanicalSystem, q: Array,
                    adj: AdjointState) -> tuple[Array, Array]:
    """Solve the pointwise control equation for inputs and reaction weights.

    Stacks the raised input fields and the unactuated co-vectors (whose
    identity-metric sharp copies components) into a square system
    ``sum_i tau_i Y_i + sum_j xi_j Ftilde_j = eta_sharp``.
    """
    _, eta_full = adj.expand()
    y = dyn.input_vector_fields(system, q)
    ft = system.unactuated_matrix(q)
    a = np.concatenate([y, ft], axis=0).T
    try:
        sol = np.linalg.solve(a, eta_full)
    except np.linalg.LinAlgError as exc:
        raise ActuationDegeneracyError(
            f"input and complement co-vectors degenerate at q={q}: {exc}") from exc
    p = system.p
    return sol[:p], sol[p:]


def lambda_coupling_oneform(system: dyn.MechanicalSystem, q: Array, v: Array,
                            eta_full: Array, tau: Array,
                            fd: FdScheme = DEFAULT_FD) -> Array:
    """Reaction coupling one-form ``k -> eta((grad_k P)(lambda_sharp))``."""
    pair = con.projector_derivatives(system, q, fd)
    lam_sharp = dyn.reaction_vector(system, dyn.DynState(q, v), tau, fd)
    return np.einsum("kij,i,j->k", pair.nabla_p, eta_full, lam_sharp)


@dataclass
class _AdjointRates:
    mudot: Array
    etadot: Array
    residual_orthogonal: float
    curvature_term: Array
    lambda_term: Array


def _adjoint_rates(system: dyn.MechanicalSystem, ex: ExtremalState,
                   mode: ConditionMode, fd: FdScheme,
                   want_lambda_term: bool = False) -> _AdjointRates:
    q = np.asarray(ex.q, dtype=float)
    v = np.asarray(ex.v, dtype=float)
    basis = ex.adj.basis
    if basis.dual_partials is None:
        basis = con.basis_with_partials(system, q, fd, ref=basis)
    mu = np.asarray(ex.adj.mu, dtype=float)
    eta = np.asarray(ex.adj.eta, dtype=float)
    mu_full = basis.dual.T @ mu
    eta_full = basis.dual.T @ eta

    gamma = con.christoffel_at(system, q, fd)
    r = con.curvature_at(system, q, fd)
    curvature_term = np.einsum("lijk,i,j,k->l", r, eta_full, v, v)

    lambda_term = np.zeros(system.n)
    if mode is ConditionMode.FULL or want_lambda_term:
        tau, _ = recover_control(system, q, ex.adj)
        lambda_term = lambda_coupling_oneform(system, q, v, eta_full, tau, fd)

    rhs_mu = curvature_term.copy()
    if mode is ConditionMode.FULL:
        rhs_mu = rhs_mu + lambda_term

    # Coefficient equation: sum_a rate_a dual[a] = rhs + transport - basis drift.
    transport_mu = np.einsum("mjk,j,m->k", gamma, v, mu_full)
    transport_eta = np.einsum("mjk,j,m->k", gamma, v, eta_full)
    drift = np.einsum("jak,a,j->k", basis.dual_partials, mu, v)
    drift_eta = np.einsum("jak,a,j->k", basis.dual_partials, eta, v)
    w_mu = rhs_mu + transport_mu - drift
    w_eta = -mu_full + transport_eta - drift_eta

    pairing = basis.dual @ basis.x.T
    z = np.linalg.solve(pairing.T, basis.x)  # rows pair to identity with dual
    mudot = z @ w_mu
    etadot = z @ w_eta
    residual = float(np.linalg.norm(w_mu - basis.dual.T @ mudot))
    return _AdjointRates(mudot=mudot, etadot=etadot, residual_orthogonal=residual,
                         curvature_term=curvature_term, lambda_term=lambda_term)


def geometric_adjoint_rhs(system: dyn.MechanicalSystem, ex: ExtremalState,
                          mode: ConditionMode = ConditionMode.SIMPLIFIED,
                          fd: FdScheme = DEFAULT_FD) -> tuple[Array, Array, float]:
    """Coefficient rates of both multipliers plus the off-basis defect.

    The returned ``residual_orthogonal`` is the norm of the part of the
    first adjoint equation that no coefficient rate can represent; it
    vanishes exactly on the compatible subfamily of states.
    """
    rates = _adjoint_rates(system, ex, mode, fd)
    return rates.mudot, rates.etadot, rates.residual_orthogonal


def integrate_extremal(system: dyn.MechanicalSystem, ex0: ExtremalState, T: float,
                       dt: float, mode: ConditionMode = ConditionMode.SIMPLIFIED,
                       fd: FdScheme = DEFAULT_FD,
                       drift_tol: float = 1e-6) -> ExtremalTrajectory:
    """Integrate the coupled state/adjoint system with recovered controls.

    Classical fixed-step fourth-order Runge-Kutta on ``(q, v, mu, eta)``
    with the control re-solved at every substage.  The distribution
    basis is re-evaluated per point and kept continuous by aligning it
    with the basis at the previous sample.
    """
    if dt <= 0:
        raise ConfigError(f"time step must be positive, got {dt}")
    q0 = np.asarray(ex0.q, dtype=float)
    v0 = np.asarray(ex0.v, dtype=float)
    res0 = dyn.constraint_residual(system, q0, v0)
    if res0 > drift_tol:
        raise ConfigError(
            f"initial velocity violates constraints: residual {res0:.3e} > {drift_tol:g}")

    n = system.n
    nm = n - system.m
    steps = int(round(T / dt))
    times = np.arange(steps + 1) * dt
    qs = np.empty((steps + 1, n))
    vs = np.empty((steps + 1, n))
    mus = np.empty((steps + 1, nm))
    etas = np.empty((steps + 1, nm))
    taus = np.empty((steps + 1, system.p))
    xis = np.empty((steps + 1, n - system.p))

    state = np.concatenate([q0, v0, np.asarray(ex0.adj.mu, dtype=float),
                            np.asarray(ex0.adj.eta, dtype=float)])
    ref_basis = con.basis_with_partials(system, q0, fd, ref=ex0.adj.basis)

    def rhs(y: Array, ref: DistributionBasis) -> Array:
        q, v = y[:n], y[n:2 * n]
        mu, eta = y[2 * n:2 * n + nm], y[2 * n + nm:]
        basis = con.basis_with_partials(system, q, fd, ref=ref)
        adj = AdjointState(mu=mu, eta=eta, basis=basis)
        tau, _ = recover_control(system, q, adj)
        _, vdot = dyn.forward_rhs(system, dyn.DynState(q, v), tau, fd)
        rates = _adjoint_rates(system, ExtremalState(q, v, adj), mode, fd)
        return np.concatenate([v, vdot, rates.mudot, rates.etadot])

    for k in range(steps + 1):
        q, v = state[:n], state[n:2 * n]
        mu, eta = state[2 * n:2 * n + nm], state[2 * n + nm:]
        basis = con.basis_with_partials(system, q, fd, ref=ref_basis)
        adj = AdjointState(mu=mu, eta=eta, basis=basis)
        tau, xi = recover_control(system, q, adj)
        qs[k], vs[k], mus[k], etas[k], taus[k], xis[k] = q, v, mu, eta, tau, xi
        if k == steps:
            break
        k1 = rhs(state, ref_basis)
        k2 = rhs(state + dt / 2 * k1, ref_basis)
        k3 = rhs(state + dt / 2 * k2, ref_basis)
        k4 = rhs(state + dt * k3, ref_basis)
        state = state + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(state)):
            raise IntegrationDivergedError(
                f"extremal state became non-finite after t={times[k] + dt:g}",
                t_last=float(times[k]))
        ref_basis = con.basis_with_partials(system, state[:n], fd, ref=ref_basis)

    return ExtremalTrajectory(times=times, qs=qs, vs=vs, mus=mus, etas=etas,
                              taus=taus, xis=xis)


def cost_functional(system: dyn.MechanicalSystem, traj) -> float:
    """Trapezoidal integral of half the squared input-vector norm.

    Accepts any trajectory container exposing ``times``, ``qs`` and
    ``taus``; the norm is taken of the full input vector field, not of
    the force coefficients.
    """
    times = np.asarray(traj.times, dtype=float)
    integrand = np.empty(times.size)
    for k in range(times.size):
        u = dyn.input_vector(system, traj.qs[k], traj.taus[k])
        integrand[k] = 0.5 * float(u @ u)
    dt = np.diff(times)
    return float(np.sum((integrand[1:] + integrand[:-1]) / 2.0 * dt))


def necessary_condition_residual(system: dyn.MechanicalSystem,
                                 traj: ExtremalTrajectory,
                                 mode: ConditionMode = ConditionMode.SIMPLIFIED,
                                 fd: FdScheme = DEFAULT_FD) -> ResidualRecord:
    """Evaluate the optimality-equation defects along a candidate extremal.

    Coefficient time derivatives are estimated by differencing the
    stored samples, so endpoint values carry one-sided-difference error.
    ``lambda_term`` always reports the magnitude of the reaction
    coupling one-form, also in ``SIMPLIFIED`` mode where it is excluded
    from the rates — that is the quantity the mode switch drops.
    """
    times = np.asarray(traj.times, dtype=float)
    n_samples = times.size
    mudot_num = np.gradient(traj.mus, times, axis=0)
    etadot_num = np.gradient(traj.etas, times, axis=0)

    control = np.empty(n_samples)
    mu_proj = np.empty(n_samples)
    mu_orth = np.empty(n_samples)
    eta_res = np.empty(n_samples)
    curvature_term = np.empty(n_samples)
    lambda_term = np.empty(n_samples)

    ref = None
    for k in range(n_samples):
        q, v = traj.qs[k], traj.vs[k]
        basis = con.basis_with_partials(system, q, fd, ref=ref)
        ref = basis
        adj = AdjointState(mu=traj.mus[k], eta=traj.etas[k], basis=basis)
        _, eta_full = adj.expand()

        u = dyn.input_vector(system, q, traj.taus[k])
        ft = system.unactuated_matrix(q).T
        if traj.xis is not None:
            defect = u + ft @ traj.xis[k] - eta_full
        else:
            xi_best, *_ = np.linalg.lstsq(ft, eta_full - u, rcond=None)
            defect = u + ft @ xi_best - eta_full
        control[k] = float(np.linalg.norm(defect))

        rates = _adjoint_rates(system, ExtremalState(q, v, adj), mode, fd,
                               want_lambda_term=True)
        mu_proj[k] = float(np.max(np.abs(mudot_num[k] - rates.mudot)))
        mu_orth[k] = rates.residual_orthogonal
        eta_res[k] = float(np.max(np.abs(etadot_num[k] - rates.etadot)))
        curvature_term[k] = float(np.linalg.norm(rates.curvature_term))
        lambda_term[k] = float(np.linalg.norm(rates.lambda_term))

    return ResidualRecord(control=control, mu_proj=mu_proj, mu_orth=mu_orth,
                          eta=eta_res, curvature_term=curvature_term,
                          lambda_term=lambda_term)


def write_extremal_csv(system: dyn.MechanicalSystem, traj: ExtremalTrajectory,
                       path, mode: ConditionMode = ConditionMode.SIMPLIFIED,
                       fd: FdScheme = DEFAULT_FD) -> None:
    """Write the extremal CSV schema including per-sample residuals."""
    rec = necessary_condition_residual(system, traj, mode, fd)
    n = traj.qs.shape[1]
    nm = traj.mus.shape[1]
    p = traj.taus.shape[1]
    nxi = traj.xis.shape[1] if traj.xis is not None else 0
    header = (["t"] + [f"q{i + 1}" for i in range(n)]
              + [f"v{i + 1}" for i in range(n)]
              + [f"mu{i + 1}" for i in range(nm)]
              + [f"eta{i + 1}" for i in range(nm)]
              + [f"tau{i + 1}" for i in range(p)]
              + [f"xi{i + 1}" for i in range(nxi)]
              + ["res_control", "res_mu_proj", "res_mu_orth", "res_eta"])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(traj.times.size):
            row = ([traj.times[k]] + list(traj.qs[k]) + list(traj.vs[k])
                   + list(traj.mus[k]) + list(traj.etas[k]) + list(traj.taus[k])
                   + (list(traj.xis[k]) if traj.xis is not None else [])
                   + [rec.control[k], rec.mu_proj[k], rec.mu_orth[k], rec.eta[k]])
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
