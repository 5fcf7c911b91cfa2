"""Coordinate-space first-order optimality oracle.

Independent cross-check for the basis-coefficient conditions: the state
is ``(q, v)`` with ``vdot = f(q, v, tau)``, and the costates are two
full-length covectors with no basis restriction.  With the control
Hamiltonian

    H(q, v, tau, mubar, etabar) = mubar . v + etabar . f - running_cost

the stationary control solves ``dH/dtau = 0`` and the costates evolve as
``mubar' = -dH/dq`` and ``etabar' = -dH/dv``.  The generic path takes
all gradients by central differences of the scalar ``H``; a spec may
register closed-form callbacks, which the coin fixture does so the
differenced path can be regression-tested against them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import constraints as con
from . import dynamics as dyn
from . import geometry as geo
from .constraints import DistributionBasis
from .errors import ConfigError, IntegrationDivergedError, StationarityDegenerateError
from .geometry import DEFAULT_FD, Array, FdScheme


@dataclass
class ClassicalAdjoint:
    """Full-length costate covectors on the coordinate dual basis."""

    mubar: Array
    etabar: Array


@dataclass
class HamiltonianSpec:
    """Coordinate dynamics and cost defining the oracle problem.

    ``f(q, v, tau)`` is the acceleration field, assumed affine in
    ``tau``; ``running_cost(q, tau)`` must be quadratic in ``tau`` for
    the one-shot stationarity solve.  ``stationarity`` and
    ``adjoint_rates`` are optional closed-form fast paths.
    """

    n: int
    p: int
    f: Callable[[Array, Array, Array], Array]
    running_cost: Callable[[Array, Array], float]
    stationarity: Callable[[Array, Array, Array], Array] | None = None
    adjoint_rates: Callable[..., tuple[Array, Array]] | None = None


@dataclass
class ClassicalTrajectory:
    """Sampled combined state/costate trajectory with stationary controls."""

    times: Array
    qs: Array
    vs: Array
    mubars: Array
    etabars: Array
    taus: Array


@dataclass
class MappedAdjoint:
    """Costates resolved on a distribution dual basis plus off-basis parts."""

    mu: Array
    eta: Array
    mu_orth: Array
    eta_orth: Array


def hamiltonian(spec: HamiltonianSpec, q: Array, v: Array, tau: Array,
                adj: ClassicalAdjoint) -> float:
    """Control Hamiltonian value (maximized form, cost entering negatively)."""
    return float(np.asarray(adj.mubar, dtype=float) @ np.asarray(v, dtype=float)
                 + np.asarray(adj.etabar, dtype=float) @ np.asarray(spec.f(q, v, tau), dtype=float)
                 - spec.running_cost(q, tau))


def classical_rhs(spec: HamiltonianSpec, q: Array, v: Array,
                  tau: Array) -> tuple[Array, Array]:
    """First-order state equations ``(qdot, vdot) = (v, f)``."""
    return np.asarray(v, dtype=float), np.asarray(spec.f(q, v, tau), dtype=float)


def stationarity_solve(spec: HamiltonianSpec, q: Array, v: Array, etabar: Array,
                       force_generic: bool = False) -> Array:
    """Control making the Hamiltonian stationary at (q, v, etabar).

    For control-affine dynamics and quadratic cost the probe
    differences below recover the exact Hessian and input matrix, so
    the solve is exact rather than approximate.
    """
    if spec.stationarity is not None and not force_generic:
        return np.asarray(spec.stationarity(q, v, etabar), dtype=float)
    p = spec.p
    etabar = np.asarray(etabar, dtype=float)
    zeros = np.zeros(p)
    f0 = np.asarray(spec.f(q, v, zeros), dtype=float)
    c0 = spec.running_cost(q, zeros)
    b = np.empty(p)
    basis_cols = np.eye(p)
    input_matrix = np.empty((spec.n, p))
    cost_plus = np.empty(p)
    for i in range(p):
        e = basis_cols[i]
        input_matrix[:, i] = np.asarray(spec.f(q, v, e), dtype=float) - f0
        cost_plus[i] = spec.running_cost(q, e)
        b[i] = (cost_plus[i] - spec.running_cost(q, -e)) / 2.0
    hess = np.empty((p, p))
    for i in range(p):
        for j in range(i, p):
            cij = spec.running_cost(q, basis_cols[i] + basis_cols[j])
            hess[i, j] = hess[j, i] = cij - cost_plus[i] - cost_plus[j] + c0
    try:
        return np.linalg.solve(hess, input_matrix.T @ etabar - b)
    except np.linalg.LinAlgError as exc:
        raise StationarityDegenerateError(
            f"singular control Hessian at q={q}: {exc}") from exc


def classical_adjoint_rhs(spec: HamiltonianSpec, q: Array, v: Array,
                          adj: ClassicalAdjoint, tau: Array,
                          fd: FdScheme = DEFAULT_FD,
                          force_generic: bool = False) -> tuple[Array, Array]:
    """Costate rates ``(-dH/dq, -dH/dv)`` at fixed control."""
    if spec.adjoint_rates is not None and not force_generic:
        md, ed = spec.adjoint_rates(q, v, tau, np.asarray(adj.mubar, dtype=float),
                                    np.asarray(adj.etabar, dtype=float))
        return np.asarray(md, dtype=float), np.asarray(ed, dtype=float)
    dq = geo.central_difference(
        lambda p: np.asarray(hamiltonian(spec, p, v, tau, adj)), q, fd)
    dv = geo.central_difference(
        lambda w: np.asarray(hamiltonian(spec, q, w, tau, adj)), v, fd)
    return -dq.reshape(-1), -dv.reshape(-1)


def integrate_classical(spec: HamiltonianSpec, q0: Array, v0: Array,
                        adj0: ClassicalAdjoint, T: float, dt: float,
                        fd: FdScheme = DEFAULT_FD) -> ClassicalTrajectory:
    """Runge-Kutta integration of the combined state/costate system.

    The control is re-solved from the stationarity condition at every
    substage, making the flow autonomous in the combined variables.
    """
    if dt <= 0:
        raise ConfigError(f"time step must be positive, got {dt}")
    n = spec.n
    steps = int(round(T / dt))
    times = np.arange(steps + 1) * dt
    qs = np.empty((steps + 1, n))
    vs = np.empty((steps + 1, n))
    mubars = np.empty((steps + 1, n))
    etabars = np.empty((steps + 1, n))
    taus = np.empty((steps + 1, spec.p))

    y = np.concatenate([np.asarray(q0, dtype=float), np.asarray(v0, dtype=float),
                        np.asarray(adj0.mubar, dtype=float),
                        np.asarray(adj0.etabar, dtype=float)])

    def rhs(yy: Array) -> Array:
        q, v = yy[:n], yy[n:2 * n]
        mubar, etabar = yy[2 * n:3 * n], yy[3 * n:]
        tau = stationarity_solve(spec, q, v, etabar)
        qd, vd = classical_rhs(spec, q, v, tau)
        md, ed = classical_adjoint_rhs(spec, q, v, ClassicalAdjoint(mubar, etabar),
                                       tau, fd)
        return np.concatenate([qd, vd, md, ed])

    for k in range(steps + 1):
        qs[k], vs[k] = y[:n], y[n:2 * n]
        mubars[k], etabars[k] = y[2 * n:3 * n], y[3 * n:]
        taus[k] = stationarity_solve(spec, qs[k], vs[k], etabars[k])
        if k == steps:
            break
        k1 = rhs(y)
        k2 = rhs(y + dt / 2 * k1)
        k3 = rhs(y + dt / 2 * k2)
        k4 = rhs(y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise IntegrationDivergedError(
                f"costate system became non-finite after t={times[k] + dt:g}",
                t_last=float(times[k]))

    return ClassicalTrajectory(times=times, qs=qs, vs=vs, mubars=mubars,
                               etabars=etabars, taus=taus)


def map_adjoints(q: Array, adj: ClassicalAdjoint,
                 basis: DistributionBasis) -> MappedAdjoint:
    """Resolve full costates into dual-basis and complement coefficients.

    The dual co-vectors and the complement rows together span the
    cotangent space, so the decomposition is a single linear solve; the
    complement coefficients quantify how far the costate strays from
    the span the basis-coefficient conditions can represent.
    """
    rows = np.concatenate([basis.dual, basis.complement], axis=0)
    coeff_mu = np.linalg.solve(rows.T, np.asarray(adj.mubar, dtype=float))
    coeff_eta = np.linalg.solve(rows.T, np.asarray(adj.etabar, dtype=float))
    nm = basis.dual.shape[0]
    return MappedAdjoint(mu=coeff_mu[:nm], eta=coeff_eta[:nm],
                         mu_orth=coeff_mu[nm:], eta_orth=coeff_eta[nm:])


def hamiltonian_spec_from_system(system: dyn.MechanicalSystem,
                                 fd: FdScheme = DEFAULT_FD) -> HamiltonianSpec:
    """Generic bridge: coordinate dynamics and cost of a mechanical system."""

    def f(q: Array, v: Array, tau: Array) -> Array:
        return dyn.forward_rhs(system, dyn.DynState(q, v), tau, fd)[1]

    def running_cost(q: Array, tau: Array) -> float:
        u = dyn.input_vector(system, q, tau)
        return 0.5 * float(u @ u)

    return HamiltonianSpec(n=system.n, p=system.p, f=f, running_cost=running_cost)
