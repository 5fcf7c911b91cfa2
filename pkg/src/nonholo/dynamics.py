"""Mechanical control systems and constrained trajectory integration.

A system bundles a kinetic-energy metric, velocity constraints, and
actuated/unactuated input co-vector fields.  The motion equation
integrated here is the constrained geodesic equation with projected
forcing:

    qdot = v,   vdot = -gamma_bar(v, v) + P(u),   u = sum_i tau_i Y_i,

with ``Y_i`` the metric-raised input co-vectors.  The reaction co-vector
maintaining the constraints is recovered in closed form as
``lambda_sharp = -Q(u) - (nabla_v Q)(v)``, which avoids differencing
accelerations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import constraints as con
from . import geometry as geo
from .constraints import ConstraintSet, DistributionBasis
from .errors import ConfigError, IntegrationDivergedError, NonInvertibleMetricError
from .geometry import DEFAULT_FD, Array, FdScheme


@dataclass
class MechanicalSystem:
    """An underactuated constrained mechanical control system on one chart.

    ``metric`` maps a point to the (n, n) kinetic-energy matrix;
    ``constraints`` holds the m velocity one-forms; ``actuated`` the p
    input co-vector fields and ``unactuated`` the n - p complementary
    co-vector fields carrying reaction multipliers.  The optional
    ``*_override`` evaluators register analytic expressions that bypass
    finite differencing (``projector_override`` must return the
    projector matrix and its coordinate derivatives ``dp[j, i, k]``).
    """

    n: int
    metric: Callable[[Array], Array]
    constraints: ConstraintSet
    actuated: tuple[Callable[[Array], Array], ...]
    unactuated: tuple[Callable[[Array], Array], ...] = ()
    params: dict[str, float] = field(default_factory=dict)
    name: str = "system"
    metric_partials: Callable[[Array], Array] | None = None
    basis_override: Callable[[Array], DistributionBasis] | None = None
    projector_override: Callable[[Array], tuple[Array, Array]] | None = None
    christoffel_override: Callable[[Array], Array] | None = None
    curvature_override: Callable[[Array], Array] | None = None

    def __post_init__(self) -> None:
        if self.p > self.n:
            raise ConfigError(f"more inputs ({self.p}) than coordinates ({self.n})")
        if len(self.unactuated) != self.n - self.p:
            raise ConfigError(
                f"expected {self.n - self.p} unactuated co-vectors, "
                f"got {len(self.unactuated)}")

    @property
    def m(self) -> int:
        return self.constraints.m

    @property
    def p(self) -> int:
        return len(self.actuated)

    def actuation_matrix(self, q: Array) -> Array:
        """Input co-vectors stacked as rows, shape (p, n)."""
        q = np.asarray(q, dtype=float)
        return np.stack([np.asarray(f(q), dtype=float) for f in self.actuated])

    def unactuated_matrix(self, q: Array) -> Array:
        """Unactuated co-vectors stacked as rows, shape (n - p, n)."""
        q = np.asarray(q, dtype=float)
        if not self.unactuated:
            return np.zeros((0, self.n))
        return np.stack([np.asarray(f(q), dtype=float) for f in self.unactuated])


@dataclass
class DynState:
    """Configuration and velocity snapshot."""

    q: Array
    v: Array


@dataclass
class Trajectory:
    """Uniformly sampled trajectory with per-sample diagnostics."""

    times: Array
    qs: Array
    vs: Array
    taus: Array
    diagnostics: dict[str, Array] = field(default_factory=dict)

    def to_csv(self, path) -> None:
        """Write the fixed-schema CSV used by external plotting tools."""
        n = self.qs.shape[1]
        p = self.taus.shape[1]
        header = (["t"] + [f"q{i + 1}" for i in range(n)]
                  + [f"v{i + 1}" for i in range(n)]
                  + [f"tau{i + 1}" for i in range(p)]
                  + ["drift", "reaction_norm"])
        drift = self.diagnostics.get("drift", np.zeros(self.times.size))
        reaction = self.diagnostics.get("reaction_norm", np.zeros(self.times.size))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for k in range(self.times.size):
                row = ([self.times[k]] + list(self.qs[k]) + list(self.vs[k])
                       + list(self.taus[k]) + [drift[k], reaction[k]])
                fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def constraint_residual(system: MechanicalSystem, q: Array, v: Array) -> float:
    """Largest violation of the velocity constraints at (q, v)."""
    omega = system.constraints.matrix(q)
    if omega.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(omega @ np.asarray(v, dtype=float))))


def input_vector_fields(system: MechanicalSystem, q: Array) -> Array:
    """Metric-raised input fields stacked as rows, shape (p, n)."""
    g = con.metric_at(system, q)
    f = system.actuation_matrix(q)
    try:
        return np.linalg.solve(g, f.T).T
    except np.linalg.LinAlgError as exc:
        raise NonInvertibleMetricError(f"singular metric at q={q}: {exc}") from exc


def input_vector(system: MechanicalSystem, q: Array, tau: Array) -> Array:
    """Full input vector ``u = sum_i tau_i Y_i`` at ``q``."""
    return input_vector_fields(system, q).T @ np.asarray(tau, dtype=float)


def project_input(system: MechanicalSystem, q: Array, tau: Array,
                  fd: FdScheme = DEFAULT_FD) -> Array:
    """Projection ``P(u)`` of the input vector onto the distribution."""
    u = input_vector(system, q, tau)
    return con.projector_field(system, q) @ u


def forward_rhs(system: MechanicalSystem, state: DynState, tau: Array,
                fd: FdScheme = DEFAULT_FD) -> tuple[Array, Array]:
    """Right-hand side of the constrained motion equations.

    Returns ``(qdot, vdot)`` with ``qdot = v`` and
    ``vdot = -gamma_bar(v, v) + P(u)``.
    """
    q = np.asarray(state.q, dtype=float)
    v = np.asarray(state.v, dtype=float)
    gamma_bar = con.nonholonomic_christoffel(system, q, fd)
    pu = project_input(system, q, tau, fd)
    return v, pu - geo.quadratic_form(gamma_bar, v)


def reaction_force(system: MechanicalSystem, state: DynState, tau: Array,
                   fd: FdScheme = DEFAULT_FD) -> Array:
    """Constraint reaction co-vector along the constrained motion.

    The underlying vector is ``lambda_sharp = -Q(u) - (nabla_v Q)(v)``,
    metric-orthogonal to the distribution by construction; the returned
    covector is its metric lowering.
    """
    q = np.asarray(state.q, dtype=float)
    v = np.asarray(state.v, dtype=float)
    pair = con.projector_derivatives(system, q, fd)
    u = input_vector(system, q, tau)
    lam_sharp = -pair.q @ u - np.einsum("jik,j,k->i", pair.nabla_q, v, v)
    return con.metric_at(system, q) @ lam_sharp


def reaction_vector(system: MechanicalSystem, state: DynState, tau: Array,
                    fd: FdScheme = DEFAULT_FD) -> Array:
    """Raised reaction force ``lambda_sharp`` (vector components)."""
    return geo.sharp(con.metric_at(system, state.q),
                     reaction_force(system, state, tau, fd))


def energy_balance_error(system: MechanicalSystem, traj: Trajectory) -> float:
    """Worst deviation of kinetic energy from accumulated input work.

    Reaction forces do no work on constrained motion, so the kinetic
    energy must track the trapezoid-integrated input power exactly up
    to discretization error.
    """
    times = np.asarray(traj.times, dtype=float)
    energy = np.empty(times.size)
    power = np.empty(times.size)
    for k in range(times.size):
        g = con.metric_at(system, traj.qs[k])
        v = traj.vs[k]
        u = input_vector(system, traj.qs[k], traj.taus[k])
        energy[k] = 0.5 * float(v @ g @ v)
        power[k] = float(u @ g @ v)
    work = np.concatenate(
        [[0.0], np.cumsum((power[1:] + power[:-1]) / 2.0 * np.diff(times))])
    return float(np.max(np.abs(energy - energy[0] - work)))


def integrate(system: MechanicalSystem, state0: DynState,
              control_fn: Callable[[float, DynState], Array], T: float, dt: float,
              reproject: bool = True, fd: FdScheme = DEFAULT_FD,
              drift_tol: float = 1e-6) -> Trajectory:
    """Fixed-step fourth-order Runge-Kutta integration of the motion equations.

    ``control_fn(t, state)`` is sampled at every substage.  With
    ``reproject`` the velocity is projected back onto the distribution
    after each step, bounding constraint drift; without it the drift
    itself becomes an integration diagnostic.  Raises
    :class:`IntegrationDivergedError` carrying the last valid time if
    the state leaves the finite range.
    """
    if dt <= 0:
        raise ConfigError(f"time step must be positive, got {dt}")
    q = np.asarray(state0.q, dtype=float).copy()
    v = np.asarray(state0.v, dtype=float).copy()
    res0 = constraint_residual(system, q, v)
    if res0 > drift_tol:
        raise ConfigError(
            f"initial velocity violates constraints: residual {res0:.3e} > {drift_tol:g}")

    steps = int(round(T / dt))
    times = np.arange(steps + 1) * dt
    n, p = system.n, system.p
    qs = np.empty((steps + 1, n))
    vs = np.empty((steps + 1, n))
    taus = np.empty((steps + 1, p))
    drift = np.empty(steps + 1)
    reaction = np.empty(steps + 1)

    def rhs(t: float, qq: Array, vv: Array) -> tuple[Array, Array, Array]:
        tau = np.asarray(control_fn(t, DynState(qq, vv)), dtype=float)
        qd, vd = forward_rhs(system, DynState(qq, vv), tau, fd)
        return qd, vd, tau

    for k in range(steps + 1):
        tau_k = np.asarray(control_fn(times[k], DynState(q, v)), dtype=float)
        qs[k], vs[k], taus[k] = q, v, tau_k
        drift[k] = constraint_residual(system, q, v)
        reaction[k] = float(np.linalg.norm(
            reaction_force(system, DynState(q, v), tau_k, fd)))
        if k == steps:
            break
        t = times[k]
        k1q, k1v, _ = rhs(t, q, v)
        k2q, k2v, _ = rhs(t + dt / 2, q + dt / 2 * k1q, v + dt / 2 * k1v)
        k3q, k3v, _ = rhs(t + dt / 2, q + dt / 2 * k2q, v + dt / 2 * k2v)
        k4q, k4v, _ = rhs(t + dt, q + dt * k3q, v + dt * k3v)
        q = q + dt / 6 * (k1q + 2 * k2q + 2 * k3q + k4q)
        v = v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
            raise IntegrationDivergedError(
                f"state became non-finite after t={t + dt:g}", t_last=t)
        if reproject:
            v = con.projector_field(system, q) @ v

    return Trajectory(times=times, qs=qs, vs=vs, taus=taus,
                      diagnostics={"drift": drift, "reaction_norm": reaction})
