"""Vertical rolling coin (knife edge) on the plane: the workhorse fixture.

Coordinates are the contact point ``(q1, q2)`` and the heading angle
``q3``; the kinetic metric is ``diag(m, m, J)`` and the knife-edge
constraint forbids sideways slip.  Every derived quantity of this model
has a short closed form, so the module doubles as regression data for
the generic pipeline: projector components, constrained-connection
coefficients, motion equations, adjoint rates, the linear multiplier
family, the coordinate-costate conditions and the adjoint mapping are
all reproduced here explicitly.

Two published formula slips are corrected and kept alongside their
printed originals so tests can assert that the corrected forms hold
*and* the printed ones fail:

* the first input co-vector reads ``cos(q3) dq1 + sin(q3) dq2`` (the
  printed second component repeats ``cos``), which is forced by the
  printed raised field ``Y_1``;
* the third multiplier integrates as ``eta3(t) = -mu3_0 t + eta3_0``
  (the printed line drops the factor ``t``), which is forced by the
  rate equation ``eta3' = -mu3``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import classical as cls
from . import constraints as con
from . import optimality as opt
from .constraints import DistributionBasis
from .dynamics import DynState, MechanicalSystem, forward_rhs
from .geometry import DEFAULT_FD, Array, FdScheme


@dataclass(frozen=True)
class CoinParams:
    """Mass and vertical-axis moment of inertia, both positive."""

    m: float = 1.0
    J: float = 1.0

    def __post_init__(self) -> None:
        if not (self.m > 0 and self.J > 0):
            raise ValueError(f"mass and inertia must be positive, got {self}")


def build_coin(params: CoinParams = CoinParams(), analytic: bool = True,
               force_along_x: bool = False) -> MechanicalSystem:
    """Assemble the coin as a :class:`MechanicalSystem`.

    With ``analytic`` (the default) every derivative the pipeline needs
    is registered in closed form; ``analytic=False`` drops the
    overrides so the same model exercises the finite-difference path.
    ``force_along_x`` replaces the heading-aligned drive force by a
    laboratory-frame force along ``q1`` (which no longer lies in the
    constraint distribution) and adjusts the unactuated complement
    accordingly.
    """
    m, J = params.m, params.J
    g_const = np.diag([m, m, J])

    def metric(q: Array) -> Array:
        return g_const.copy()

    def omega1(q: Array) -> Array:
        return np.array([np.sin(q[2]), -np.cos(q[2]), 0.0])

    if force_along_x:
        f1 = lambda q: np.array([1.0, 0.0, 0.0])
        ftilde1 = lambda q: np.array([0.0, 1.0, 0.0])
    else:
        f1 = lambda q: np.array([np.cos(q[2]), np.sin(q[2]), 0.0])
        ftilde1 = lambda q: np.array([-np.sin(q[2]), np.cos(q[2]), 0.0])
    f2 = lambda q: np.array([0.0, 0.0, 1.0])

    def basis(q: Array) -> DistributionBasis:
        c, s = np.cos(q[2]), np.sin(q[2])
        x = np.array([[c, s, 0.0], [0.0, 0.0, 1.0]])
        dual = np.array([[c, s, 0.0], [0.0, 0.0, 1.0]])
        comp = np.array([[-s, c, 0.0]])
        dp = np.zeros((3, 2, 3)) if analytic else None
        if dp is not None:
            dp[2, 0] = [-s, c, 0.0]
        return DistributionBasis(x=x, dual=dual, complement=comp, dual_partials=dp)

    def projector(q: Array) -> tuple[Array, Array]:
        p = expected_projector(q[2])
        dp = np.zeros((3, 3, 3))
        c2, s2 = np.cos(2 * q[2]), np.sin(2 * q[2])
        dp[2, 0, 0] = -s2
        dp[2, 0, 1] = dp[2, 1, 0] = c2
        dp[2, 1, 1] = s2
        return p, dp

    return MechanicalSystem(
        n=3,
        metric=metric,
        constraints=con.ConstraintSet((omega1,)),
        actuated=(f1, f2),
        unactuated=(ftilde1,),
        params={"m": m, "J": J},
        name="coin",
        metric_partials=(lambda q: np.zeros((3, 3, 3))) if analytic else None,
        basis_override=basis,
        projector_override=projector if analytic else None,
        christoffel_override=(lambda q: np.zeros((3, 3, 3))) if analytic else None,
        curvature_override=(lambda q: np.zeros((3, 3, 3, 3))) if analytic else None,
    )


def coin_hamiltonian_spec(params: CoinParams = CoinParams(),
                          analytic: bool = True) -> "cls.HamiltonianSpec":
    """Coordinate first-order dynamics and running cost of the coin.

    The acceleration field is the constrained motion equation written
    out by hand, which makes this an independent oracle for the
    connection-based right-hand side.
    """
    m, J = params.m, params.J

    def f(q: Array, v: Array, tau: Array) -> Array:
        c, s = np.cos(q[2]), np.sin(q[2])
        return np.array([-v[1] * v[2] + c * tau[0] / m,
                         v[0] * v[2] + s * tau[0] / m,
                         tau[1] / J])

    def running_cost(q: Array, tau: Array) -> float:
        return 0.5 * (tau[0] ** 2 / m ** 2 + tau[1] ** 2 / J ** 2)

    stationarity = adjoint_rates = None
    if analytic:
        def stationarity(q, v, etabar):
            c, s = np.cos(q[2]), np.sin(q[2])
            return np.array([m * (etabar[0] * c + etabar[1] * s), J * etabar[2]])

        def adjoint_rates(q, v, tau, mubar, etabar):
            c, s = np.cos(q[2]), np.sin(q[2])
            mubardot = np.array([0.0, 0.0,
                                 tau[0] / m * (etabar[0] * s - etabar[1] * c)])
            etabardot = np.array([-mubar[0] - etabar[1] * v[2],
                                  -mubar[1] + etabar[0] * v[2],
                                  -mubar[2] + etabar[0] * v[1] - etabar[1] * v[0]])
            return mubardot, etabardot

    return cls.HamiltonianSpec(n=3, p=2, f=f, running_cost=running_cost,
                               stationarity=stationarity, adjoint_rates=adjoint_rates)


# ---------------------------------------------------------------------------
# Closed-form fixture data
# ---------------------------------------------------------------------------

def expected_projector(q3: float) -> Array:
    """Distribution projector: planar block of squared heading cosines."""
    c, s = np.cos(q3), np.sin(q3)
    return np.array([[c * c, c * s, 0.0], [c * s, s * s, 0.0], [0.0, 0.0, 1.0]])


def expected_gamma_quadratic(q3: float, v: Array) -> Array:
    """Constrained-connection quadratic form ``gamma_bar(v, v)``."""
    c2, s2 = np.cos(2 * q3), np.sin(2 * q3)
    return np.array([v[2] * (v[0] * s2 - v[1] * c2),
                     v[2] * (-v[0] * c2 - v[1] * s2),
                     0.0])


def expected_eom(q: Array, v: Array, tau: Array, m: float, J: float) -> Array:
    """Acceleration on constrained states (simplified form)."""
    c, s = np.cos(q[2]), np.sin(q[2])
    return np.array([-v[1] * v[2] + c * tau[0] / m,
                     v[0] * v[2] + s * tau[0] / m,
                     tau[1] / J])


def expected_eom_unsimplified(q: Array, v: Array, tau: Array,
                              m: float, J: float) -> Array:
    """Acceleration before the constraint is used to simplify."""
    c, s = np.cos(q[2]), np.sin(q[2])
    c2, s2 = np.cos(2 * q[2]), np.sin(2 * q[2])
    return np.array([(-v[0] * s2 + v[1] * c2) * v[2] + c * tau[0] / m,
                     (v[0] * c2 + v[1] * s2) * v[2] + s * tau[0] / m,
                     tau[1] / J])


def expected_adjoint_rates(mu: Array, eta: Array) -> tuple[Array, Array]:
    """Multiplier coefficient rates: constants and their negatives."""
    return np.zeros(2), -np.asarray(mu, dtype=float)


def extremal_family(t, mu0: Array, eta0: Array) -> tuple[Array, Array]:
    """Corrected linear multiplier family (constant mu, linearly drifting eta)."""
    t = np.asarray(t, dtype=float)
    mu0 = np.asarray(mu0, dtype=float)
    eta0 = np.asarray(eta0, dtype=float)
    mu = np.broadcast_to(mu0, t.shape + (2,)).copy()
    eta = eta0 - np.multiply.outer(t, mu0)
    return mu, eta


def extremal_family_printed(t, mu0: Array, eta0: Array) -> tuple[Array, Array]:
    """Multiplier family as printed: the third component misses its factor t."""
    mu, eta = extremal_family(t, mu0, eta0)
    t = np.asarray(t, dtype=float)
    eta_printed = eta.copy()
    eta_printed[..., 1] = eta0[1] - mu0[1]
    return mu, eta_printed


def printed_drive_oneform(q3: float) -> Array:
    """Drive co-vector as printed, with the repeated-cosine second component."""
    return np.array([np.cos(q3), np.cos(q3), 0.0])


def expected_classical_rates(q: Array, v: Array, mubar: Array, etabar: Array,
                             m: float, J: float) -> tuple[Array, Array]:
    """Coordinate-costate rates with the control eliminated by stationarity."""
    c2, s2 = np.cos(2 * q[2]), np.sin(2 * q[2])
    mubardot = np.array([0.0, 0.0,
                         0.5 * s2 * (etabar[0] ** 2 - etabar[1] ** 2)
                         - etabar[0] * etabar[1] * c2])
    etabardot = np.array([-mubar[0] - etabar[1] * v[2],
                          -mubar[1] + etabar[0] * v[2],
                          -mubar[2] + etabar[0] * v[1] - etabar[1] * v[0]])
    return mubardot, etabardot


def expected_stationary_control(q3: float, etabar: Array, m: float, J: float) -> Array:
    """Stationary control as a function of the heading and costate."""
    return np.array([m * (etabar[0] * np.cos(q3) + etabar[1] * np.sin(q3)),
                     J * etabar[2]])


def expected_adjoint_mapping(q3: float, bar: Array) -> tuple[Array, float]:
    """Coordinate costate resolved on the dual basis plus its off-basis part."""
    c, s = np.cos(q3), np.sin(q3)
    coeffs = np.array([bar[0] * c + bar[1] * s, bar[2]])
    orth = -bar[0] * s + bar[1] * c
    return coeffs, float(orth)


def random_constrained_state(rng: np.random.Generator,
                             scale: float = 1.0) -> tuple[Array, Array]:
    """Random configuration and admissible velocity (forward speed + spin)."""
    q = rng.uniform(-2.0, 2.0, size=3)
    k, w = rng.uniform(-scale, scale, size=2)
    v = np.array([k * np.cos(q[2]), k * np.sin(q[2]), w])
    return q, v


# ---------------------------------------------------------------------------
# Fixture comparison harness
# ---------------------------------------------------------------------------

class FixtureComponent(enum.Enum):
    GAMMA = "gamma"
    PROJECTOR = "projector"
    EOM = "eom"
    ADJOINT_ODE = "adjoint_ode"
    ANALYTIC_EXTREMAL = "analytic_extremal"
    CLASSICAL = "classical"
    MAPPING = "mapping"


def default_grid(component: FixtureComponent,
                 rng: np.random.Generator | None = None) -> list:
    """Evaluation grid per component: heading samples or random states."""
    rng = rng or np.random.default_rng(7)
    headings = [0.0, np.pi / 6, np.pi / 4, np.pi / 3, np.pi / 2, 1.0, 2.5]
    if component in (FixtureComponent.PROJECTOR, FixtureComponent.GAMMA):
        return headings
    if component == FixtureComponent.ANALYTIC_EXTREMAL:
        return [(rng.uniform(-1, 1, size=2), rng.uniform(-1, 1, size=2))
                for _ in range(3)]
    return [rng for _ in range(1)]  # consumed as an RNG handle


def fixture_check(system: MechanicalSystem, component: FixtureComponent,
                  grid: list | None = None, fd: FdScheme = DEFAULT_FD,
                  rng: np.random.Generator | None = None) -> dict:
    """Run the generic pipeline against the closed forms on a grid.

    Returns ``{"component", "max_error"}`` where the error is the
    largest absolute deviation over the grid.
    """
    rng = rng or np.random.default_rng(7)
    m, J = system.params["m"], system.params["J"]
    err = 0.0

    if component == FixtureComponent.PROJECTOR:
        for q3 in grid or default_grid(component):
            q = np.array([0.3, -0.7, q3])
            pair = con.projectors(con.basis_at(system, q), con.metric_at(system, q))
            err = max(err, float(np.max(np.abs(pair.p - expected_projector(q3)))))

    elif component == FixtureComponent.GAMMA:
        for q3 in grid or default_grid(component):
            q = np.array([0.1, 0.2, q3])
            gb = con.nonholonomic_christoffel(system, q, fd)
            v = rng.normal(size=3)
            got = np.einsum("ijk,j,k->i", gb, v, v)
            err = max(err, float(np.max(np.abs(got - expected_gamma_quadratic(q3, v)))))

    elif component == FixtureComponent.EOM:
        for _ in range(grid if isinstance(grid, int) else 200):
            q, v = random_constrained_state(rng)
            tau = rng.normal(size=2)
            _, vdot = forward_rhs(system, DynState(q, v), tau, fd)
            err = max(err, float(np.max(np.abs(vdot - expected_eom(q, v, tau, m, J)))))

    elif component == FixtureComponent.ADJOINT_ODE:
        for _ in range(grid if isinstance(grid, int) else 100):
            q, v = random_constrained_state(rng)
            basis = con.basis_at(system, q)
            adj = opt.AdjointState(mu=rng.normal(size=2), eta=rng.normal(size=2),
                                   basis=basis)
            ex = opt.ExtremalState(q=q, v=v, adj=adj)
            mudot, etadot, _ = opt.geometric_adjoint_rhs(
                system, ex, opt.ConditionMode.SIMPLIFIED, fd)
            emu, eeta = expected_adjoint_rates(adj.mu, adj.eta)
            err = max(err, float(np.max(np.abs(mudot - emu))),
                      float(np.max(np.abs(etadot - eeta))))

    elif component == FixtureComponent.ANALYTIC_EXTREMAL:
        for mu0, eta0 in grid or default_grid(component, rng):
            q0, v0 = random_constrained_state(rng)
            basis = con.basis_at(system, q0)
            ex0 = opt.ExtremalState(q=q0, v=v0,
                                    adj=opt.AdjointState(mu0, eta0, basis))
            # The multiplier rates are constant or linear in time, which the
            # integrator reproduces exactly at any step size.
            traj = opt.integrate_extremal(system, ex0, T=2.0, dt=1e-2,
                                          mode=opt.ConditionMode.SIMPLIFIED, fd=fd)
            mu_exp, eta_exp = extremal_family(traj.times, mu0, eta0)
            err = max(err, float(np.max(np.abs(traj.mus - mu_exp))),
                      float(np.max(np.abs(traj.etas - eta_exp))))

    elif component == FixtureComponent.CLASSICAL:
        spec = coin_hamiltonian_spec(CoinParams(m, J), analytic=False)
        for _ in range(grid if isinstance(grid, int) else 100):
            q, v = random_constrained_state(rng)
            mubar, etabar = rng.normal(size=3), rng.normal(size=3)
            tau = cls.stationarity_solve(spec, q, v, etabar)
            md, ed = cls.classical_adjoint_rhs(
                spec, q, v, cls.ClassicalAdjoint(mubar, etabar), tau, fd)
            emd, eed = expected_classical_rates(q, v, mubar, etabar, m, J)
            err = max(err, float(np.max(np.abs(md - emd))),
                      float(np.max(np.abs(ed - eed))))

    elif component == FixtureComponent.MAPPING:
        for _ in range(grid if isinstance(grid, int) else 100):
            q, _ = random_constrained_state(rng)
            basis = con.basis_at(system, q)
            mubar, etabar = rng.normal(size=3), rng.normal(size=3)
            mapped = cls.map_adjoints(q, cls.ClassicalAdjoint(mubar, etabar), basis)
            mu_exp, mu_orth_exp = expected_adjoint_mapping(q[2], mubar)
            eta_exp, eta_orth_exp = expected_adjoint_mapping(q[2], etabar)
            err = max(err,
                      float(np.max(np.abs(mapped.mu - mu_exp))),
                      float(np.max(np.abs(mapped.eta - eta_exp))),
                      abs(float(mapped.mu_orth[0]) - mu_orth_exp),
                      abs(float(mapped.eta_orth[0]) - eta_orth_exp))

    else:
        raise ValueError(f"unknown fixture component {component}")

    return {"component": component.value, "max_error": err}
