"""Indirect two-point boundary-value solver and cross-pipeline verification.

Single shooting over the unknown initial costates: the candidate is
integrated forward and the weighted terminal state mismatch is driven
to zero by a damped least-squares (Levenberg-Marquardt) iteration with
a forward-difference Jacobian.  Both adjoint pipelines are supported:

* ``classical``: full-length coordinate costates (2n unknowns),
* ``geometric``: dual-basis coefficients (2(n - m) unknowns), which on
  constrained systems is over-determined against the 2n targets; the
  least-squares minimizer is returned with its residual disclosed,
  never claimed to vanish.

Jacobian columns are independent integrations and may be evaluated by
a thread pool (``NONHOLO_THREADS``); columns are assembled in index
order, so results are bit-identical for any worker count.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import classical as cls
from . import constraints as con
from . import dynamics as dyn
from . import optimality as opt
from .errors import ConfigError, IntegrationDivergedError
from .geometry import DEFAULT_FD, Array, FdScheme

SOLUTION_SCHEMA = "nonholo-solution-v1"


@dataclass
class OcpSpec:
    """Two-point minimum-effort problem data.

    Terminal weights multiply the concatenated configuration and
    velocity mismatches; a zero weight frees the component.  Endpoint
    velocities must satisfy the constraints to 1e-9.
    """

    system: dyn.MechanicalSystem
    q0: Array
    v0: Array
    qT: Array
    vT: Array
    T: float
    pipeline: str = "classical"
    mode: opt.ConditionMode = opt.ConditionMode.SIMPLIFIED
    weights: Array | None = None
    dt: float = 1e-3
    hamiltonian: cls.HamiltonianSpec | None = None

    def __post_init__(self) -> None:
        self.q0 = np.asarray(self.q0, dtype=float)
        self.v0 = np.asarray(self.v0, dtype=float)
        self.qT = np.asarray(self.qT, dtype=float)
        self.vT = np.asarray(self.vT, dtype=float)
        if self.T <= 0:
            raise ConfigError(f"horizon must be positive, got {self.T}")
        if self.pipeline not in ("classical", "geometric"):
            raise ConfigError(f"unknown pipeline {self.pipeline!r}")
        for label, v, q in (("initial", self.v0, self.q0), ("terminal", self.vT, self.qT)):
            res = dyn.constraint_residual(self.system, q, v)
            if res > 1e-9:
                raise ConfigError(
                    f"{label} velocity violates constraints: residual {res:.3e}")
        if self.weights is None:
            self.weights = np.ones(2 * self.system.n)
        else:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.size != 2 * self.system.n:
                raise ConfigError("weights must have one entry per q and v component")

    def hamiltonian_spec(self) -> cls.HamiltonianSpec:
        if self.hamiltonian is None:
            self.hamiltonian = cls.hamiltonian_spec_from_system(self.system)
        return self.hamiltonian


@dataclass
class SolveOptions:
    max_iter: int = 60
    tol: float = 1e-8
    fd_step: float = 1e-6
    damping: float = 1e-3
    threads: int | None = None


@dataclass
class ShootingResult:
    unknowns: Array
    terminal_residual: Array
    residual_norm: float
    cost: float
    iterations: int
    trajectory: object
    converged: bool
    diagnostics: dict = field(default_factory=dict)
    spec: OcpSpec | None = None


def unknown_dim(spec: OcpSpec) -> int:
    n, m = spec.system.n, spec.system.m
    return 2 * n if spec.pipeline == "classical" else 2 * (n - m)


def integrate_candidate(spec: OcpSpec, unknowns: Array):
    """Forward integration of a candidate initial costate, either pipeline."""
    unknowns = np.asarray(unknowns, dtype=float)
    n = spec.system.n
    if spec.pipeline == "classical":
        adj0 = cls.ClassicalAdjoint(mubar=unknowns[:n], etabar=unknowns[n:])
        return cls.integrate_classical(spec.hamiltonian_spec(), spec.q0, spec.v0,
                                       adj0, spec.T, spec.dt)
    nm = n - spec.system.m
    basis0 = con.basis_with_partials(spec.system, spec.q0)
    ex0 = opt.ExtremalState(
        q=spec.q0, v=spec.v0,
        adj=opt.AdjointState(mu=unknowns[:nm], eta=unknowns[nm:], basis=basis0))
    return opt.integrate_extremal(spec.system, ex0, spec.T, spec.dt, spec.mode)


def terminal_mismatch(spec: OcpSpec, traj) -> Array:
    """Weighted concatenated configuration/velocity terminal error."""
    return spec.weights * np.concatenate([traj.qs[-1] - spec.qT,
                                          traj.vs[-1] - spec.vT])


def shoot_residual(spec: OcpSpec, unknowns: Array) -> Array:
    """Residual vector of one shot; infinite entries flag divergence."""
    try:
        traj = integrate_candidate(spec, unknowns)
    except IntegrationDivergedError:
        return np.full(2 * spec.system.n, np.inf)
    return terminal_mismatch(spec, traj)


def _worker_count(options: SolveOptions) -> int:
    if options.threads is not None:
        return max(1, options.threads)
    env = os.environ.get("NONHOLO_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"NONHOLO_THREADS must be an integer, got {env!r}") from exc
    return 1


def _fd_jacobian(residual: Callable[[Array], Array], x: Array, r0: Array,
                 step: float, workers: int) -> Array:
    def column(i: int) -> Array:
        xi = x.copy()
        xi[i] += step
        return (residual(xi) - r0) / step

    if workers <= 1:
        cols = [column(i) for i in range(x.size)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cols = list(pool.map(column, range(x.size)))
    return np.stack(cols, axis=1)


def solve(spec: OcpSpec, guess: Array | None = None,
          options: SolveOptions | None = None) -> ShootingResult:
    """Damped least-squares shooting from an initial costate guess.

    Converged means the weighted terminal residual norm fell below the
    tolerance; otherwise the best iterate found is returned with
    ``converged=False`` and the reason in the diagnostics.
    """
    options = options or SolveOptions()
    dim = unknown_dim(spec)
    x = np.zeros(dim) if guess is None else np.asarray(guess, dtype=float).copy()
    if x.size != dim:
        raise ConfigError(f"guess must have {dim} entries, got {x.size}")

    residual = lambda u: shoot_residual(spec, u)
    workers = _worker_count(options)
    r = residual(x)
    if not np.all(np.isfinite(r)):
        raise ConfigError("initial guess diverges; provide a finite starting point")
    norm = float(np.linalg.norm(r))
    history = [norm]
    lam = options.damping
    message = "converged" if norm <= options.tol else "max iterations exceeded"
    iterations = 0

    while norm > options.tol and iterations < options.max_iter:
        jac = _fd_jacobian(residual, x, r, options.fd_step, workers)
        # Damped step in SVD form: singular directions are filtered by
        # sigma / (sigma^2 + damping), so exactly-unobservable costate
        # directions (which these problems do exhibit) receive no step
        # and the undamped limit is the minimum-norm Gauss-Newton step.
        u_svd, s_svd, vt_svd = np.linalg.svd(jac, full_matrices=False)
        utr = u_svd.T @ r
        s_top = s_svd[0] if s_svd[0] > 0 else 1.0
        accepted = False
        for _ in range(30):
            filt = s_svd / (s_svd ** 2 + lam * s_top ** 2)
            dx = -vt_svd.T @ (filt * utr)
            r_try = residual(x + dx)
            if np.all(np.isfinite(r_try)) and np.linalg.norm(r_try) < norm:
                x = x + dx
                r = r_try
                norm = float(np.linalg.norm(r))
                lam = max(lam * 0.25, 1e-12)
                accepted = True
                break
            lam *= 4.0
        iterations += 1
        history.append(norm)
        if norm <= options.tol:
            message = "converged"
            break
        if not accepted:
            message = "line search failure"
            break

    converged = norm <= options.tol
    traj = integrate_candidate(spec, x)
    terminal = terminal_mismatch(spec, traj)
    cost = opt.cost_functional(spec.system, traj)
    jac_final = _fd_jacobian(residual, x, r, options.fd_step, workers)
    sing = np.linalg.svd(jac_final, compute_uv=False)
    cond = float(sing[0] / sing[-1]) if sing[-1] > 0 else float("inf")
    return ShootingResult(
        unknowns=x, terminal_residual=terminal,
        residual_norm=float(np.linalg.norm(terminal)), cost=cost,
        iterations=iterations, trajectory=traj, converged=converged,
        diagnostics={"message": message, "residual_history": history,
                     "jacobian_cond": cond},
        spec=spec)


# ---------------------------------------------------------------------------
# Cross-pipeline verification
# ---------------------------------------------------------------------------

def cross_verify_trajectory(system: dyn.MechanicalSystem,
                            traj: cls.ClassicalTrajectory,
                            fd: FdScheme = DEFAULT_FD) -> dict:
    """Map a coordinate-costate extremal onto the dual basis and check it.

    Reports the pointwise control agreement between the two recovery
    routes (an algebraic identity), the basis-coefficient equation
    residuals in both condition modes, the off-basis costate profile
    (the primary discrepancy diagnostic between the two condition
    sets), and the magnitude of the reaction coupling term.
    """
    n_samples = traj.times.size
    nm = system.n - system.m
    n_orth = system.m
    mus = np.empty((n_samples, nm))
    etas = np.empty((n_samples, nm))
    mu_orth = np.empty((n_samples, n_orth))
    eta_orth = np.empty((n_samples, n_orth))
    agreement = np.empty(n_samples)

    ref = None
    for k in range(n_samples):
        q = traj.qs[k]
        basis = con.basis_with_partials(system, q, fd, ref=ref)
        ref = basis
        mapped = cls.map_adjoints(
            q, cls.ClassicalAdjoint(traj.mubars[k], traj.etabars[k]), basis)
        mus[k], etas[k] = mapped.mu, mapped.eta
        mu_orth[k], eta_orth[k] = mapped.mu_orth, mapped.eta_orth
        tau_geo, _ = opt.recover_control(
            system, q, opt.AdjointState(mapped.mu, mapped.eta, basis))
        agreement[k] = float(np.max(np.abs(tau_geo - traj.taus[k])))

    mapped_traj = opt.ExtremalTrajectory(times=traj.times, qs=traj.qs, vs=traj.vs,
                                         mus=mus, etas=etas, taus=traj.taus)
    residuals = {}
    lambda_profile = None
    for mode in (opt.ConditionMode.SIMPLIFIED, opt.ConditionMode.FULL):
        rec = opt.necessary_condition_residual(system, mapped_traj, mode, fd)
        residuals[mode.value] = {
            "control_max": float(np.max(rec.control)),
            "mu_proj_max": float(np.max(rec.mu_proj)),
            "mu_orth_max": float(np.max(rec.mu_orth)),
            "eta_max": float(np.max(rec.eta)),
            "curvature_term_max": float(np.max(rec.curvature_term)),
        }
        lambda_profile = rec.lambda_term

    def profile_stats(prof: Array) -> dict:
        return {"max_abs": float(np.max(np.abs(prof))),
                "min": float(np.min(prof)), "max": float(np.max(prof)),
                "profile": [float(x) for x in prof]}

    mu_tilde = mu_orth[:, 0] if n_orth else np.zeros(n_samples)
    return {
        "control_agreement_max": float(np.max(agreement)),
        "residuals": residuals,
        "mu_tilde": profile_stats(mu_tilde),
        "eta_tilde_max_abs": float(np.max(np.abs(eta_orth))) if n_orth else 0.0,
        "lambda_term": profile_stats(lambda_profile),
    }


def cross_verify(result: ShootingResult, fd: FdScheme = DEFAULT_FD) -> dict:
    """Verification report for a solved classical-pipeline problem."""
    if result.spec is None or result.spec.pipeline != "classical":
        raise ConfigError("cross verification requires a classical-pipeline result")
    return cross_verify_trajectory(result.spec.system, result.trajectory, fd)


# ---------------------------------------------------------------------------
# Solution file I/O
# ---------------------------------------------------------------------------

def solution_to_dict(result: ShootingResult) -> dict:
    spec = result.spec
    traj = result.trajectory
    trajectory = {
        "t": traj.times.tolist(),
        "q": traj.qs.tolist(),
        "v": traj.vs.tolist(),
        "tau": traj.taus.tolist(),
    }
    if spec.pipeline == "classical":
        trajectory["mubar"] = traj.mubars.tolist()
        trajectory["etabar"] = traj.etabars.tolist()
    else:
        trajectory["mu"] = traj.mus.tolist()
        trajectory["eta"] = traj.etas.tolist()
        trajectory["xi"] = traj.xis.tolist()
    return {
        "schema": SOLUTION_SCHEMA,
        "spec": {
            "model": spec.system.name,
            "params": dict(spec.system.params),
            "q0": spec.q0.tolist(), "v0": spec.v0.tolist(),
            "qT": spec.qT.tolist(), "vT": spec.vT.tolist(),
            "T": spec.T, "dt": spec.dt,
            "pipeline": spec.pipeline, "mode": spec.mode.value,
            "weights": spec.weights.tolist(),
        },
        "unknowns": result.unknowns.tolist(),
        "converged": bool(result.converged),
        "iterations": int(result.iterations),
        "residual": {"vector": result.terminal_residual.tolist(),
                     "norm": result.residual_norm},
        "cost": result.cost,
        "trajectory": trajectory,
        "diagnostics": {
            "message": result.diagnostics.get("message", ""),
            "residual_history": [float(x) for x in
                                 result.diagnostics.get("residual_history", [])],
            "jacobian_cond": float(result.diagnostics.get("jacobian_cond", 0.0)),
        },
    }


def save_solution(result: ShootingResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(solution_to_dict(result), sort_keys=True, indent=1))
        fh.write("\n")


def load_solution(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or doc.get("schema") != SOLUTION_SCHEMA:
        raise ConfigError(f"not a {SOLUTION_SCHEMA} file: {path}")
    return doc
