"""Command-line front end: describe, simulate, solve, verify.

Models are registered in code and selected by name; JSON configs and
flags parameterize them (flags win).  Outputs are deterministic: JSON
documents with sorted keys and CSV with 17-significant-digit floats, so
identical invocations produce byte-identical files.

Exit codes: 0 ok, 2 config error, 3 geometric degeneracy,
4 integration divergence, 5 solver non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import classical as cls
from . import constraints as con
from . import dynamics as dyn
from . import optimality as opt
from . import shooting as sh
from .coin import CoinParams, build_coin, coin_hamiltonian_spec
from .errors import (ConfigError, GeometryError, IntegrationDivergedError,
                     NonholoError)
from .geometry import DEFAULT_FD, FdScheme

REPORT_SCHEMA = "nonholo-report-v1"

REGISTRY = {
    "coin": {
        "defaults": {"m": 1.0, "J": 1.0},
        "build": lambda params: build_coin(CoinParams(**params)),
        "hamiltonian": lambda params: coin_hamiltonian_spec(CoinParams(**params)),
    },
}


def _parse_reals(text: str, name: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",")])
    except ValueError as exc:
        raise ConfigError(f"{name} must be comma-separated reals, got {text!r}") from exc


def _parse_params(text: str | None) -> dict[str, float]:
    if not text:
        return {}
    out = {}
    for item in text.split(","):
        if "=" not in item:
            raise ConfigError(f"parameters must look like name=value, got {item!r}")
        key, value = item.split("=", 1)
        try:
            out[key.strip()] = float(value)
        except ValueError as exc:
            raise ConfigError(f"parameter {key!r} has non-numeric value {value!r}") from exc
    return out


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return doc


def _setting(args: argparse.Namespace, config: dict, key: str, default=None):
    value = getattr(args, key.replace("-", "_"), None)
    if value is not None:
        return value
    return config.get(key, default)


def _build_model(args: argparse.Namespace, config: dict):
    name = _setting(args, config, "model")
    if not name:
        raise ConfigError("no model selected; pass --model or set it in the config")
    if name not in REGISTRY:
        known = ", ".join(sorted(REGISTRY))
        raise ConfigError(f"unknown model {name!r}; registered models: {known}")
    entry = REGISTRY[name]
    params = dict(entry["defaults"])
    overrides = _parse_params(_setting(args, config, "params"))
    config_params = config.get("parameters", {})
    for source in (config_params, overrides):
        for key, value in source.items():
            if key not in params:
                raise ConfigError(f"model {name!r} has no parameter {key!r}")
            params[key] = float(value)
    return entry, params, entry["build"](params)


def _fd(args: argparse.Namespace, config: dict) -> FdScheme:
    step = _setting(args, config, "fd-step")
    return FdScheme(step=float(step)) if step else DEFAULT_FD


def _json_out(doc: dict, path: str | None) -> None:
    text = json.dumps(doc, sort_keys=True, indent=1)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)


def _quadratic_form_table(gamma_bar: np.ndarray) -> list[dict]:
    n = gamma_bar.shape[0]
    table = []
    for i in range(n):
        terms = {}
        for j in range(n):
            for k in range(j, n):
                coeff = gamma_bar[i, j, k] + (gamma_bar[i, k, j] if k > j else 0.0)
                terms[f"v{j + 1}*v{k + 1}"] = float(coeff)
        table.append({"coordinate": i + 1, "terms": terms})
    return table


def cmd_describe(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    _, params, system = _build_model(args, config)
    at = _setting(args, config, "at")
    if at is None:
        raise ConfigError("describe needs a point; pass --at q1,...,qn")
    q = _parse_reals(at, "--at") if isinstance(at, str) else np.asarray(at, float)
    if q.size != system.n:
        raise ConfigError(f"point must have {system.n} coordinates, got {q.size}")
    fd = _fd(args, config)

    g = con.metric_at(system, q)
    gamma = con.christoffel_at(system, q, fd)
    gamma_bar = con.nonholonomic_christoffel(system, q, fd)
    basis = con.basis_at(system, q)
    pair = con.projectors(basis, g)
    doc = {
        "model": system.name,
        "params": params,
        "point": q.tolist(),
        "metric": g.tolist(),
        "christoffel": gamma.tolist(),
        "gamma_bar_quadratic_form": _quadratic_form_table(gamma_bar),
        "projector_p": pair.p.tolist(),
        "projector_q": pair.q.tolist(),
        "basis": {"x": basis.x.tolist(), "dual": basis.dual.tolist(),
                  "complement": basis.complement.tolist()},
        "input_oneforms": system.actuation_matrix(q).tolist(),
        "input_fields": dyn.input_vector_fields(system, q).tolist(),
        "unactuated_oneforms": system.unactuated_matrix(q).tolist(),
    }
    _json_out(doc, args.out)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    _, _, system = _build_model(args, config)
    fd = _fd(args, config)
    q0 = _parse_reals(_setting(args, config, "q0", "0," * (system.n - 1) + "0"), "--q0")
    v0 = _parse_reals(_setting(args, config, "v0", "0," * (system.n - 1) + "0"), "--v0")
    tau = _setting(args, config, "tau")
    tau = (_parse_reals(tau, "--tau") if isinstance(tau, str)
           else np.asarray(tau, float) if tau is not None else np.zeros(system.p))
    if tau.size != system.p:
        raise ConfigError(f"control must have {system.p} entries, got {tau.size}")
    T = float(_setting(args, config, "T", 1.0))
    dt = float(_setting(args, config, "dt", 1e-3))
    reproject = not args.no_reproject

    traj = dyn.integrate(system, dyn.DynState(q0, v0), lambda t, s: tau, T, dt,
                         reproject=reproject, fd=fd)
    out = args.out or "trajectory.csv"
    traj.to_csv(out)
    summary = {
        "final_q": traj.qs[-1].tolist(),
        "final_v": traj.vs[-1].tolist(),
        "max_drift": float(np.max(traj.diagnostics["drift"])),
        "energy_balance_error": dyn.energy_balance_error(system, traj),
        "out": out,
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


def _build_ocp(args: argparse.Namespace, config: dict) -> tuple[sh.OcpSpec, sh.SolveOptions]:
    entry, _, system = _build_model(args, config)
    need = lambda key: _setting(args, config, key)
    for key in ("q0", "v0", "qT", "vT", "T"):
        if need(key) is None:
            raise ConfigError(f"solve needs {key!r}; pass --{key} or set it in the config")
    as_vec = lambda key: (_parse_reals(need(key), f"--{key}")
                          if isinstance(need(key), str) else np.asarray(need(key), float))
    pipeline = _setting(args, config, "pipeline", "classical")
    mode_token = _setting(args, config, "mode", "paper")
    try:
        mode = opt.ConditionMode(mode_token)
    except ValueError as exc:
        raise ConfigError(f"mode must be 'paper' or 'full', got {mode_token!r}") from exc
    weights = _setting(args, config, "weights")
    weights = (_parse_reals(weights, "--weights")
               if isinstance(weights, str) else weights)
    spec = sh.OcpSpec(
        system=system, q0=as_vec("q0"), v0=as_vec("v0"), qT=as_vec("qT"),
        vT=as_vec("vT"), T=float(need("T")), pipeline=pipeline, mode=mode,
        weights=weights, dt=float(_setting(args, config, "dt", 1e-3)),
        hamiltonian=entry["hamiltonian"](dict(system.params))
        if pipeline == "classical" else None)
    options = sh.SolveOptions(
        max_iter=int(_setting(args, config, "max-iter", 60)),
        tol=float(_setting(args, config, "tol", 1e-8)),
    )
    return spec, options


def cmd_solve(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    spec, options = _build_ocp(args, config)
    guess = _setting(args, config, "guess")
    guess = _parse_reals(guess, "--guess") if isinstance(guess, str) else guess
    result = sh.solve(spec, guess=guess, options=options)
    out = args.out or "solution.json"
    sh.save_solution(result, out)
    print(json.dumps({
        "converged": bool(result.converged),
        "cost": result.cost,
        "residual_norm": result.residual_norm,
        "iterations": result.iterations,
        "out": out,
    }, sort_keys=True))
    return 0 if result.converged else 5


def _trajectory_from_dict(doc: dict):
    spec = doc["spec"]
    traj = doc["trajectory"]
    arr = lambda key: np.asarray(traj[key], dtype=float)
    if spec["pipeline"] == "classical":
        return cls.ClassicalTrajectory(times=arr("t"), qs=arr("q"), vs=arr("v"),
                                       mubars=arr("mubar"), etabars=arr("etabar"),
                                       taus=arr("tau"))
    return opt.ExtremalTrajectory(times=arr("t"), qs=arr("q"), vs=arr("v"),
                                  mus=arr("mu"), etas=arr("eta"), taus=arr("tau"),
                                  xis=arr("xi"))


def cmd_verify(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    path = args.solution or config.get("solution")
    if not path:
        raise ConfigError("verify needs a solution file; pass --solution PATH")
    doc = sh.load_solution(path)
    spec_echo = doc["spec"]
    model = spec_echo.get("model")
    if model not in REGISTRY:
        raise ConfigError(f"solution references unregistered model {model!r}")
    try:
        system = REGISTRY[model]["build"](spec_echo["params"])
        traj = _trajectory_from_dict(doc)
        weights = np.asarray(spec_echo["weights"], dtype=float)
        qT = np.asarray(spec_echo["qT"], dtype=float)
        vT = np.asarray(spec_echo["vT"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"solution file {path} does not match the schema: {exc}") from exc
    fd = _fd(args, config)

    recomputed = float(np.linalg.norm(
        weights * np.concatenate([traj.qs[-1] - qT, traj.vs[-1] - vT])))
    report = {
        "schema": REPORT_SCHEMA,
        "spec": spec_echo,
        "converged": doc["converged"],
        "stored_residual_norm": doc["residual"]["norm"],
        "recomputed_residual_norm": recomputed,
        "residual_roundtrip_error": abs(recomputed - doc["residual"]["norm"]),
    }
    if spec_echo["pipeline"] == "classical":
        report["cross_verify"] = sh.cross_verify_trajectory(system, traj, fd)
    else:
        residuals = {}
        for mode in (opt.ConditionMode.SIMPLIFIED, opt.ConditionMode.FULL):
            rec = opt.necessary_condition_residual(system, traj, mode, fd)
            residuals[mode.value] = {
                "control_max": float(np.max(rec.control)),
                "mu_proj_max": float(np.max(rec.mu_proj)),
                "mu_orth_max": float(np.max(rec.mu_orth)),
                "eta_max": float(np.max(rec.eta)),
                "curvature_term_max": float(np.max(rec.curvature_term)),
            }
            report["lambda_term"] = {
                "max_abs": float(np.max(np.abs(rec.lambda_term))),
                "profile": [float(x) for x in rec.lambda_term],
            }
        report["residuals"] = residuals
    _json_out(report, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nonholo",
        description="Constrained mechanical systems: describe geometry, simulate, "
                    "solve minimum-effort boundary problems, verify solutions.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--model", help="registered model name")
        p.add_argument("--params", help="model parameters, e.g. m=1,J=2")
        p.add_argument("--config", help="JSON config file (flags override)")
        p.add_argument("--fd-step", dest="fd_step", help="finite-difference step")
        p.add_argument("--out", help="output file path")

    p = sub.add_parser("describe", help="print geometric data at a point")
    common(p)
    p.add_argument("--at", help="chart point, comma-separated")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("simulate", help="integrate the motion equations")
    common(p)
    p.add_argument("--q0", help="initial configuration")
    p.add_argument("--v0", help="initial velocity")
    p.add_argument("--tau", help="constant control vector")
    p.add_argument("--T", help="horizon")
    p.add_argument("--dt", help="time step")
    p.add_argument("--no-reproject", action="store_true",
                   help="disable per-step velocity re-projection")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve", help="solve a two-point minimum-effort problem")
    common(p)
    for flag in ("--q0", "--v0", "--qT", "--vT"):
        p.add_argument(flag)
    p.add_argument("--T", help="horizon")
    p.add_argument("--dt", help="time step")
    p.add_argument("--pipeline", choices=["classical", "geometric"])
    p.add_argument("--mode", choices=["paper", "full"])
    p.add_argument("--weights", help="terminal weights, 2n comma-separated reals")
    p.add_argument("--tol", help="convergence tolerance")
    p.add_argument("--max-iter", dest="max_iter", help="iteration cap")
    p.add_argument("--guess", help="initial costate guess")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="check optimality conditions of a solution file")
    common(p)
    p.add_argument("--solution", help="solution JSON produced by solve")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GeometryError as exc:
        print(f"geometry error: {exc}", file=sys.stderr)
        return 3
    except IntegrationDivergedError as exc:
        print(f"integration diverged: {exc}", file=sys.stderr)
        return 4
    except NonholoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
