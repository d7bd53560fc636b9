"""Command-line front end: ``bayesmfg {solve,validate,simulate,check-monotone}``.

Common flags (``--config``, ``--out``, ``--workers``, ``--seed``, ``--strict``)
may appear before or after the subcommand.  Each has an environment fallback
named ``BAYESMFG_<FLAG>``; explicit flags win over the environment, which wins
over the config file.

Exit codes: 0 success, 1 a gate failed (validation check, non-monotone
model, or non-convergence under ``--strict``), 2 invalid configuration or
arguments, 3 a solver raised.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

import numpy as np
import yaml

from . import equilibrium, io, mc_sim, validate
from .config import ConfigError, RunConfig, env_overrides

EXIT_OK, EXIT_GATE, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
FLAGS = ("config", "out", "workers", "seed", "strict")


class SolverFailure(RuntimeError):
    """A numerical error, tagged with the module it came from."""

    def __init__(self, module, exc):
        self.module = module
        super().__init__(f"{module}: {exc}")


def _origin(exc) -> str:
    """Innermost package module on the traceback of ``exc`` (or its cause)."""
    root = exc.__cause__ or exc
    module = "bayesmfg"
    for frame, _ in traceback.walk_tb(root.__traceback__):
        name = frame.f_globals.get("__name__", "")
        if name.startswith("bayesmfg.") and name != "bayesmfg.cli":
            module = name
    return module


def _solver_call(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        raise SolverFailure(_origin(exc), exc) from exc


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

def _common(parser):
    s = argparse.SUPPRESS
    parser.add_argument("--config", metavar="PATH", default=s, help="YAML run configuration")
    parser.add_argument("--out", metavar="DIR", default=s, help="output directory (overrides output.dir)")
    parser.add_argument("--workers", metavar="K", type=int, default=s, help="cap on worker threads")
    parser.add_argument("--seed", metavar="U64", type=int, default=s, help="master seed (overrides sim.seed)")
    parser.add_argument("--strict", action="store_true", default=s, help="treat non-convergence as failure")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bayesmfg", description=__doc__.split("\n")[0])
    _common(parser)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("solve", "compute the equilibrium and dump its fields"),
        ("validate", "run the invariant suite and print a pass/fail table"),
        ("simulate", "N-player rollouts and epsilon-Nash estimates"),
        ("check-monotone", "test the interaction costs for monotonicity"),
    ):
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name == "validate":
            p.add_argument("--skip-orders", action="store_true", help="skip the manufactured-solution order study")
        if name == "check-monotone":
            p.add_argument("--pairs", type=int, default=64, help="number of random density pairs")
    return parser


def resolve(args, environ=None) -> dict:
    opts = {"config": None, "out": None, "workers": 1, "seed": None, "strict": False}
    opts.update(env_overrides(environ))
    for key in FLAGS:
        if hasattr(args, key):
            opts[key] = getattr(args, key)
    if opts["workers"] < 1:
        raise ConfigError([("--workers", "must be at least 1")])
    return opts


def load_config(opts) -> RunConfig:
    cfg = RunConfig.load(opts["config"]) if opts["config"] else RunConfig.from_dict({})
    return cfg.with_overrides(out=opts["out"], seed=opts["seed"])


def prepare_output(cfg: RunConfig, opts, command) -> Path:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    text = cfg.source_text or yaml.safe_dump(RunConfig.from_dict({}).data, sort_keys=True)
    (out / "config.yaml").write_text(text)
    io.write_json(out / "run.json", {
        "command": command,
        "overrides": {"out": opts["out"], "seed": opts["seed"], "workers": opts["workers"],
                      "strict": opts["strict"]},
        "effective_config": cfg.data,
    })
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _solve(cfg: RunConfig):
    problem = cfg.build_problem()
    s = cfg.solver
    result = _solver_call(equilibrium.solve_equilibrium, problem, damping=s["damping"], delta=float(s["delta"]),
                          tol=float(s["tol"]), k_max=int(s["k_max"]))
    return problem, result


def dump_equilibrium(out: Path, problem, result) -> None:
    g = problem.grid
    tzx = {"t": g.times, "z": g.z, "x": g.x}
    io.write_field(out, "u", result.u.u, ("t", "z", "x"), tzx)
    io.write_field(out, "tau", result.tau.tau, ("t", "z", "x"), tzx)
    io.write_field(out, "alpha", result.control.alpha, ("t", "z", "x"), tzx)
    io.write_field(out, "mu", result.mu, ("s", "t", "x"), {"s": problem.quad.nodes, "t": g.times, "x": g.x})
    io.write_table(out / "residuals.csv", {
        "iteration": list(range(len(result.residuals))),
        "residual": [float(r) for r in result.residuals],
    })


def equilibrium_summary(problem, result) -> dict:
    return {
        "status": "converged" if result.converged else "non-converged",
        "iterations": result.iterations,
        "final_residual": result.residuals[-1],
        "grid": {"T": problem.grid.T, "Nt": problem.grid.Nt, "Nx": problem.grid.Nx, "Nz": problem.grid.Nz,
                 "Zmax": problem.grid.Zmax, "t0": problem.grid.t0},
        "state_nodes": problem.quad.nodes,
        "state_weights": problem.quad.weights,
        "diagnostics": result.diagnostics,
    }


def cmd_solve(cfg, opts, args, out) -> int:
    problem, result = _solve(cfg)
    dump_equilibrium(out, problem, result)
    summary = equilibrium_summary(problem, result)
    summary["closure_residual"] = _solver_call(equilibrium.closure_residual, problem, result)
    io.write_json(out / "diagnostics.json", summary)
    print(f"{summary['status']} after {result.iterations} iterations, residual {result.residuals[-1]:.3e}")
    if not result.converged and opts["strict"]:
        return EXIT_GATE
    return EXIT_OK


def cmd_validate(cfg, opts, args, out) -> int:
    problem = cfg.build_problem()
    checks = _solver_call(validate.run_suite, problem, orders=not getattr(args, "skip_orders", False))
    table = validate.format_table(checks)
    print(table)
    io.write_json(out / "validate.json", {"checks": [c.as_dict() for c in checks],
                                          "passed": all(c.passed for c in checks)})
    io.write_table(out / "validate.csv", {
        "check": [c.name for c in checks],
        "value": [c.value for c in checks],
        "threshold": [c.threshold for c in checks],
        "result": ["PASS" if c.passed else "FAIL" for c in checks],
    })
    return EXIT_OK if all(c.passed for c in checks) else EXIT_GATE


def cmd_simulate(cfg, opts, args, out) -> int:
    problem, result = _solve(cfg)
    sim = cfg.sim
    policy = result.control.alpha
    deviation = policy if sim["deviation"] == "equilibrium" else None
    rows = {k: [] for k in ("N", "epsilon", "ci_low", "ci_high", "stderr", "replicas", "n_probes")}
    runs = []
    for n in cfg.sim_sizes():
        sc = mc_sim.SimConfig(N=n, delta=cfg.sim_delta(), seed=int(sim["seed"]), state=sim["state"],
                              start=sim["start"], n_probes=sim["n_probes"])
        outcome = _solver_call(mc_sim.simulate_population, problem, policy, sc)
        io.write_table(out / f"costs_N{n}.csv", {"player": list(range(n)), "cost": outcome.costs.tolist()})
        est = _solver_call(mc_sim.estimate_epsilon, problem, policy, sc, int(sim["replicas"]),
                           deviation=deviation, workers=opts["workers"])
        for key, value in (("N", n), ("epsilon", est.epsilon), ("ci_low", est.ci_low), ("ci_high", est.ci_high),
                           ("stderr", est.diagnostics["stderr"]), ("replicas", est.diagnostics["n_replicas"]),
                           ("n_probes", est.diagnostics["n_probes"])):
            rows[key].append(value)
        runs.append({
            "N": n,
            "state": outcome.state,
            "mean_cost": outcome.mean_cost,
            "cost_stderr": outcome.stderr,
            "epsilon": est.epsilon,
            "ci": [est.ci_low, est.ci_high],
            "replica_gains": est.replicas,
        })
        print(f"N={n:>6}  eps={est.epsilon:+.3e}  CI [{est.ci_low:+.3e}, {est.ci_high:+.3e}]")
    io.write_table(out / "epsilon.csv", rows)
    io.write_json(out / "simulate.json", {
        "equilibrium": {"status": "converged" if result.converged else "non-converged",
                        "iterations": result.iterations, "final_residual": result.residuals[-1]},
        "value_oracle": mc_sim.value_oracle(problem, result.u),
        "delta": cfg.sim_delta(),
        "deviation": sim["deviation"],
        "runs": runs,
    })
    if not result.converged and opts["strict"]:
        return EXIT_GATE
    return EXIT_OK


def cmd_check_monotone(cfg, opts, args, out) -> int:
    problem = cfg.build_problem()
    seed = int(cfg.sim["seed"])
    pairs = equilibrium.density_pairs(problem.grid.x, getattr(args, "pairs", 64), seed=seed)
    report = equilibrium.monotonicity_check(problem.model, pairs, problem.quad.nodes, problem.grid.x)
    report.update({"model": cfg.model["cost"]["name"], "seed": seed})
    io.write_json(out / "monotone.json", report)
    verdict = "monotone" if report["monotone"] else "NOT monotone"
    print(f"{report['model']}: {verdict} (smallest interaction integral {report['min']:.3e})")
    return EXIT_OK if report["monotone"] else EXIT_GATE


COMMANDS = {
    "solve": cmd_solve,
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "check-monotone": cmd_check_monotone,
}


def main(argv=None, environ=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        opts = resolve(args, environ)
        cfg = load_config(opts)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = prepare_output(cfg, opts, args.command)
    try:
        return COMMANDS[args.command](cfg, opts, args, out)
    except SolverFailure as exc:
        print(f"solver error in {exc}", file=sys.stderr)
        io.write_json(out / "error.json", {"module": exc.module, "message": str(exc.__cause__)})
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
