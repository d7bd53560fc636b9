"""Run configuration: a YAML document with ``grid``, ``model``, ``solver``, ``sim`` and ``output`` blocks.

Example::

    grid:   {T: 1.0, Nt: 100, Nx: 64, Nz: 64}          # Zmax and t0 optional
    model:
      sigma: 2.0
      sigma_x: 0.5
      cost: {name: product_differentiation, params: {weight: 1.0}}
      rho0: {kind: bump, center: 0.5, width: 0.15}     # or "uniform"
    solver: {Q: 8, damping: fixed, delta: 0.5, tol: 1.0e-4, k_max: 200,
             gradient: hybrid, theta: 0.5}
    sim:    {N: [100, 1000], delta: 0.005, seed: 0, replicas: 8,
             n_probes: 256, deviation: best_response, state: null}
    output: {dir: runs/example}

``sim.delta`` defaults to half the grid step, ``sim.n_probes`` to 256 and
``sim.state: null`` draws the state of the single-population rollout from
the prior.  ``sim.deviation`` is ``best_response`` or ``equilibrium``.

Every field is checked before anything is allocated and all problems are
reported together, each prefixed with its dotted path (``solver.tol``).
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass
from pathlib import Path

import yaml

from .costs import available_models, build_cost_model
from .belief import BeliefKernel
from .grid import Grid, initial_density, make_state_quadrature, required_zmax

ENV_PREFIX = "BAYESMFG_"

DEFAULTS = {
    "grid": {"T": 1.0, "Nt": 100, "Nx": 64, "Nz": 64, "Zmax": None, "t0": None},
    "model": {
        "sigma": 2.0,
        "sigma_x": 0.5,
        "cost": {"name": "product_differentiation", "params": {}},
        "rho0": {"kind": "bump", "center": 0.5, "width": 0.15},
    },
    "solver": {
        "Q": 8,
        "damping": "fixed",
        "delta": 0.5,
        "tol": 1e-4,
        "k_max": 200,
        "gradient": "hybrid",
        "theta": 0.5,
    },
    "sim": {
        "N": [100, 1000, 10000],
        "delta": None,
        "seed": 0,
        "replicas": 8,
        "n_probes": None,
        "start": "t0",
        "deviation": "best_response",
        "state": None,
    },
    "output": {"dir": "run"},
}


class ConfigError(ValueError):
    """One or more invalid fields; ``errors`` lists ``(path, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(f"  {p}: {m}" for p, m in self.errors))


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "params":
            out[key] = _merge(out[key], value, f"{path}{key}.")
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass
class RunConfig:
    data: dict
    source_text: str = ""

    # -- blocks ---------------------------------------------------------
    @property
    def grid(self) -> dict:
        return self.data["grid"]

    @property
    def model(self) -> dict:
        return self.data["model"]

    @property
    def solver(self) -> dict:
        return self.data["solver"]

    @property
    def sim(self) -> dict:
        return self.data["sim"]

    @property
    def output_dir(self) -> Path:
        return Path(self.data["output"]["dir"])

    # -- construction ---------------------------------------------------
    @classmethod
    def from_dict(cls, raw: dict | None, source_text: str = "") -> "RunConfig":
        raw = raw or {}
        if not isinstance(raw, dict):
            raise ConfigError([("<root>", "expected a mapping of blocks")])
        unknown = [k for k in raw if k not in DEFAULTS]
        if unknown:
            raise ConfigError([(k, "unknown block") for k in unknown])
        cfg = cls(_merge(DEFAULTS, raw), source_text)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        text = Path(path).read_text()
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError([("<file>", f"not valid YAML: {exc}")]) from None
        return cls.from_dict(raw, text)

    def with_overrides(self, out=None, seed=None) -> "RunConfig":
        data = copy.deepcopy(self.data)
        if out is not None:
            data["output"]["dir"] = str(out)
        if seed is not None:
            data["sim"]["seed"] = int(seed)
        new = RunConfig(data, self.source_text)
        new.validate()
        return new

    # -- validation -----------------------------------------------------
    def validate(self) -> None:
        errs: list[tuple[str, str]] = []

        def check(path, cond, msg):
            if not cond:
                errs.append((path, msg))

        def number(block, key, positive=False, allow_none=False):
            v = self.data[block].get(key)
            path = f"{block}.{key}"
            if v is None and allow_none:
                return None
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                errs.append((path, "must be a number"))
                return None
            if positive and not v > 0:
                errs.append((path, "must be positive"))
            return v

        def integer(block, key, minimum):
            v = self.data[block].get(key)
            path = f"{block}.{key}"
            if isinstance(v, bool) or not isinstance(v, int):
                errs.append((path, "must be an integer"))
                return None
            if v < minimum:
                errs.append((path, f"must be at least {minimum}"))
            return v

        for block in DEFAULTS:
            if not isinstance(self.data.get(block), dict):
                errs.append((block, "must be a mapping"))
        if errs:
            raise ConfigError(errs)
        for block, fields in DEFAULTS.items():
            for key in self.data[block]:
                if key not in fields:
                    errs.append((f"{block}.{key}", "unknown field"))

        T = number("grid", "T", positive=True)
        integer("grid", "Nt", 2)
        integer("grid", "Nx", 8)
        integer("grid", "Nz", 8)
        zmax = number("grid", "Zmax", positive=True, allow_none=True)
        t0 = number("grid", "t0", positive=True, allow_none=True)
        if t0 is not None and T is not None:
            check("grid.t0", t0 < T, "must be smaller than grid.T")

        sigma = number("model", "sigma", positive=True)
        sx = number("model", "sigma_x")
        if sx is not None:
            check("model.sigma_x", sx >= 0, "must be non-negative")
        cost = self.model.get("cost")
        if not isinstance(cost, dict) or "name" not in cost:
            errs.append(("model.cost", "must be a mapping with a name"))
        else:
            check("model.cost.name", cost["name"] in available_models(),
                  f"unknown model; choose from {available_models()}")
            params = cost.get("params") or {}
            if not isinstance(params, dict):
                errs.append(("model.cost.params", "must be a mapping"))
            elif cost["name"] in available_models():
                try:
                    build_cost_model(cost["name"], **params)
                except (TypeError, ValueError) as exc:
                    errs.append(("model.cost.params", str(exc)))
        rho0 = self.model.get("rho0")
        if rho0 != "uniform":
            if not isinstance(rho0, dict) or rho0.get("kind") != "bump":
                errs.append(("model.rho0", "must be 'uniform' or {kind: bump, center, width}"))
            else:
                c, w = rho0.get("center"), rho0.get("width")
                check("model.rho0.center", isinstance(c, (int, float)) and not isinstance(c, bool), "must be a number")
                check("model.rho0.width", isinstance(w, (int, float)) and not isinstance(w, bool) and w > 0,
                      "must be a positive number")

        integer("solver", "Q", 2)
        check("solver.damping", self.solver.get("damping") in ("fixed", "fictitious"), "must be 'fixed' or 'fictitious'")
        d = number("solver", "delta", positive=True)
        if d is not None:
            check("solver.delta", d <= 1, "must not exceed 1")
        number("solver", "tol", positive=True)
        integer("solver", "k_max", 0)
        check("solver.gradient", self.solver.get("gradient") in ("hybrid", "upwind", "lax-friedrichs"),
              "must be 'hybrid', 'upwind' or 'lax-friedrichs'")
        th = number("solver", "theta")
        if th is not None:
            check("solver.theta", 0.5 <= th <= 1, "must lie in [0.5, 1]")

        ns = self.sim.get("N")
        ns = ns if isinstance(ns, list) else [ns]
        check("sim.N", ns and all(isinstance(n, int) and not isinstance(n, bool) and n >= 2 for n in ns),
              "must be an integer >= 2 or a list of them")
        number("sim", "delta", positive=True, allow_none=True)
        seed = self.sim.get("seed")
        check("sim.seed", isinstance(seed, int) and not isinstance(seed, bool) and 0 <= seed < 2**64,
              "must be an unsigned 64-bit integer")
        integer("sim", "replicas", 2)
        if self.sim.get("n_probes") is not None:
            integer("sim", "n_probes", 1)
        check("sim.deviation", self.sim.get("deviation") in ("best_response", "equilibrium"),
              "must be 'best_response' or 'equilibrium'")
        number("sim", "state", allow_none=True)
        check("sim.start", self.sim.get("start") in ("t0", "zero"), "must be 't0' or 'zero'")
        check("output.dir", isinstance(self.data["output"].get("dir"), str), "must be a path string")

        if not errs and zmax is not None:
            need = required_zmax(make_state_quadrature(self.solver["Q"]), BeliefKernel(sigma), T)
            check("grid.Zmax", zmax >= need, f"must be at least {need:.6g} for Q={self.solver['Q']}")
        if errs:
            raise ConfigError(errs)

    # -- derived objects ------------------------------------------------
    def sim_sizes(self) -> list[int]:
        n = self.sim["N"]
        return list(n) if isinstance(n, list) else [n]

    def sim_delta(self) -> float:
        d = self.sim.get("delta")
        return float(d) if d is not None else self.grid["T"] / (2 * self.grid["Nt"])

    def build_problem(self):
        from .problem import Problem

        g, m, s = self.grid, self.model, self.solver
        kernel = BeliefKernel(float(m["sigma"]))
        quad = make_state_quadrature(int(s["Q"]))
        zmax = g["Zmax"] if g["Zmax"] is not None else required_zmax(quad, kernel, float(g["T"]))
        grid = Grid(T=float(g["T"]), Nt=int(g["Nt"]), Nx=int(g["Nx"]), Nz=int(g["Nz"]), Zmax=float(zmax),
                    t0=None if g["t0"] is None else float(g["t0"]))
        model = build_cost_model(m["cost"]["name"], **(m["cost"].get("params") or {}))
        return Problem(grid, kernel, quad, model, float(m["sigma_x"]), initial_density(m["rho0"], grid.x),
                       gradient=s["gradient"], theta=float(s["theta"]), meta={"rho0": m["rho0"]})


def env_overrides(environ=None) -> dict:
    """Flag values taken from ``BAYESMFG_CONFIG``, ``_OUT``, ``_WORKERS``, ``_SEED`` and ``_STRICT``."""
    env = os.environ if environ is None else environ
    out = {}
    for key in ("config", "out", "workers", "seed", "strict"):
        raw = env.get(ENV_PREFIX + key.upper())
        if raw is None or raw == "":
            continue
        if key in ("workers", "seed"):
            try:
                out[key] = int(raw)
            except ValueError:
                raise ConfigError([(ENV_PREFIX + key.upper(), "must be an integer")]) from None
        elif key == "strict":
            out[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            out[key] = raw
    return out
