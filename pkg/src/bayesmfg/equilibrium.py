"""Fixed-point map on position flows and the damped iteration that solves it."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fp, hjb
from .grid import initial_density

DAMPING_MODES = ("fixed", "fictitious")
MONOTONE_THRESHOLD = -1e-10


class EquilibriumError(RuntimeError):
    """A solver failed inside the fixed-point loop."""

    def __init__(self, message, iteration):
        super().__init__(message)
        self.iteration = iteration


@dataclass
class PsiOutput:
    flow: np.ndarray
    value: hjb.ValueField
    control: hjb.ControlField
    tau: fp.FactorDensity


@dataclass
class EquilibriumResult:
    u: hjb.ValueField
    tau: fp.FactorDensity
    mu: np.ndarray
    iterations: int
    residuals: list
    converged: bool
    control: hjb.ControlField | None = None
    diagnostics: dict = field(default_factory=dict)

    def density_family(self, problem, workers: int = 1) -> fp.DensityFamily:
        """Per-state densities driven by the equilibrium control (computed on demand)."""
        return fp.solve_fp_family(problem, self.control.alpha, workers=workers)


def check_flow(problem, mu, atol: float = 1e-8) -> np.ndarray:
    g = problem.grid
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (problem.Q, g.Nt, g.Nx):
        raise ValueError(f"flow must have shape {(problem.Q, g.Nt, g.Nx)}, got {mu.shape}")
    if np.any(mu < -atol):
        raise ValueError("flow has negative entries")
    mass = mu.sum(axis=-1) * g.dx
    if np.max(np.abs(mass - 1.0)) > 1e-6:
        raise ValueError(f"flow slices are not unit mass (worst {np.max(np.abs(mass - 1.0)):.3g})")
    return mu


def psi_full(problem, mu) -> PsiOutput:
    value = hjb.solve_hjb(problem, mu)
    control = hjb.extract_control(problem, value)
    tau = fp.solve_tau(problem.grid, control.alpha, problem.kernel, problem.rho0, problem.sigma_x, problem.theta)
    return PsiOutput(flow=fp.marginal_flow(problem, tau), value=value, control=control, tau=tau)


def psi(problem, mu) -> np.ndarray:
    """Best-response flow: HJB against ``mu``, then the forward factor, then marginals."""
    return psi_full(problem, check_flow(problem, mu)).flow


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def torus_w1(rho1, rho2, dx):
    """Wasserstein-1 distance on the unit circle between densities on uniform nodes.

    Works on the last axis and broadcasts over the leading ones.
    """
    diff = np.cumsum((np.asarray(rho1) - np.asarray(rho2)) * dx, axis=-1)
    shift = np.median(diff, axis=-1, keepdims=True)
    return np.abs(diff - shift).sum(axis=-1) * dx


def flow_metric(mu1, mu2, dx=None) -> float:
    """Largest torus W1 distance over all (state node, time) slices."""
    mu1 = np.asarray(mu1, dtype=float)
    if dx is None:
        dx = 1.0 / mu1.shape[-1]
    return float(np.max(torus_w1(mu1, mu2, dx)))


def holder_diagnostics(mu, grid, nodes) -> dict:
    """Empirical 1/2-Holder constants of the flow in time and in the state."""
    mu = np.asarray(mu, dtype=float)
    dx = grid.dx
    in_t = torus_w1(mu[:, 1:], mu[:, :-1], dx) / np.sqrt(grid.dt)
    out = {"time_constant": float(in_t.max(initial=0.0))}
    if len(nodes) > 1:
        gaps = np.sqrt(np.abs(np.diff(nodes)))[:, None]
        in_s = torus_w1(mu[1:], mu[:-1], dx) / gaps
        out["state_constant"] = float(in_s.max())
    else:
        out["state_constant"] = 0.0
    return out


# ---------------------------------------------------------------------------
# iteration
# ---------------------------------------------------------------------------

def _step_size(mode, delta, k):
    if k == 0:
        return 1.0
    return 1.0 / (k + 1) if mode == "fictitious" else delta


def solve_equilibrium(problem, damping: str = "fixed", delta: float = 0.5, tol: float = 1e-4,
                      k_max: int = 200, mu0=None, callback=None) -> EquilibriumResult:
    """Damped Picard iteration ``mu <- (1 - d_k) mu + d_k Psi(mu)``.

    The first update is always a full step.  Iteration stops once the
    fixed-point residual ``metric(Psi(mu_k), mu_k)`` drops below ``tol``; then
    ``mu_k`` is returned together with the value and factor computed against
    it.  Running out of iterations sets ``converged=False`` instead of raising.
    """
    if damping not in DAMPING_MODES:
        raise ValueError(f"damping must be one of {DAMPING_MODES}")
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    mu = problem.constant_flow() if mu0 is None else check_flow(problem, mu0).copy()
    residuals: list[float] = []
    steps: list[float] = []
    k = 0
    while True:
        try:
            out = psi_full(problem, mu)
        except (RuntimeError, FloatingPointError) as exc:
            raise EquilibriumError(f"iteration {k}: {exc}", k) from exc
        res = flow_metric(out.flow, mu, problem.grid.dx)
        residuals.append(res)
        if callback is not None:
            callback(k, res)
        if res < tol or k >= k_max:
            break
        d = _step_size(damping, delta, k)
        steps.append(d)
        mu = (1.0 - d) * mu + d * out.flow
        k += 1
    converged = residuals[-1] < tol
    diag = {
        "damping": damping,
        "delta": delta,
        "tol": tol,
        "k_max": k_max,
        "final_residual": residuals[-1],
        "step_sizes": steps,
        "holder": holder_diagnostics(mu, problem.grid, problem.quad.nodes),
        "hjb_max_cfl": out.value.diagnostics.get("max_cfl"),
        "tau_xmass_deviation": out.tau.diagnostics.get("xmass_deviation"),
    }
    return EquilibriumResult(
        u=out.value, tau=out.tau, mu=mu, iterations=k, residuals=residuals,
        converged=converged, control=out.control, diagnostics=diag,
    )


def closure_residual(problem, result: EquilibriumResult) -> float:
    """``metric(Psi(mu*), mu*)`` recomputed from scratch."""
    return flow_metric(psi(problem, result.mu), result.mu, problem.grid.dx)


# ---------------------------------------------------------------------------
# monotonicity and uniqueness
# ---------------------------------------------------------------------------

def density_pairs(x, n_pairs: int, seed: int = 0):
    """Seeded pairs of test densities: wrapped bumps, bump mixtures and perturbed uniforms."""
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=float)
    dx = 1.0 / x.size

    def bump():
        return initial_density({"kind": "bump", "center": rng.uniform(), "width": rng.uniform(0.03, 0.3)}, x)

    def mixture():
        w = rng.uniform(0.1, 0.9)
        return w * bump() + (1 - w) * bump()

    def perturbed():
        k = rng.integers(1, 5)
        amp = rng.uniform(0, 0.9)
        return 1.0 + amp * np.cos(2 * np.pi * k * x + rng.uniform(0, 2 * np.pi))

    makers = (bump, mixture, perturbed)
    for i in range(n_pairs):
        a = makers[i % 3]()
        b = makers[rng.integers(3)]()
        yield a / (a.sum() * dx), b / (b.sum() * dx)


def monotonicity_check(model, pairs, states, x) -> dict:
    """Smallest interaction integral ``int (r1 - r2)(F(r1) - F(r2))`` over pairs and states.

    Both the flow and the terminal costs are tested.  The model is declared
    monotone when the minimum is at least ``-1e-10``.
    """
    x = np.asarray(x, dtype=float)
    dx = 1.0 / x.size
    min_flow = np.inf
    min_terminal = np.inf
    count = 0
    for r1, r2 in pairs:
        count += 1
        for s in states:
            dflow = model.flow(s, x, r1) - model.flow(s, x, r2)
            dterm = model.terminal(s, x, r1) - model.terminal(s, x, r2)
            min_flow = min(min_flow, float(np.sum((r1 - r2) * dflow) * dx))
            min_terminal = min(min_terminal, float(np.sum((r1 - r2) * dterm) * dx))
    worst = min(min_flow, min_terminal)
    return {
        "pairs": count,
        "states": len(states),
        "min_flow": min_flow,
        "min_terminal": min_terminal,
        "min": worst,
        "monotone": worst >= MONOTONE_THRESHOLD,
    }


def bump_flow(problem, center: float = 0.25, width: float = 0.15) -> np.ndarray:
    rho = initial_density({"kind": "bump", "center": center, "width": width}, problem.grid.x)
    return problem.constant_flow(rho)


def uniqueness_experiment(problem, damping="fixed", delta=0.5, tol=1e-4, k_max=200) -> dict:
    """Solve from a uniform and from a bump initial flow and compare the limits."""
    runs = {}
    for label, mu0 in (("uniform", problem.constant_flow(np.ones(problem.grid.Nx))), ("bump", bump_flow(problem))):
        runs[label] = solve_equilibrium(problem, damping=damping, delta=delta, tol=tol, k_max=k_max, mu0=mu0)
    a, b = runs["uniform"], runs["bump"]
    return {
        "flow_distance": flow_metric(a.mu, b.mu, problem.grid.dx),
        "value_distance": float(np.max(np.abs(a.u.u - b.u.u))),
        "iterations": {k: r.iterations for k, r in runs.items()},
        "converged": all(r.converged for r in runs.values()),
        "results": runs,
    }
