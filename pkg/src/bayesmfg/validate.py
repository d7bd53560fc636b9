"""Invariant suite behind ``bayesmfg validate``: closed forms, factorization, mass, HJB orders."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from . import fp, hjb
from .belief import BeliefKernel, bayes_identity_residual, posterior
from .costs import build_cost_model
from .grid import gaussian_cell_density, initial_density
from .problem import Problem


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""

    def as_dict(self):
        return asdict(self)


def _le(name, value, threshold, detail=""):
    return Check(name, float(value), float(threshold), bool(value <= threshold), detail)


def _ge(name, value, threshold, detail=""):
    return Check(name, float(value), float(threshold), bool(value >= threshold), detail)


# ---------------------------------------------------------------------------
# belief
# ---------------------------------------------------------------------------

def belief_checks(sigma: float) -> list[Check]:
    kernel = BeliefKernel(sigma)
    worst_mean = worst_var = 0.0
    for t in (0.01, 0.1, 1.0, 5.0):
        for z in np.linspace(-10, 10, 41):
            post = posterior(kernel, t, z)
            # precision-weighted combination of prior and likelihood
            prec = 1.0 + t / sigma**2
            worst_mean = max(worst_mean, abs(post.mean - (z / sigma**2) / prec))
            worst_var = max(worst_var, abs(post.variance - 1.0 / prec))
    s, z = np.meshgrid(np.linspace(-4, 4, 33), np.linspace(-4, 4, 33))
    bayes = max(float(np.max(np.abs(bayes_identity_residual(kernel, t, s, z)))) for t in (0.1, 1.0, 3.0))
    return [
        _le("posterior mean closed form", worst_mean, 1e-12),
        _le("posterior variance closed form", worst_var, 1e-12),
        _le("Bayes density identity", bayes, 1e-12),
    ]


# ---------------------------------------------------------------------------
# forward equations
# ---------------------------------------------------------------------------

def sample_control(grid) -> np.ndarray:
    """Smooth, z-dependent control used to exercise the transport terms."""
    z = grid.z[None, :, None]
    x = grid.x[None, None, :]
    return np.broadcast_to(0.4 * np.sin(2 * np.pi * x) * np.tanh(z / 2), (grid.Nt, grid.Nz, grid.Nx)).copy()


def exact_signal_cells(grid, kernel, s) -> np.ndarray:
    return np.stack([gaussian_cell_density(s * t, kernel.sigma**2 * t, grid) for t in grid.times])


def factorization_error(problem, s: float, control=None) -> float:
    """L1 distance at the final time between the per-state density and ``phi * tau``."""
    g = problem.grid
    control = sample_control(g) if control is None else control
    m, _ = fp.solve_fp_per_state(g, control, problem.kernel, s, problem.rho0, problem.sigma_x, problem.theta)
    tau = fp.solve_tau(g, control, problem.kernel, problem.rho0, problem.sigma_x, problem.theta)
    phi = exact_signal_cells(g, problem.kernel, s)[-1]
    return float(np.abs(m[-1] - phi[:, None] * tau.tau[-1]).sum() * g.dz * g.dx)


def refined_problem(problem, factor: int = 2) -> Problem:
    return replace(problem, grid=problem.grid.refined(factor),
                   rho0=_resample_rho0(problem, problem.grid.refined(factor)))


def _resample_rho0(problem, grid):
    spec = problem.meta.get("rho0")
    if spec is not None:
        return initial_density(spec, grid.x)
    rho = np.interp(grid.x, np.append(problem.grid.x, 1.0), np.append(problem.rho0, problem.rho0[0]))
    return rho / (rho.sum() * grid.dx)


def mass_report(problem, s: float) -> dict:
    """Mass drift, clipping and the z-marginal error of the control-free solution."""
    g = problem.grid
    zero = np.zeros((g.Nt, g.Nz, g.Nx))
    m, diag = fp.solve_fp_per_state(g, zero, problem.kernel, s, problem.rho0, problem.sigma_x, problem.theta)
    _, diag_c = fp.solve_fp_per_state(g, sample_control(g), problem.kernel, s, problem.rho0, problem.sigma_x,
                                      problem.theta)
    zmarg = m.sum(axis=2) * g.dx
    exact = exact_signal_cells(g, problem.kernel, s)
    l1 = np.abs(zmarg - exact).sum(axis=1) * g.dz
    return {
        "mass_drift": max(diag["mass_drift"], diag_c["mass_drift"]),
        "clipped": diag["clipped"] + diag_c["clipped"],
        "z_marginal_final": float(l1[-1]),
        "z_marginal_worst": float(l1.max()),
    }


def forward_checks(problem) -> list[Check]:
    s_max = problem.quad.s_max
    out = []
    fine = refined_problem(problem)
    for s in (0.0, s_max):
        coarse_err = factorization_error(problem, s)
        fine_err = factorization_error(fine, s)
        out.append(_le(f"factorization L1 (s={s:.3g})", coarse_err, 3e-2))
        out.append(_ge(f"factorization refinement ratio (s={s:.3g})", coarse_err / fine_err, 1.7,
                       f"{coarse_err:.3g} -> {fine_err:.3g}"))
        rep = mass_report(problem, s)
        out.append(_le(f"mass drift per step (s={s:.3g})", rep["mass_drift"], 1e-10))
        out.append(_le(f"clipped mass (s={s:.3g})", rep["clipped"], 1e-12))
        out.append(_le(f"z-marginal L1 (s={s:.3g})", rep["z_marginal_final"], 2e-2,
                       f"worst over time {rep['z_marginal_worst']:.3g}"))
    return out


# ---------------------------------------------------------------------------
# HJB
# ---------------------------------------------------------------------------

class ManufacturedValue:
    """``u = a A(t) cos(2 pi x) cos(pi z / L) + b sin(2 pi x + w t)`` and its HJB source.

    ``cos(pi z / L)`` has zero slope at ``z = +-L``, matching the Neumann ends
    of a grid with ``Zmax = L``.  ``A`` is ``1 + t`` (``fast=False``) or
    ``cos(3 t)`` (``fast=True``); the fast variant has large time derivatives
    so that the time error dominates.
    """

    def __init__(self, sigma, sigma_x, half_width, fast=False):
        self.sigma, self.sigma_x, self.fast = sigma, sigma_x, fast
        self.a, self.b = 0.05, 0.05
        self.w = 4.0 if fast else 1.0
        self.k = 2 * np.pi
        self.kz = np.pi / half_width

    def _amp(self, t):
        if self.fast:
            return np.cos(3 * t), -3 * np.sin(3 * t)
        return 1 + t, np.ones_like(t)

    def value(self, t, z, x):
        amp, _ = self._amp(t)
        return self.a * amp * np.cos(self.k * x) * np.cos(self.kz * z) + self.b * np.sin(self.k * x + self.w * t)

    def source(self, t, z, x):
        a, b, k, w, kz = self.a, self.b, self.k, self.w, self.kz
        amp, damp = self._amp(t)
        e = np.cos(kz * z)
        cx, sx = np.cos(k * x), np.sin(k * x)
        phase = k * x + w * t
        u_t = a * damp * cx * e + b * w * np.cos(phase)
        u_x = -a * amp * k * sx * e + b * k * np.cos(phase)
        u_xx = -a * amp * k**2 * cx * e - b * k**2 * np.sin(phase)
        u_z = -a * amp * cx * kz * np.sin(kz * z)
        u_zz = -a * amp * cx * kz**2 * e
        r = z / (t + self.sigma**2)
        return -u_t + 0.5 * u_x**2 - r * u_z - 0.5 * self.sigma**2 * u_zz - 0.5 * self.sigma_x**2 * u_xx


def _manufactured_solve(problem, grid, exact):
    pb = _zero_cost_problem(problem, grid)
    T, Z, X = np.meshgrid(grid.times, grid.z, grid.x, indexing="ij")
    u = hjb.hjb_sweep(pb, exact.source(T, Z, X), exact.value(grid.T, Z[-1], X[-1])).u
    return u, exact.value(T, Z, X)


def _zero_cost_problem(problem, grid):
    return Problem(grid, problem.kernel, problem.quad, build_cost_model("zero"), problem.sigma_x,
                   np.ones(grid.Nx), gradient=problem.gradient, theta=problem.theta, check_zmax=False)


def manufactured_orders(problem, time_steps=(100, 200, 400), space_sizes=(32, 64, 128), space_steps=200,
                        t0=0.01) -> dict:
    """Observed L-infinity orders on smooth manufactured solutions.

    Time: the fast solution on a 64 x 64 grid with ``time_steps``.  Space:
    the slow solution on ``space_sizes`` with the first-order time error
    removed by Richardson extrapolation (``space_steps`` and twice as many).
    The observed order is the rate between the two finest levels.
    """
    from .grid import Grid

    g = problem.grid
    sig, sx = problem.kernel.sigma, problem.sigma_x
    fast = ManufacturedValue(sig, sx, g.Zmax, fast=True)
    slow = ManufacturedValue(sig, sx, g.Zmax, fast=False)
    e_t = []
    for n in time_steps:
        u, exact = _manufactured_solve(problem, Grid(T=g.T, Nt=n + 1, Nx=64, Nz=64, Zmax=g.Zmax, t0=t0), fast)
        e_t.append(float(np.max(np.abs(u - exact))))
    e_x = []
    for n in space_sizes:
        u1, exact = _manufactured_solve(problem, Grid(T=g.T, Nt=space_steps + 1, Nx=n, Nz=n, Zmax=g.Zmax, t0=t0), slow)
        u2, _ = _manufactured_solve(problem, Grid(T=g.T, Nt=2 * space_steps + 1, Nx=n, Nz=n, Zmax=g.Zmax, t0=t0), slow)
        e_x.append(float(np.max(np.abs(2 * u2[::2] - u1 - exact))))

    def rates(e, h):
        return (np.log(np.array(e[:-1]) / np.array(e[1:])) / np.log(np.array(h[1:]) / np.array(h[:-1]))).tolist()

    rt, rx = rates(e_t, time_steps), rates(e_x, space_sizes)
    return {
        "time_errors": e_t, "space_errors": e_x, "time_rates": rt, "space_rates": rx,
        "time_order": rt[-1], "space_order": rx[-1],
    }


def hjb_checks(problem, orders: bool = True) -> list[Check]:
    g = problem.grid
    zero = _zero_cost_problem(problem, g)
    u0 = hjb.solve_hjb(zero, zero.constant_flow()).u
    flat = Problem(g, problem.kernel, problem.quad, build_cost_model("constant_flow"), problem.sigma_x,
                   problem.rho0, gradient=problem.gradient, theta=problem.theta)
    uf = hjb.solve_hjb(flat, flat.constant_flow()).u
    out = [
        _le("zero-cost value", np.max(np.abs(u0)), 1e-12),
        _le("z-independence of value", np.max(np.ptp(uf, axis=1)), 5e-8),
    ]
    if orders:
        rep = manufactured_orders(problem)
        out.append(_ge("HJB time order", rep["time_order"], 1.0,
                       "errors " + " ".join(f"{e:.3g}" for e in rep["time_errors"])))
        out.append(_ge("HJB space order", rep["space_order"], 2.0,
                       "errors " + " ".join(f"{e:.3g}" for e in rep["space_errors"])))
    return out


def resample_flow(mu, grid, fine):
    """Linear interpolation of a flow ``(Q, Nt, Nx)`` onto a finer grid, renormalized per slice."""
    xc = np.append(grid.x, 1.0)
    in_time = np.empty((mu.shape[0], fine.Nt, grid.Nx))
    for q in range(mu.shape[0]):
        for i in range(grid.Nx):
            in_time[q, :, i] = np.interp(fine.times, grid.times, mu[q, :, i])
    wrapped = np.concatenate([in_time, in_time[..., :1]], axis=-1)
    out = np.empty((mu.shape[0], fine.Nt, fine.Nx))
    for q in range(mu.shape[0]):
        for k in range(fine.Nt):
            out[q, k] = np.interp(fine.x, xc, wrapped[q, k])
    return out / (out.sum(axis=-1, keepdims=True) * fine.dx)


def policy_check(problem, value, control, mu, x0: float = 0.5, n_paths: int = 100_000, seed: int = 0) -> dict:
    """Monte Carlo cost of the feedback control against the grid value, with a declared allowance.

    The allowance is the change in ``u(t0, 0, x0)`` when the value is recomputed
    on a grid refined by two in every direction against the same flow.
    """
    rep = hjb.policy_value_check(problem, value, control, mu, x0, n_paths, seed)
    fine = refined_problem(problem)
    uf = hjb.solve_hjb(fine, resample_flow(mu, problem.grid, fine.grid))
    u_fine = float(hjb.interpolate_slice(uf.u[0], fine.grid, np.array([0.0]), np.array([x0]))[0])
    rep["allowance"] = abs(u_fine - rep["u"])
    rep["gap"] = abs(rep["mc"] - rep["u"])
    rep["limit"] = 3 * rep["stderr"] + rep["allowance"]
    rep["passed"] = rep["gap"] <= rep["limit"] and rep["exploded"] == 0
    return rep


def run_suite(problem, orders: bool = True) -> list[Check]:
    return belief_checks(problem.kernel.sigma) + forward_checks(problem) + hjb_checks(problem, orders=orders)


def format_table(checks) -> str:
    width = max(len(c.name) for c in checks)
    lines = [f"{'check':<{width}}  {'value':>11}  {'limit':>9}  result"]
    for c in checks:
        lines.append(f"{c.name:<{width}}  {c.value:>11.4g}  {c.threshold:>9.3g}  {'PASS' if c.passed else 'FAIL'}"
                     + (f"  ({c.detail})" if c.detail else ""))
    return "\n".join(lines)
