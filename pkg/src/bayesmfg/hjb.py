"""Backward finite-difference solver for the value function ``u(t, z, x)``.

One backward step from ``t_{k+1}`` to ``t_k``::

    u* = u^{k+1} - dt [H_h(D_x u^{k+1}) - Ftilde^{k+1}]          (explicit)
    (I - dt sigma'^2/2 D_xx) u** = u*                           (periodic x)
    (I - dt [r_t(z) D_z + sigma^2/2 D_zz]) u^k = u**            (Neumann z)

``r_t`` is evaluated at the midpoint of the step.  ``H_h`` is the discrete
Hamiltonian selected by ``Problem.gradient``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels, operators
from .costs import SEPARABLE, ExpectedControlCost, maximize_control
from .fp import CFLError
from .grid import Grid


@dataclass
class ValueField:
    u: np.ndarray
    grid: Grid
    diagnostics: dict = field(default_factory=dict)


@dataclass
class ControlField:
    alpha: np.ndarray
    grid: Grid


def _gradients(u, dx):
    up = np.roll(u, -1, axis=-1)
    um = np.roll(u, 1, axis=-1)
    return (up - u) / dx, (u - um) / dx, (up - um) / (2 * dx)


class DiscreteHamiltonian:
    """Evaluates ``H_h(t_k, z, x, u)`` on a full ``(Nz, Nx)`` slice.

    Returns the Hamiltonian values and the largest transport speed seen, which
    bounds the explicit step.
    """

    def __init__(self, problem):
        self.problem = problem
        self.diffusion = 0.5 * problem.sigma_x**2
        self.dx = problem.grid.dx

    def _maximize(self, k, p):
        pb = self.problem
        w = pb.weights[k][:, :, None]
        ct = ExpectedControlCost(pb.model, pb.quad.nodes, w, pb.grid.x[None, :])
        return maximize_control(ct, p)

    def control(self, k, u):
        """Optimal feedback ``-D_p H`` at the centred gradient."""
        p_c = _gradients(u, self.dx)[2]
        if self.problem.model.kind == SEPARABLE:
            return -p_c
        return self._maximize(k, p_c)[1]

    def __call__(self, k, u):
        pb = self.problem
        scheme = pb.gradient
        if pb.model.kind == SEPARABLE and scheme != "lax-friedrichs":
            ct = pb.state_cost_table[k]
            diff = self.diffusion if scheme == "hybrid" else 0.0
            h = kernels.hybrid_quadratic_hamiltonian(u, ct, self.dx, diff)
            p_plus, p_minus, _ = _gradients(u, self.dx)
            speed = max(np.abs(p_plus).max(), np.abs(p_minus).max())
            return h, speed
        return self._general(k, u)

    def _general(self, k, u):
        pb = self.problem
        p_plus, p_minus, p_c = _gradients(u, self.dx)
        if pb.model.kind == SEPARABLE:
            ct = pb.state_cost_table[k]

            def ham(p):
                return 0.5 * p**2 - ct, -p
        else:

            def ham(p):
                return self._maximize(k, p)

        h_c, a_c = ham(p_c)
        h_p, a_p = ham(p_plus)
        h_m, a_m = ham(p_minus)
        speed_local = np.maximum(np.maximum(np.abs(a_c), np.abs(a_p)), np.abs(a_m))
        if pb.gradient == "lax-friedrichs":
            h = h_c - 0.5 * speed_local * (p_plus - p_minus)
            return h, float(speed_local.max())
        # Godunov flux for a convex Hamiltonian: its minimizer p_hat has a_star(p_hat) = 0
        if pb.model.kind == SEPARABLE:
            p_hat = np.zeros_like(u)
        else:
            w = pb.weights[k][:, :, None]
            ctilde = ExpectedControlCost(pb.model, pb.quad.nodes, w, pb.grid.x[None, :])
            p_hat = -ctilde.da(np.zeros_like(u))
        h_left = ham(np.maximum(p_minus, p_hat))[0]
        h_right = ham(np.minimum(p_plus, p_hat))[0]
        godunov = np.maximum(h_left, h_right)
        if pb.gradient == "hybrid" and self.diffusion > 0:
            central = np.abs(a_c) * self.dx <= 2.0 * self.diffusion
            h = np.where(central, h_c, godunov)
        else:
            h = godunov
        return h, float(speed_local.max())


def hjb_sweep(problem, running_cost, terminal, check_cfl: bool = True) -> ValueField:
    """Backward sweep for arbitrary running cost ``(Nt, Nz, Nx)`` and terminal data ``(Nz, Nx)``."""
    g = problem.grid
    dt, dx = g.dt, g.dx
    times = g.times
    ham = DiscreteHamiltonian(problem)
    x_coeffs = operators.periodic_diffusion(0.5 * problem.sigma_x**2, dx, g.Nx)
    D = 0.5 * problem.kernel.sigma**2
    s2 = problem.kernel.sigma**2
    u = np.empty((g.Nt, g.Nz, g.Nx))
    u[-1] = terminal
    max_cfl = 0.0
    for k in range(g.Nt - 2, -1, -1):
        h, speed = ham(k + 1, u[k + 1])
        cfl = dt * speed / dx
        max_cfl = max(max_cfl, cfl)
        if check_cfl and cfl > 1.0:
            required = int(np.ceil(g.Nt * cfl)) + 1
            raise CFLError(
                f"HJB explicit Hamiltonian step has CFL number {cfl:.3f} at slice {k}; use Nt >= {required}",
                required_nt=required,
            )
        nxt = u[k + 1] - dt * (h - running_cost[k + 1])
        if problem.sigma_x > 0:
            nxt = operators.implicit_x(x_coeffs, nxt, dt)
        t_mid = 0.5 * (times[k] + times[k + 1])
        z_coeffs = operators.z_advective(-g.z / (t_mid + s2), D, g.dz)
        nxt = operators.implicit_z(z_coeffs, nxt, dt, problem.theta)
        if not np.all(np.isfinite(nxt)):
            raise FloatingPointError(f"HJB produced non-finite values at slice {k}")
        u[k] = nxt
    return ValueField(u=u, grid=g, diagnostics={"max_cfl": max_cfl})


def solve_hjb(problem, mu, source=None) -> ValueField:
    """Value function against the position flow ``mu`` of shape ``(Q, Nt, Nx)``.

    ``source`` (optional, ``(Nt, Nz, Nx)``) is added to the expected flow cost.
    """
    ftilde, gtilde = problem.coupling(mu)
    if source is not None:
        ftilde = ftilde + source
    vf = hjb_sweep(problem, ftilde, gtilde)
    vf.diagnostics["terminal_gap"] = float(np.abs(vf.u[-1] - gtilde).max())
    return vf


def extract_control(problem, value: ValueField) -> ControlField:
    """``alpha = -D_p H(t, z, x, D_x u)`` with the centred gradient on every slice."""
    ham = DiscreteHamiltonian(problem)
    alpha = np.stack([ham.control(k, value.u[k]) for k in range(problem.grid.Nt)])
    return ControlField(alpha=alpha, grid=problem.grid)


def interpolate_slice(field2d, grid: Grid, z, x):
    return kernels.bilinear_periodic(
        np.ascontiguousarray(field2d), float(grid.z[0]), grid.dz, grid.dx,
        np.asarray(z, dtype=float), np.asarray(x, dtype=float),
    )


def policy_value_check(problem, value: ValueField, control: ControlField, mu, x0: float,
                       n_paths: int, seed: int, substeps: int = 1):
    """Monte Carlo cost of the feedback ``control`` started from ``(t0, z=0, x0)``.

    Simulates the belief-reduced dynamics ``dZ = r_t(Z) dt + sigma dB``,
    ``dX = alpha dt + sigma' dB'`` with Euler-Maruyama (``substeps`` per grid
    step) and accumulates the expected costs along the path.

    Returns
    -------
    dict
        ``mc`` estimate, ``stderr``, the grid value ``u`` at the start point,
        and ``exploded`` (paths leaving ``|Z| <= 2 Zmax``).
    """
    from .costs import ExpectedControlCost

    g = problem.grid
    pb = problem
    rng = np.random.default_rng(seed)
    ftilde, gtilde = pb.coupling(mu)
    sigma, sx = pb.kernel.sigma, pb.sigma_x
    h = g.dt / substeps
    z = np.zeros(n_paths)
    x = np.full(n_paths, float(x0) % 1.0)
    cost = np.zeros(n_paths)
    times = g.times
    for k in range(g.Nt - 1):
        for j in range(substeps):
            t = times[k] + j * h
            lam = j / substeps
            a = (1 - lam) * interpolate_slice(control.alpha[k], g, z, x) + lam * interpolate_slice(control.alpha[k + 1], g, z, x)
            f = (1 - lam) * interpolate_slice(ftilde[k], g, z, x) + lam * interpolate_slice(ftilde[k + 1], g, z, x)
            # expected control cost at the path's own posterior
            w = _node_weights(pb, t, z)
            ct = ExpectedControlCost(pb.model, pb.quad.nodes, w, x)
            cost += h * (f + ct(a))
            dbz = rng.standard_normal(n_paths)
            dbx = rng.standard_normal(n_paths)
            z = z + z / (t + sigma**2) * h + sigma * np.sqrt(h) * dbz
            x = (x + a * h + sx * np.sqrt(h) * dbx) % 1.0
    cost += interpolate_slice(gtilde, g, z, x)
    exploded = int(np.sum(np.abs(z) > 2 * g.Zmax))
    u0 = float(interpolate_slice(value.u[0], g, np.array([0.0]), np.array([x0]))[0])
    return {
        "mc": float(cost.mean()),
        "stderr": float(cost.std(ddof=1) / np.sqrt(n_paths)),
        "u": u0,
        "exploded": exploded,
        "n_paths": n_paths,
        "seed": seed,
    }


def _node_weights(problem, t, z):
    from .grid import posterior_weights

    return posterior_weights(problem.quad, problem.kernel, t, z)
