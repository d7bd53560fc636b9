"""Forward solvers for the state-indexed Fokker-Planck family and its state-free factor.

For a fixed state ``s`` the density ``m(s, t, z, x)`` of (signal, position)
solves a transport-diffusion equation driven by the control.  It factorizes as
``m = phi_{s t, sigma^2 t}(z) tau(t, z, x)`` where ``tau`` (a conditional
density of ``x`` given ``z``) does not depend on ``s``; the equilibrium loop
therefore only needs one ``tau`` solve instead of one solve per state node.

Both solvers start at ``t0 > 0`` from the exact law at that time and take
IMEX steps: explicit conservative upwind transport in ``x``, then implicit
periodic diffusion in ``x``, then an implicit transport-diffusion solve in
``z`` (see ``operators``).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels, operators
from .grid import Grid

MASS_DRIFT_LIMIT = 1e-6
CLIP_BUDGET = 1e-12


class CFLError(RuntimeError):
    """Explicit transport step violates the stability bound."""

    def __init__(self, message, required_nt=None):
        super().__init__(message)
        self.required_nt = required_nt


class MassError(RuntimeError):
    pass


@dataclass
class DensityFamily:
    """``m[q][t, z, x]`` for every quadrature node."""

    m: np.ndarray
    grid: Grid
    nodes: np.ndarray
    diagnostics: dict = field(default_factory=dict)


@dataclass
class FactorDensity:
    tau: np.ndarray
    grid: Grid
    diagnostics: dict = field(default_factory=dict)


def face_velocity(alpha):
    """Average nodal controls onto the faces ``i + 1/2`` along x."""
    return 0.5 * (alpha + np.roll(alpha, -1, axis=-1))


def _check_cfl(v_face, dt, dx, grid, k):
    out_rate = np.maximum(v_face, 0.0) - np.minimum(np.roll(v_face, 1, axis=-1), 0.0)
    cfl = dt * float(out_rate.max(initial=0.0)) / dx
    if cfl > 1.0:
        required = int(np.ceil(grid.Nt * cfl)) + 1
        raise CFLError(
            f"x-transport CFL number {cfl:.3f} > 1 at step {k}; use Nt >= {required}",
            required_nt=required,
        )


def _forward(grid, control, first, z_coeffs_at, sigma_x, theta, what):
    """Shared forward loop; ``z_coeffs_at(k)`` gives the z-operator for step k -> k+1."""
    g = grid
    dt, dx, dz = g.dt, g.dx, g.dz
    x_coeffs = operators.periodic_diffusion(0.5 * sigma_x**2, dx, g.Nx)
    out = np.empty((g.Nt, g.Nz, g.Nx))
    out[0] = first
    mass = [float(first.sum() * dx * dz)]
    clipped = 0.0
    for k in range(g.Nt - 1):
        cur = out[k]
        v = face_velocity(control[k])
        _check_cfl(v, dt, dx, g, k)
        nxt = cur - dt * kernels.upwind_divergence(v, cur, dx)
        if sigma_x > 0:
            nxt = operators.implicit_x(x_coeffs, nxt, dt)
        nxt = operators.implicit_z(z_coeffs_at(k), nxt, dt, theta)
        neg = nxt < 0
        if np.any(neg):
            clipped += float(-nxt[neg].sum() * dx * dz)
            nxt[neg] = 0.0
            if clipped > CLIP_BUDGET:
                raise MassError(f"{what}: clipped negative mass {clipped:.3g} exceeds budget at step {k}")
        if not np.all(np.isfinite(nxt)):
            raise FloatingPointError(f"{what}: non-finite values at step {k}")
        out[k + 1] = nxt
        mass.append(float(nxt.sum() * dx * dz))
    return out, np.asarray(mass), clipped


def solve_fp_per_state(grid: Grid, control, kernel, s: float, rho0, sigma_x: float, theta: float = 1.0):
    """Density of (signal, position) conditional on the state ``s``.

    Parameters
    ----------
    control : ndarray, shape (Nt, Nz, Nx)
        Feedback control on the grid.
    rho0 : ndarray, shape (Nx,)
        Initial position density.

    Returns
    -------
    m : ndarray, shape (Nt, Nz, Nx)
    diagnostics : dict
        ``mass`` per slice, worst per-step ``mass_drift`` and ``clipped`` mass.
    """
    from .grid import gaussian_cell_density

    g = grid
    t0 = g.times[0]
    phi0 = gaussian_cell_density(s * t0, kernel.sigma**2 * t0, g)
    first = phi0[:, None] * np.asarray(rho0)[None, :]
    coeffs = operators.z_conservative(s, 0.5 * kernel.sigma**2, g.dz, g.Nz)
    m, mass, clipped = _forward(g, control, first, lambda k: coeffs, sigma_x, theta, f"fp(s={s:g})")
    drift = np.abs(np.diff(mass))
    diag = {
        "mass": mass,
        "mass_drift": float(drift.max(initial=0.0)),
        "total_mass_drift": float(abs(mass[-1] - mass[0])),
        "clipped": clipped,
    }
    if diag["total_mass_drift"] > MASS_DRIFT_LIMIT:
        step = int(np.argmax(drift))
        raise MassError(f"mass drift {diag['total_mass_drift']:.3g} exceeds {MASS_DRIFT_LIMIT} (worst step {step})")
    return m, diag


def solve_tau(grid: Grid, control, kernel, rho0, sigma_x: float, theta: float = 1.0) -> FactorDensity:
    """State-free factor ``tau`` started from ``tau(t0, z, x) = rho0(x)``.

    The ``z / t`` drift is frozen at the midpoint of each step.
    """
    g = grid
    times = g.times
    first = np.broadcast_to(np.asarray(rho0, dtype=float), (g.Nz, g.Nx)).copy()
    D = 0.5 * kernel.sigma**2

    def z_coeffs(k):
        t_mid = times[k] + 0.5 * g.dt
        return operators.z_advective(g.z / t_mid, D, g.dz)

    tau, _, clipped = _forward(g, control, first, z_coeffs, sigma_x, theta, "tau")
    xmass = tau.sum(axis=-1) * g.dx
    drift = float(np.abs(xmass - 1.0).max())
    if drift > MASS_DRIFT_LIMIT:
        raise MassError(f"tau lost its per-signal x-mass: worst deviation {drift:.3g}")
    return FactorDensity(tau=tau, grid=g, diagnostics={"xmass_deviation": drift, "clipped": clipped})


def solve_fp_family(problem, control, nodes=None, workers: int = 1) -> DensityFamily:
    """Per-state solves for every node (or the given subset), optionally threaded."""
    nodes = problem.quad.nodes if nodes is None else np.asarray(nodes, dtype=float)

    def one(s):
        return solve_fp_per_state(problem.grid, control, problem.kernel, s, problem.rho0, problem.sigma_x, problem.theta)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, nodes))
    else:
        results = [one(s) for s in nodes]
    m = np.stack([r[0] for r in results])
    diags = [r[1] for r in results]
    return DensityFamily(
        m=m, grid=problem.grid, nodes=nodes,
        diagnostics={
            "mass_drift": max(d["mass_drift"] for d in diags),
            "clipped": sum(d["clipped"] for d in diags),
        },
    )


def position_marginal(density, dz: float, dx: float):
    """``rho(x) = sum_z m(z, x) dz`` renormalized to unit mass.

    Returns ``(rho, factor)`` where ``factor`` is the mass before renormalizing.
    Works on a single slice ``(Nz, Nx)`` or stacked slices ``(..., Nz, Nx)``.
    """
    rho = density.sum(axis=-2) * dz
    factor = rho.sum(axis=-1, keepdims=True) * dx
    return rho / factor, np.squeeze(factor, axis=-1)


def factor_marginal(tau_slice, signal_density, dz: float, dx: float):
    """Position marginal of ``phi * tau`` for one state; ``signal_density`` has shape ``(Nz,)``."""
    return position_marginal(signal_density[:, None] * tau_slice, dz, dx)


def marginal_flow(problem, tau: FactorDensity) -> np.ndarray:
    """Position flow ``(Q, Nt, Nx)`` of every state node from the factor ``tau``."""
    g = problem.grid
    phi = problem.signal_density_table  # (Q, Nt, Nz)
    rho = np.einsum("qtz,tzx->qtx", phi, tau.tau) * g.dz
    factor = rho.sum(axis=-1, keepdims=True) * g.dx
    if np.max(np.abs(factor - 1.0)) > 1e-6:
        raise MassError(f"marginal renormalization factor off by {np.max(np.abs(factor - 1.0)):.3g}")
    return rho / factor


# ---------------------------------------------------------------------------
# linear step and its exact transpose, for duality checks
# ---------------------------------------------------------------------------

def _upwind_divergence_transpose(v_face, u, dx):
    vp = np.maximum(v_face, 0.0)
    vm = np.minimum(v_face, 0.0)
    grad_fwd = (u - np.roll(u, -1, axis=-1)) / dx  # u_i - u_{i+1} at face i+1/2
    return vp * grad_fwd + np.roll(vm * grad_fwd, 1, axis=-1)


def fp_step(m, alpha, s, grid, kernel, sigma_x):
    """One forward step of the per-state scheme (backward Euler in z)."""
    v = face_velocity(alpha)
    out = m - grid.dt * kernels.upwind_divergence(v, m, grid.dx)
    if sigma_x > 0:
        out = operators.implicit_x(operators.periodic_diffusion(0.5 * sigma_x**2, grid.dx, grid.Nx), out, grid.dt)
    coeffs = operators.z_conservative(s, 0.5 * kernel.sigma**2, grid.dz, grid.Nz)
    return operators.implicit_z(coeffs, out, grid.dt)


def fp_adjoint_step(u, alpha, s, grid, kernel, sigma_x):
    """Transpose of :func:`fp_step`: a backward step of the linear adjoint equation."""
    dt = grid.dt
    zc = operators.transpose(operators.shifted(
        operators.z_conservative(s, 0.5 * kernel.sigma**2, grid.dz, grid.Nz), dt))
    out = kernels.solve_tridiag_axis0(*zc, np.ascontiguousarray(u))
    if sigma_x > 0:
        xc = operators.transpose(operators.shifted(
            operators.periodic_diffusion(0.5 * sigma_x**2, grid.dx, grid.Nx), dt), periodic=True)
        out = kernels.solve_cyclic_axis1(*xc, np.ascontiguousarray(out))
    v = face_velocity(alpha)
    return out - dt * _upwind_divergence_transpose(v, out, grid.dx)
