"""Tridiagonal building blocks shared by the HJB and Fokker-Planck sweeps.

All matrices are returned as ``(lower, diag, upper)`` coefficient vectors for
operators ``A`` such that the semi-discrete equation reads ``f_t + A f = 0``.
Transport in ``z`` uses central differences where the cell Peclet number
``|v| dz / D`` is at most 2 and Scharfetter-Gummel exponential fitting
elsewhere, so every matrix ``I + dt A`` is an M-matrix.
"""

from __future__ import annotations

import numpy as np

from . import kernels

PECLET_SWITCH = 2.0


def bernoulli(p):
    """``B(p) = p / (exp(p) - 1)`` with the removable singularity at 0."""
    p = np.asarray(p, dtype=float)
    small = np.abs(p) < 1e-8
    safe = np.where(small, 1.0, p)
    # beyond 700 the result underflows to 0 anyway; clamping avoids overflow warnings
    return np.where(small, 1.0 - 0.5 * p, safe / np.expm1(np.minimum(safe, 700.0)))


def _face_weights(v, D, dz):
    """Split ``v f - D f_z`` on a face into ``a f_left - b f_right``."""
    v = np.asarray(v, dtype=float)
    if D <= 0:
        return np.maximum(v, 0.0), -np.minimum(v, 0.0)
    peclet = v * dz / D
    central = np.abs(peclet) <= PECLET_SWITCH
    a = np.where(central, 0.5 * v + D / dz, D / dz * bernoulli(-peclet))
    b = np.where(central, -0.5 * v + D / dz, D / dz * bernoulli(peclet))
    return a, b


def z_conservative(v_faces, D, dz, n):
    """Flux-form ``d/dz (v f) - D f_zz`` with zero flux through the outer faces.

    ``v_faces`` is a scalar or an array of the ``n - 1`` interior face velocities.
    Column sums of ``A`` vanish, so ``I + dt A`` conserves mass exactly.
    """
    v = np.broadcast_to(np.asarray(v_faces, dtype=float), (n - 1,))
    a, b = _face_weights(v, D, dz)
    lower = np.zeros(n)
    diag = np.zeros(n)
    upper = np.zeros(n)
    diag[:-1] += a / dz
    diag[1:] += b / dz
    lower[1:] = -a / dz
    upper[:-1] = -b / dz
    return lower, diag, upper


def z_advective(v_nodes, D, dz):
    """Advective ``v f_z - D f_zz`` with homogeneous Neumann ends.

    Rows sum to zero, so constants are preserved exactly.
    """
    v = np.asarray(v_nodes, dtype=float)
    n = v.shape[0]
    if D > 0:
        peclet = v * dz / D
        central = np.abs(peclet) <= PECLET_SWITCH
        lower = np.where(central, -0.5 * v / dz - D / dz**2, -D / dz**2 * bernoulli(-peclet))
        upper = np.where(central, 0.5 * v / dz - D / dz**2, -D / dz**2 * bernoulli(peclet))
    else:
        lower = -np.maximum(v, 0.0) / dz
        upper = np.minimum(v, 0.0) / dz
    diag = -(lower + upper)
    # ghost cells mirror the boundary values
    diag[0] += lower[0]
    diag[n - 1] += upper[n - 1]
    lower = lower.copy()
    upper = upper.copy()
    lower[0] = 0.0
    upper[n - 1] = 0.0
    return lower, diag, upper


def periodic_diffusion(D, dx, n):
    """``-D f_xx`` on ``n`` periodic nodes."""
    c = D / dx**2
    return np.full(n, -c), np.full(n, 2 * c), np.full(n, -c)


def shifted(coeffs, scale):
    """Coefficients of ``I + scale * A``."""
    lower, diag, upper = coeffs
    return scale * lower, 1.0 + scale * diag, scale * upper


def transpose(coeffs, periodic=False):
    """Coefficients of ``A^T`` in the same (lower, diag, upper) layout."""
    lower, diag, upper = coeffs
    new_lower = np.roll(upper, 1)
    new_upper = np.roll(lower, -1)
    if not periodic:
        new_lower[0] = 0.0
        new_upper[-1] = 0.0
    return new_lower, diag.copy(), new_upper


def apply_axis0(coeffs, f):
    """``A f`` along axis 0 (non-periodic)."""
    lower, diag, upper = coeffs
    shape = (-1,) + (1,) * (f.ndim - 1)
    out = diag.reshape(shape) * f
    out[1:] += lower[1:].reshape(shape) * f[:-1]
    out[:-1] += upper[:-1].reshape(shape) * f[1:]
    return out


def implicit_z(coeffs, f, dt, theta=1.0):
    """Solve ``(I + theta dt A) g = (I - (1 - theta) dt A) f`` along axis 0."""
    rhs = f if theta == 1.0 else f - (1.0 - theta) * dt * apply_axis0(coeffs, f)
    return kernels.solve_tridiag_axis0(*shifted(coeffs, theta * dt), np.ascontiguousarray(rhs))


def implicit_x(coeffs, f, dt):
    """Solve ``(I + dt A) g = f`` along the periodic last axis."""
    return kernels.solve_cyclic_axis1(*shifted(coeffs, dt), np.ascontiguousarray(f))
