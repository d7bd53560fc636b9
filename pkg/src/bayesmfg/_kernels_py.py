"""Pure numpy/scipy implementations of the hot kernels.

Signatures mirror ``_kernels_c``; see ``bayesmfg.kernels`` for the contracts.
"""

import numpy as np
from scipy.linalg import solve_banded


def solve_tridiag_axis0(lower, diag, upper, rhs):
    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def solve_cyclic_axis1(lower, diag, upper, rhs):
    n = diag.shape[0]
    gamma = -diag[0]
    alpha = upper[n - 1]  # row n-1, column 0
    beta = lower[0]  # row 0, column n-1
    b = diag.astype(float, copy=True)
    b[0] -= gamma
    b[n - 1] -= alpha * beta / gamma
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = b
    ab[2, :-1] = lower[1:]
    u = np.zeros(n)
    u[0] = gamma
    u[n - 1] = alpha
    rhs_t = np.ascontiguousarray(rhs.T)
    y = solve_banded((1, 1), ab, rhs_t, check_finite=False)
    q = solve_banded((1, 1), ab, u, check_finite=False)
    vy = y[0] + beta / gamma * y[n - 1]
    vq = q[0] + beta / gamma * q[n - 1]
    x = y - np.outer(q, vy / (1.0 + vq))
    return np.ascontiguousarray(x.T)


def upwind_divergence(face_velocity, m, dx):
    vp = np.maximum(face_velocity, 0.0)
    vm = np.minimum(face_velocity, 0.0)
    flux = vp * m + vm * np.roll(m, -1, axis=-1)
    return (flux - np.roll(flux, 1, axis=-1)) / dx


def hybrid_quadratic_hamiltonian(u, ctilde, dx, diffusion):
    up = np.roll(u, -1, axis=-1)
    um = np.roll(u, 1, axis=-1)
    p_plus = (up - u) / dx
    p_minus = (u - um) / dx
    p_c = 0.5 * (p_plus + p_minus)
    godunov = 0.5 * np.maximum(np.maximum(p_minus, 0.0) ** 2, np.minimum(p_plus, 0.0) ** 2)
    if diffusion > 0:
        central = np.abs(p_c) * dx <= 2.0 * diffusion
        h = np.where(central, 0.5 * p_c**2, godunov)
    else:
        h = godunov
    return h - ctilde


def bilinear_periodic(field, z0, dz, dx, zq, xq):
    nz, nx = field.shape
    fz = np.clip((zq - z0) / dz, 0.0, nz - 1.0)
    j0 = np.minimum(fz.astype(np.intp), nz - 2)
    wz = fz - j0
    fx = (xq % 1.0) / dx
    i0f = np.floor(fx)
    wx = fx - i0f
    i0 = i0f.astype(np.intp) % nx
    i1 = (i0 + 1) % nx
    top = (1 - wx) * field[j0, i0] + wx * field[j0, i1]
    bot = (1 - wx) * field[j0 + 1, i0] + wx * field[j0 + 1, i1]
    return (1 - wz) * top + wz * bot
