# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_kernels_py``."""

import numpy as np
from libc.math cimport floor, fabs, fmax, fmin


def solve_tridiag_axis0(const double[::1] lower, const double[::1] diag,
                        const double[::1] upper, rhs_in):
    cdef double[:, ::1] rhs = np.array(rhs_in, dtype=np.float64, order="C", ndmin=2).reshape(diag.shape[0], -1)
    cdef Py_ssize_t n = diag.shape[0], m = rhs.shape[1], i, k
    cdef double[::1] cp = np.empty(n)
    cdef double denom, inv
    inv = 1.0 / diag[0]
    cp[0] = upper[0] * inv
    for k in range(m):
        rhs[0, k] *= inv
    for i in range(1, n):
        denom = diag[i] - lower[i] * cp[i - 1]
        inv = 1.0 / denom
        cp[i] = upper[i] * inv
        for k in range(m):
            rhs[i, k] = (rhs[i, k] - lower[i] * rhs[i - 1, k]) * inv
    for i in range(n - 2, -1, -1):
        for k in range(m):
            rhs[i, k] -= cp[i] * rhs[i + 1, k]
    out = np.asarray(rhs)
    return out.reshape(np.shape(rhs_in))


def solve_cyclic_axis1(const double[::1] lower, const double[::1] diag,
                       const double[::1] upper, rhs_in):
    cdef double[:, ::1] rhs = np.array(rhs_in, dtype=np.float64, order="C", ndmin=2)
    cdef Py_ssize_t n = diag.shape[0], m = rhs.shape[0], i, r
    cdef double gamma = -diag[0]
    cdef double alpha = upper[n - 1]
    cdef double beta = lower[0]
    cdef double[::1] b = np.array(diag, dtype=np.float64)
    cdef double[::1] cp = np.empty(n)
    cdef double[::1] inv = np.empty(n)
    cdef double[::1] q = np.zeros(n)
    cdef double vq, vy, fact
    b[0] -= gamma
    b[n - 1] -= alpha * beta / gamma
    # shared LU of the banded part
    inv[0] = 1.0 / b[0]
    cp[0] = upper[0] * inv[0]
    for i in range(1, n):
        inv[i] = 1.0 / (b[i] - lower[i] * cp[i - 1])
        cp[i] = upper[i] * inv[i]
    q[0] = gamma
    q[n - 1] = alpha
    q[0] *= inv[0]
    for i in range(1, n):
        q[i] = (q[i] - lower[i] * q[i - 1]) * inv[i]
    for i in range(n - 2, -1, -1):
        q[i] -= cp[i] * q[i + 1]
    vq = q[0] + beta / gamma * q[n - 1]
    for r in range(m):
        rhs[r, 0] *= inv[0]
        for i in range(1, n):
            rhs[r, i] = (rhs[r, i] - lower[i] * rhs[r, i - 1]) * inv[i]
        for i in range(n - 2, -1, -1):
            rhs[r, i] -= cp[i] * rhs[r, i + 1]
        vy = rhs[r, 0] + beta / gamma * rhs[r, n - 1]
        fact = vy / (1.0 + vq)
        for i in range(n):
            rhs[r, i] -= fact * q[i]
    return np.asarray(rhs).reshape(np.shape(rhs_in))


def upwind_divergence(face_velocity_in, m_in, double dx):
    cdef double[:, ::1] v = np.array(face_velocity_in, dtype=np.float64, order="C", ndmin=2)
    cdef double[:, ::1] m = np.array(m_in, dtype=np.float64, order="C", ndmin=2)
    cdef Py_ssize_t rows = m.shape[0], n = m.shape[1], r, i
    cdef double[:, ::1] out = np.empty((rows, n))
    cdef double[::1] flux = np.empty(n)
    cdef double vi
    for r in range(rows):
        for i in range(n):
            vi = v[r, i]
            if vi > 0:
                flux[i] = vi * m[r, i]
            else:
                flux[i] = vi * m[r, (i + 1) % n]
        out[r, 0] = (flux[0] - flux[n - 1]) / dx
        for i in range(1, n):
            out[r, i] = (flux[i] - flux[i - 1]) / dx
    return np.asarray(out).reshape(np.shape(m_in))


def hybrid_quadratic_hamiltonian(u_in, ctilde_in, double dx, double diffusion):
    cdef double[:, ::1] u = np.array(u_in, dtype=np.float64, order="C", ndmin=2)
    cdef double[:, ::1] c = np.array(np.broadcast_to(ctilde_in, np.shape(u_in)), dtype=np.float64, order="C", ndmin=2)
    cdef Py_ssize_t rows = u.shape[0], n = u.shape[1], r, i
    cdef double[:, ::1] out = np.empty((rows, n))
    cdef double pp, pm, pc, a, b
    for r in range(rows):
        for i in range(n):
            pp = (u[r, (i + 1) % n] - u[r, i]) / dx
            pm = (u[r, i] - u[r, (i - 1 + n) % n]) / dx
            pc = 0.5 * (pp + pm)
            if diffusion > 0 and fabs(pc) * dx <= 2.0 * diffusion:
                out[r, i] = 0.5 * pc * pc - c[r, i]
            else:
                a = fmax(pm, 0.0)
                b = fmin(pp, 0.0)
                out[r, i] = 0.5 * fmax(a * a, b * b) - c[r, i]
    return np.asarray(out).reshape(np.shape(u_in))


def bilinear_periodic(const double[:, ::1] field, double z0, double dz, double dx, zq_in, xq_in):
    cdef double[::1] zq = np.ascontiguousarray(zq_in, dtype=np.float64).ravel()
    cdef double[::1] xq = np.ascontiguousarray(xq_in, dtype=np.float64).ravel()
    cdef Py_ssize_t nz = field.shape[0], nx = field.shape[1], k, n = zq.shape[0]
    cdef Py_ssize_t j0, i0, i1
    cdef double fz, fx, wz, wx, xm, top, bot
    cdef double[::1] out = np.empty(n)
    for k in range(n):
        fz = (zq[k] - z0) / dz
        if fz < 0:
            fz = 0
        elif fz > nz - 1:
            fz = nz - 1
        j0 = <Py_ssize_t> fz
        if j0 > nz - 2:
            j0 = nz - 2
        wz = fz - j0
        xm = xq[k] - floor(xq[k])
        fx = xm / dx
        i0 = <Py_ssize_t> floor(fx)
        wx = fx - i0
        i0 = i0 % nx
        i1 = (i0 + 1) % nx
        top = (1 - wx) * field[j0, i0] + wx * field[j0, i1]
        bot = (1 - wx) * field[j0 + 1, i0] + wx * field[j0 + 1, i1]
        out[k] = (1 - wz) * top + wz * bot
    return np.asarray(out).reshape(np.shape(zq_in))
