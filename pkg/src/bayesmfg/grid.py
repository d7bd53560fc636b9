"""Time, torus and signal grids plus the quadrature that discretizes the state prior."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, ndtr

from .belief import BeliefKernel, log_normal_pdf


@dataclass(frozen=True)
class Grid:
    """Uniform grids on ``[t0, T] x [-Zmax, Zmax] x [0, 1)``.

    Time slices are ``linspace(t0, T, Nt)``; with the default ``t0 = T / Nt``
    the step is ``T / Nt``.  Positions are the periodic nodes ``i / Nx``.  The
    signal axis is cell centred, ``z_j = -Zmax + (j + 1/2) dz``, so that the
    Neumann boundary sits on the outer cell faces.
    """

    T: float
    Nt: int
    Nx: int
    Nz: int
    Zmax: float
    t0: float | None = None

    def __post_init__(self):
        if self.t0 is None:
            object.__setattr__(self, "t0", self.T / self.Nt)
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.Nt < 2:
            raise ValueError("Nt must be at least 2")
        if self.Nx < 8 or self.Nz < 8:
            raise ValueError("Nx and Nz must be at least 8")
        if not 0 < self.t0 < self.T:
            raise ValueError("t0 must lie strictly inside (0, T)")
        if not self.Zmax > 0:
            raise ValueError("Zmax must be positive")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.T, self.Nt)

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / (self.Nt - 1)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.Nx) / self.Nx

    @property
    def dx(self) -> float:
        return 1.0 / self.Nx

    @property
    def dz(self) -> float:
        return 2.0 * self.Zmax / self.Nz

    @property
    def z(self) -> np.ndarray:
        return -self.Zmax + (np.arange(self.Nz) + 0.5) * self.dz

    @property
    def z_faces(self) -> np.ndarray:
        return -self.Zmax + np.arange(self.Nz + 1) * self.dz

    def refined(self, factor: int = 2) -> "Grid":
        """Same domain with every resolution multiplied by ``factor``."""
        return Grid(
            T=self.T,
            Nt=self.Nt * factor,
            Nx=self.Nx * factor,
            Nz=self.Nz * factor,
            Zmax=self.Zmax,
            t0=self.T / (self.Nt * factor) if math.isclose(self.t0, self.T / self.Nt) else self.t0,
        )


@dataclass(frozen=True)
class StateQuadrature:
    nodes: np.ndarray
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.nodes.shape != self.weights.shape:
            raise ValueError("nodes and weights must have the same shape")
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")

    def __len__(self):
        return len(self.nodes)

    @property
    def s_max(self) -> float:
        return float(np.max(np.abs(self.nodes)))

    def expect(self, values, axis=0):
        """Prior expectation of ``values`` indexed by node along ``axis``."""
        values = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
        return np.tensordot(self.weights, values, axes=(0, 0))


def make_state_quadrature(Q: int) -> StateQuadrature:
    """Gauss-Hermite rule for the standard normal prior of the state.

    >>> q = make_state_quadrature(2)
    >>> q.nodes.tolist(), q.weights.tolist()
    ([-1.0, 1.0], [0.5, 0.5])
    """
    if Q < 2:
        raise ValueError(f"need at least 2 quadrature nodes, got {Q}")
    x, w = np.polynomial.hermite.hermgauss(Q)
    nodes = math.sqrt(2.0) * x
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (w + w[::-1])
    weights = weights / math.fsum(weights)
    return StateQuadrature(nodes=nodes, weights=weights)


def required_zmax(quad: StateQuadrature, kernel: BeliefKernel, T: float) -> float:
    """Smallest admissible signal truncation: ``s_max T + 4 sigma sqrt(T)``."""
    return quad.s_max * T + 4.0 * kernel.sigma * math.sqrt(T)


def check_truncation(grid: Grid, quad: StateQuadrature, kernel: BeliefKernel) -> None:
    need = required_zmax(quad, kernel, grid.T)
    if grid.Zmax < need * (1 - 1e-12):
        raise ValueError(
            f"Zmax={grid.Zmax:.6g} too small: need >= {need:.6g} for s_max={quad.s_max:.4g}"
        )


def posterior_weights(quad: StateQuadrature, kernel: BeliefKernel, t, z) -> np.ndarray:
    """Bayes-reweighted prior nodes given ``Z_t = z``.

    Returns an array of shape ``(Q,) + np.shape(z)`` whose columns sum to one.
    At ``t = 0`` the prior weights are returned unchanged.
    """
    z = np.asarray(z, dtype=float)
    t = float(t)
    if t < 0:
        raise ValueError("t must be non-negative")
    shape = (len(quad),) + z.shape
    if t == 0:
        return np.broadcast_to(quad.weights.reshape((-1,) + (1,) * z.ndim), shape).copy()
    s = quad.nodes.reshape((-1,) + (1,) * z.ndim)
    logw = np.log(quad.weights).reshape(s.shape) + log_normal_pdf(z, s * t, kernel.sigma**2 * t)
    norm = logsumexp(logw, axis=0)
    bad = ~np.isfinite(norm)
    if np.any(bad):
        warnings.warn(
            f"posterior weights degenerate at t={t:g} for {int(bad.sum())} signal value(s); "
            "falling back to uniform weights",
            RuntimeWarning,
            stacklevel=2,
        )
        norm = np.where(bad, 0.0, norm)
        logw = np.where(bad, -math.log(len(quad)), logw)
    return np.exp(logw - norm)


def posterior_weight_table(grid: Grid, quad: StateQuadrature, kernel: BeliefKernel) -> np.ndarray:
    """``posterior_weights`` on every time slice of ``grid``; shape ``(Nt, Q, Nz)``."""
    return np.stack([posterior_weights(quad, kernel, t, grid.z) for t in grid.times])


def gaussian_cell_density(mean: float, variance: float, grid: Grid) -> np.ndarray:
    """Cell averages of ``N(mean, variance)`` on the signal axis.

    The two outer cells absorb the tails so the discrete mass is exactly one.
    """
    faces = grid.z_faces.copy()
    faces[0], faces[-1] = -np.inf, np.inf
    if variance == 0:
        mass = np.zeros(grid.Nz)
        j = int(np.clip(np.searchsorted(grid.z_faces, mean, side="right") - 1, 0, grid.Nz - 1))
        mass[j] = 1.0
    else:
        mass = np.diff(ndtr((faces - mean) / math.sqrt(variance)))
    return mass / grid.dz


def torus_distance(x, y):
    d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)) % 1.0
    return np.minimum(d, 1.0 - d)


def initial_density(spec, x: np.ndarray) -> np.ndarray:
    """Initial position density on the torus nodes ``x``.

    ``spec`` is ``"uniform"`` or a mapping ``{"kind": "bump", "center": c,
    "width": w}``; the bump is a wrapped Gaussian of standard deviation ``w``.
    """
    if isinstance(spec, str):
        spec = {"kind": spec}
    kind = spec.get("kind", "uniform")
    dx = 1.0 / len(x)
    if kind == "uniform":
        rho = np.ones_like(x, dtype=float)
    elif kind == "bump":
        center = float(spec.get("center", 0.5))
        width = float(spec.get("width", 0.1))
        if width <= 0:
            raise ValueError("bump width must be positive")
        d = torus_distance(x, center)
        rho = wrapped_gaussian(d, width**2)
    else:
        raise ValueError(f"unknown initial density kind {kind!r}")
    return rho / (rho.sum() * dx)


def wrapped_gaussian(offset, variance, n_wraps: int = 6):
    """Density of a Gaussian of given variance wrapped onto the unit torus."""
    offset = np.asarray(offset, dtype=float)
    k = np.arange(-n_wraps, n_wraps + 1).reshape((-1,) + (1,) * offset.ndim)
    return np.exp(log_normal_pdf(offset + k, 0.0, variance)).sum(axis=0)
