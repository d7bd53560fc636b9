"""Everything a solver needs about one game instance, with cached posterior tables."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .belief import BeliefKernel
from .costs import SEPARABLE, CostModel
from .grid import (
    Grid,
    StateQuadrature,
    check_truncation,
    gaussian_cell_density,
    posterior_weight_table,
)

GRADIENT_SCHEMES = ("hybrid", "upwind", "lax-friedrichs")


@dataclass(eq=False)
class Problem:
    """A discretized game.

    Parameters
    ----------
    grid, kernel, quad, model
        Discretization, signal noise, state quadrature and cost triple.
    sigma_x : float
        Position volatility ``sigma'``.
    rho0 : ndarray
        Initial position density on ``grid.x``.
    gradient : {"hybrid", "upwind", "lax-friedrichs"}
        Discretization of ``H(D_x u)`` in the HJB sweep.
    theta : float
        Implicitness of the ``z`` step (1 = backward Euler, 1/2 = Crank-Nicolson).
    """

    grid: Grid
    kernel: BeliefKernel
    quad: StateQuadrature
    model: CostModel
    sigma_x: float
    rho0: np.ndarray
    gradient: str = "hybrid"
    theta: float = 1.0
    check_zmax: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rho0 = np.asarray(self.rho0, dtype=float)
        if self.rho0.shape != (self.grid.Nx,):
            raise ValueError("rho0 must live on the x-grid")
        if np.any(self.rho0 < 0) or abs(self.rho0.sum() * self.grid.dx - 1) > 1e-10:
            raise ValueError("rho0 must be a non-negative unit-mass density")
        if self.sigma_x < 0:
            raise ValueError("sigma_x must be non-negative")
        if self.gradient not in GRADIENT_SCHEMES:
            raise ValueError(f"gradient must be one of {GRADIENT_SCHEMES}")
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [1/2, 1]")
        if self.check_zmax:
            check_truncation(self.grid, self.quad, self.kernel)

    @property
    def Q(self) -> int:
        return len(self.quad)

    @cached_property
    def weights(self) -> np.ndarray:
        """Posterior node weights, shape ``(Nt, Q, Nz)``."""
        return posterior_weight_table(self.grid, self.quad, self.kernel)

    @cached_property
    def state_cost_table(self) -> np.ndarray:
        """``sum_q w_q c(s_q, x)`` per slice, shape ``(Nt, Nz, Nx)``; zeros for general models."""
        g = self.grid
        if self.model.kind != SEPARABLE or self.model.state_cost is None:
            return np.zeros((g.Nt, g.Nz, g.Nx))
        per_node = np.stack([self.model.c(s, g.x) for s in self.quad.nodes])
        return np.einsum("tqz,qx->tzx", self.weights, per_node)

    def signal_density(self, s: float, k: int) -> np.ndarray:
        """Cell averages of ``N(s t_k, sigma^2 t_k)`` on the z-grid."""
        t = self.grid.times[k]
        return gaussian_cell_density(s * t, self.kernel.sigma**2 * t, self.grid)

    @cached_property
    def signal_density_table(self) -> np.ndarray:
        """Shape ``(Q, Nt, Nz)``."""
        return np.stack(
            [np.stack([self.signal_density(s, k) for k in range(self.grid.Nt)]) for s in self.quad.nodes]
        )

    def coupling(self, mu: np.ndarray):
        """Expected flow cost table ``(Nt, Nz, Nx)`` and terminal cost ``(Nz, Nx)`` under the flow ``mu``.

        ``mu`` has shape ``(Q, Nt, Nx)``.
        """
        g, model = self.grid, self.model
        flow_nodes = np.empty((g.Nt, self.Q, g.Nx))
        for q, s in enumerate(self.quad.nodes):
            for k in range(g.Nt):
                flow_nodes[k, q] = model.flow(s, g.x, mu[q, k])
        ftilde = np.einsum("tqz,tqx->tzx", self.weights, flow_nodes)
        term_nodes = np.stack([model.terminal(s, g.x, mu[q, -1]) for q, s in enumerate(self.quad.nodes)])
        gtilde = np.einsum("qz,qx->zx", self.weights[-1], term_nodes)
        return ftilde, gtilde

    def constant_flow(self, rho: np.ndarray | None = None) -> np.ndarray:
        """Flow equal to ``rho`` (default ``rho0``) for every node and slice."""
        rho = self.rho0 if rho is None else np.asarray(rho, dtype=float)
        return np.broadcast_to(rho, (self.Q, self.grid.Nt, self.grid.Nx)).copy()
