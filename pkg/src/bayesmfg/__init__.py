"""Mean-field games in which players learn an unknown Gaussian state from private signals.

The usual entry points are :class:`RunConfig` (or :class:`Problem` built by
hand), :func:`solve_equilibrium`, and the N-player checks in :mod:`bayesmfg.mc_sim`.
"""

from .belief import BeliefKernel, GaussianLaw, posterior, signal_law_conditional, signal_law_marginal
from .config import ConfigError, RunConfig
from .costs import CostModel, available_models, build_cost_model, register_cost_model
from .equilibrium import EquilibriumError, EquilibriumResult, flow_metric, psi, solve_equilibrium
from .fp import CFLError, MassError, solve_fp_family, solve_tau
from .grid import Grid, StateQuadrature, make_state_quadrature, posterior_weights, required_zmax
from .hjb import extract_control, solve_hjb
from .kernels import BACKEND as KERNEL_BACKEND
from .mc_sim import SimConfig, estimate_epsilon, simulate_population
from .problem import Problem

__version__ = "0.1.0"

__all__ = [
    "BeliefKernel", "GaussianLaw", "posterior", "signal_law_conditional", "signal_law_marginal",
    "ConfigError", "RunConfig",
    "CostModel", "available_models", "build_cost_model", "register_cost_model",
    "EquilibriumError", "EquilibriumResult", "flow_metric", "psi", "solve_equilibrium",
    "CFLError", "MassError", "solve_fp_family", "solve_tau",
    "Grid", "StateQuadrature", "make_state_quadrature", "posterior_weights", "required_zmax",
    "extract_control", "solve_hjb",
    "KERNEL_BACKEND",
    "SimConfig", "estimate_epsilon", "simulate_population",
    "Problem",
]
