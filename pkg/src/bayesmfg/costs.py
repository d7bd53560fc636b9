"""State-dependent cost triples, their posterior expectations and the Hamiltonian.

A cost model bundles

* ``C(s, x, a)`` -- flow control cost,
* ``F(s, x, rho)`` -- flow interaction cost,
* ``G(s, x, rho)`` -- terminal cost.

``rho`` is always a density sampled on the uniform torus nodes ``j / len(rho)``;
``x`` may be any array of positions.  Separable-quadratic models have
``C = c(s, x) + a^2 / 2`` and get a closed-form Hamiltonian; everything else
goes through a damped Newton solve on the (scalar) control.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .belief import BeliefKernel
from .grid import StateQuadrature, posterior_weights, torus_distance

SEPARABLE = "separable-quadratic"
GENERAL = "general"

NEWTON_TOL = 1e-10
NEWTON_MAXITER = 100


class HamiltonianError(RuntimeError):
    """Newton iteration for the optimal control failed to converge."""

    def __init__(self, message, t=None, z=None, x=None, p=None):
        super().__init__(message)
        self.t, self.z, self.x, self.p = t, z, x, p


def _zero(s, x, *args):
    return np.zeros(np.broadcast(np.asarray(s), np.asarray(x)).shape)


@dataclass(frozen=True)
class CostModel:
    name: str
    flow: Callable = _zero
    terminal: Callable = _zero
    kind: str = SEPARABLE
    state_cost: Callable | None = None
    control_cost: Callable | None = None
    control_cost_da: Callable | None = None
    control_cost_daa: Callable | None = None
    flow_uses_rho: bool = True
    terminal_uses_rho: bool = True
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in (SEPARABLE, GENERAL):
            raise ValueError(f"unknown cost structure {self.kind!r}")
        if self.kind == GENERAL and (self.control_cost is None or self.control_cost_da is None):
            raise ValueError("general cost models need control_cost and control_cost_da")

    @property
    def uncoupled(self) -> bool:
        return not (self.flow_uses_rho or self.terminal_uses_rho)

    def C(self, s, x, a):
        if self.kind == SEPARABLE:
            a = np.asarray(a, dtype=float)
            base = self.state_cost(s, x) if self.state_cost is not None else 0.0
            return base + 0.5 * a**2
        return self.control_cost(s, x, a)

    def C_da(self, s, x, a):
        if self.kind == SEPARABLE:
            return np.asarray(a, dtype=float) + 0.0 * np.asarray(x, dtype=float)
        return self.control_cost_da(s, x, a)

    def C_daa(self, s, x, a, h=1e-5):
        if self.kind == SEPARABLE:
            return np.ones(np.broadcast(np.asarray(a), np.asarray(x)).shape)
        if self.control_cost_daa is not None:
            return self.control_cost_daa(s, x, a)
        return (self.control_cost_da(s, x, a + h) - self.control_cost_da(s, x, a - h)) / (2 * h)

    def c(self, s, x):
        """Control-free part of a separable-quadratic control cost."""
        if self.state_cost is None:
            return _zero(s, x)
        return self.state_cost(s, x)


def interp_periodic(values, x):
    """Linear interpolation of values on the nodes ``j / n`` at torus points ``x``."""
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    pos = (np.asarray(x, dtype=float) % 1.0) * n
    i0 = np.floor(pos).astype(np.intp) % n
    frac = pos - np.floor(pos)
    return (1.0 - frac) * values[..., i0] + frac * values[..., (i0 + 1) % n]


def mean_square_distance(x, rho):
    """``int |x - y|^2 rho(dy)`` with the torus metric."""
    rho = np.asarray(rho, dtype=float)
    n = rho.shape[-1]
    y = np.arange(n) / n
    x = np.asarray(x, dtype=float)
    d2 = torus_distance(x[..., None], y) ** 2
    return d2 @ rho / n


# ---------------------------------------------------------------------------
# built-in catalog
# ---------------------------------------------------------------------------

def zero_model() -> CostModel:
    return CostModel("zero", flow_uses_rho=False, terminal_uses_rho=False)


def constant_flow(level: float = 1.0) -> CostModel:
    def flow(s, x, rho):
        return level + _zero(s, x)

    return CostModel(
        "constant_flow", flow=flow, flow_uses_rho=False, terminal_uses_rho=False,
        params={"level": level},
    )


def state_target(weight: float = 1.0, state_scale: float = 1.0) -> CostModel:
    """Terminal pull towards the (scaled) state; no interaction at all."""

    def terminal(s, x, rho):
        return weight * torus_distance(x, state_scale * np.asarray(s)) ** 2

    return CostModel(
        "state_target", terminal=terminal, flow_uses_rho=False, terminal_uses_rho=False,
        params={"weight": weight, "state_scale": state_scale},
    )


def product_differentiation(weight: float = 1.0, state_scale: float = 1.0) -> CostModel:
    """``G(s, x, rho) = |x - s|^2 - int |x - y|^2 rho(dy)``, flow cost ``a^2 / 2``.

    ``state_scale`` maps the state onto the torus (``1`` reproduces the plain
    formula); ``weight`` multiplies the whole terminal cost.
    """

    def terminal(s, x, rho):
        target = torus_distance(x, state_scale * np.asarray(s)) ** 2
        return weight * (target - mean_square_distance(x, rho))

    return CostModel(
        "product_differentiation", terminal=terminal, flow_uses_rho=False,
        params={"weight": weight, "state_scale": state_scale},
    )


def crowd_aversion(crowd: float = 1.0, weight: float = 1.0, state_scale: float = 1.0) -> CostModel:
    """Local congestion ``F = crowd * rho(x)`` plus a terminal pull to the state.

    Monotone state by state: the interaction integral is a perfect square.
    """

    def flow(s, x, rho):
        return crowd * interp_periodic(rho, x) + _zero(s, x)

    def terminal(s, x, rho):
        return weight * torus_distance(x, state_scale * np.asarray(s)) ** 2

    return CostModel(
        "crowd_aversion", flow=flow, terminal=terminal, terminal_uses_rho=False,
        params={"crowd": crowd, "weight": weight, "state_scale": state_scale},
    )


def quartic_control(gamma: float = 1.0, weight: float = 1.0, state_scale: float = 1.0) -> CostModel:
    """Non-quadratic control cost ``gamma a^4 / 4 + a^2 / 2`` with a terminal pull."""

    def control(s, x, a):
        a = np.asarray(a, dtype=float)
        return gamma * a**4 / 4 + a**2 / 2 + _zero(s, x)

    def control_da(s, x, a):
        a = np.asarray(a, dtype=float)
        return gamma * a**3 + a + _zero(s, x)

    def control_daa(s, x, a):
        a = np.asarray(a, dtype=float)
        return 3 * gamma * a**2 + 1 + _zero(s, x)

    def terminal(s, x, rho):
        return weight * torus_distance(x, state_scale * np.asarray(s)) ** 2

    return CostModel(
        "quartic_control", terminal=terminal, kind=GENERAL,
        control_cost=control, control_cost_da=control_da, control_cost_daa=control_daa,
        flow_uses_rho=False, terminal_uses_rho=False,
        params={"gamma": gamma, "weight": weight, "state_scale": state_scale},
    )


_REGISTRY: dict[str, Callable[..., CostModel]] = {
    "zero": zero_model,
    "constant_flow": constant_flow,
    "state_target": state_target,
    "product_differentiation": product_differentiation,
    "crowd_aversion": crowd_aversion,
    "quartic_control": quartic_control,
}


def register_cost_model(name: str, factory: Callable[..., CostModel]) -> None:
    """Make ``factory`` available to configs under ``name``."""
    _REGISTRY[name] = factory


def available_models() -> list[str]:
    return sorted(_REGISTRY)


def build_cost_model(name: str, **params) -> CostModel:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown cost model {name!r}; available: {available_models()}") from None
    model = factory(**params)
    if model.kind == GENERAL:
        check_strong_convexity(model)
    return model


def check_strong_convexity(model: CostModel, n_samples: int = 512, seed: int = 0) -> float:
    """Smallest sampled ``d^2 C / da^2``; raises if it is not positive."""
    rng = np.random.default_rng(seed)
    s = rng.standard_normal(n_samples)
    x = rng.uniform(0, 1, n_samples)
    a = rng.uniform(-10, 10, n_samples)
    curv = float(np.min(model.C_daa(s, x, a)))
    if not curv > 0:
        raise ValueError(f"control cost of {model.name!r} is not strongly convex (min curvature {curv:g})")
    return curv


# ---------------------------------------------------------------------------
# posterior expectations
# ---------------------------------------------------------------------------

def _contract(weights, per_node):
    """``sum_q weights[q, *zshape] * per_node[q, *xshape]`` -> ``zshape + xshape``."""
    return np.tensordot(weights, per_node, axes=(0, 0))


def _check_family(quad, rho_family):
    rho_family = np.asarray(rho_family, dtype=float)
    if rho_family.ndim != 2 or rho_family.shape[0] != len(quad):
        raise ValueError(
            f"rho_family must have shape (Q={len(quad)}, Nx), got {rho_family.shape}"
        )
    return rho_family


def expected_flow_cost(model, quad, kernel, t, z, x, rho_family):
    """Posterior expectation of ``F(s, x, rho_{s,t})`` given ``Z_t = z``.

    Output shape is ``np.shape(z) + np.shape(x)``.
    """
    rho_family = _check_family(quad, rho_family)
    w = posterior_weights(quad, kernel, t, z)
    per_node = np.stack([model.flow(s, np.asarray(x, float), rho_family[q]) for q, s in enumerate(quad.nodes)])
    return _contract(w, per_node)


def expected_terminal_cost(model, quad, kernel, T, z, x, rho_family_at_T):
    rho_family = _check_family(quad, rho_family_at_T)
    w = posterior_weights(quad, kernel, T, z)
    per_node = np.stack([model.terminal(s, np.asarray(x, float), rho_family[q]) for q, s in enumerate(quad.nodes)])
    return _contract(w, per_node)


def expected_state_cost(model, quad, kernel, t, z, x):
    w = posterior_weights(quad, kernel, t, z)
    per_node = np.stack([model.c(s, np.asarray(x, float)) for s in quad.nodes])
    return _contract(w, per_node)


class ExpectedControlCost:
    """``a -> sum_q w_q C(s_q, x, a)`` for fixed posterior weights and positions.

    ``weights`` has shape ``(Q,) + shape`` broadcastable against ``x`` and the
    controls passed in.
    """

    def __init__(self, model: CostModel, nodes, weights, x):
        self.model = model
        self.nodes = np.asarray(nodes, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.x = np.asarray(x, dtype=float)

    def _sum(self, fn, a):
        out = 0.0
        for q, s in enumerate(self.nodes):
            out = out + self.weights[q] * fn(s, self.x, a)
        return out

    def __call__(self, a):
        return self._sum(self.model.C, a)

    def da(self, a):
        return self._sum(self.model.C_da, a)

    def daa(self, a):
        return self._sum(self.model.C_daa, a)


def maximize_control(ctilde: ExpectedControlCost, p, a0=None):
    """Solve ``max_a -a p - Ctilde(a)`` elementwise by damped Newton.

    Returns ``(H, a_star)``.
    """
    p = np.asarray(p, dtype=float)
    shape = np.broadcast(p, ctilde.x, ctilde.weights[0]).shape
    p = np.broadcast_to(p, shape)
    a = np.broadcast_to(-p if a0 is None else np.asarray(a0, float), shape).astype(float, copy=True)
    obj = -a * p - ctilde(a)
    for _ in range(NEWTON_MAXITER):
        grad = -p - ctilde.da(a)
        curv = ctilde.daa(a)
        step = grad / curv
        lam = np.ones(shape)
        for _ in range(30):
            trial = a + lam * step
            trial_obj = -trial * p - ctilde(trial)
            worse = trial_obj < obj - 1e-14 * (1 + np.abs(obj))
            if not np.any(worse):
                break
            lam = np.where(worse, 0.5 * lam, lam)
        a, obj = trial, trial_obj
        if np.all(np.abs(lam * step) <= NEWTON_TOL * (1.0 + np.abs(a))):
            return obj, a
    bad = np.unravel_index(np.argmax(np.abs(lam * step)), shape)
    raise HamiltonianError(
        f"Newton did not converge after {NEWTON_MAXITER} iterations", p=float(p[bad]),
    )


def hamiltonian(model: CostModel, quad: StateQuadrature, kernel: BeliefKernel, t, z, x, p):
    """``H = sup_a { -a p - Ctilde(t, z, x, a) }`` and its maximizer.

    ``z``, ``x`` and ``p`` broadcast together.  Returns ``(value, a_star)``.
    """
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if model.kind == SEPARABLE:
        ct = expected_state_cost_pointwise(model, quad, kernel, t, z, x)
        return 0.5 * p**2 - ct + 0.0 * p, -p + 0.0 * ct
    w = posterior_weights(quad, kernel, t, z)
    try:
        return maximize_control(ExpectedControlCost(model, quad.nodes, w, x), p)
    except HamiltonianError as exc:
        raise HamiltonianError(str(exc), t=t, z=z, x=x, p=p) from exc


def expected_state_cost_pointwise(model, quad, kernel, t, z, x):
    """``sum_q w_q(t, z) c(s_q, x)`` with ``z`` and ``x`` broadcast elementwise."""
    w = posterior_weights(quad, kernel, t, z)
    out = 0.0
    for q, s in enumerate(quad.nodes):
        out = out + w[q] * model.c(s, x)
    return out


def hamiltonian_p_derivative(model, quad, kernel, t, z, x, p):
    """``D_p H = -a_star``."""
    return -hamiltonian(model, quad, kernel, t, z, x, p)[1]
