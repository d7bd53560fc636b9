"""Discrete-time N-player game: population rollouts and empirical epsilon-Nash estimates.

Players do not observe the state ``s``.  Each round of length ``delta`` a
player receives a private signal increment ``N(s delta, sigma^2 delta)``,
adds it to its cumulative signal ``Z`` and moves on the torus with the
feedback policy evaluated at ``(t, Z, x)``.  Flow costs use the empirical
position distribution smoothed by a wrapped Gaussian of bandwidth ``dx``.

Deviation gains are measured on *probe players*.  A probe is an independent
copy of player 0: it takes that player's slot in the empirical density but
has its own initial position and noise.  The other ``N - 1`` players follow
policies that ignore the population, so their paths do not depend on what
the occupant of slot 0 does, and every probe faces exactly the N-player game
seen by player 0.  Many probes per rollout average out the deviator's own
noise without touching the population's.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import stats

from . import hjb
from .costs import interp_periodic
from .grid import posterior_weights, torus_distance, wrapped_gaussian


@dataclass
class SimConfig:
    """Settings of one population rollout.

    ``state=None`` draws the state from the standard normal prior.  ``start``
    is ``"t0"`` (begin at the grid's first slice with ``Z = 0``) or ``"zero"``.
    """

    N: int
    delta: float
    seed: int = 0
    state: float | None = None
    start: str = "t0"
    n_probes: int | None = None

    def validate(self, grid):
        if self.N < 2:
            raise ValueError("N must be at least 2")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.start not in ("t0", "zero"):
            raise ValueError("start must be 't0' or 'zero'")
        n = self.rounds(grid)
        if abs(n * self.delta - self.span(grid)) > 1e-9 * max(1.0, grid.T):
            raise ValueError(f"the simulated horizon {self.span(grid):g} is not a whole number of rounds of {self.delta:g}")
        if self.n_probes is not None and self.n_probes < 1:
            raise ValueError("n_probes must be positive")

    def start_time(self, grid) -> float:
        return float(grid.t0) if self.start == "t0" else 0.0

    def span(self, grid) -> float:
        return grid.T - self.start_time(grid)

    def probes(self) -> int:
        return 256 if self.n_probes is None else self.n_probes

    def rounds(self, grid) -> int:
        return int(round(self.span(grid) / self.delta))


@dataclass
class SimOutcome:
    state: float
    times: np.ndarray
    costs: np.ndarray
    rho: np.ndarray
    probe_x0: np.ndarray
    slot_path: np.ndarray
    probe_noise: np.ndarray
    probe_costs: np.ndarray | None = None
    deviation_costs: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def mean_cost(self) -> float:
        return float(self.costs.mean())

    @property
    def stderr(self) -> float:
        return float(self.costs.std(ddof=1) / np.sqrt(self.costs.size))

    @property
    def gain(self) -> float | None:
        """Average cost saved by the probes when they deviate."""
        if self.deviation_costs is None:
            return None
        return float(np.mean(self.probe_costs - self.deviation_costs))


# ---------------------------------------------------------------------------
# empirical densities
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _smoothing_spectrum(nx: int, bandwidth: float) -> np.ndarray:
    # wrapped Gaussian sampled on the nodes and normalized to unit sum, so the
    # convolution keeps mass and positivity even when the kernel is barely resolved
    kernel = wrapped_gaussian(torus_distance(np.arange(nx) / nx, 0.0), bandwidth**2)
    return np.fft.rfft(kernel / kernel.sum())


def deposit(x, nx: int) -> np.ndarray:
    """Linear (cloud-in-cell) deposit of unit atoms onto ``nx`` periodic nodes.

    ``x`` of shape ``(..., P)`` gives ``(..., nx)`` masses summing to ``P``.
    """
    x = np.asarray(x, dtype=float)
    pos = (x % 1.0) * nx
    i0 = np.floor(pos).astype(np.intp) % nx
    frac = pos - np.floor(pos)
    lead = x.shape[:-1]
    rows = np.arange(int(np.prod(lead, dtype=int))).reshape(lead + (1,)) * nx
    size = rows.size * nx
    out = np.bincount((rows + i0).ravel(), weights=(1.0 - frac).ravel(), minlength=size)
    out += np.bincount((rows + (i0 + 1) % nx).ravel(), weights=frac.ravel(), minlength=size)
    out = out.reshape(lead + (nx,))
    return out


def smooth(masses, bandwidth: float) -> np.ndarray:
    """Circular convolution of nodal masses with a wrapped Gaussian; returns densities."""
    nx = masses.shape[-1]
    out = np.fft.irfft(np.fft.rfft(masses, axis=-1) * _smoothing_spectrum(nx, float(bandwidth)), n=nx, axis=-1)
    return np.maximum(out, 0.0) * nx


def empirical_density(x, nx: int, bandwidth: float | None = None) -> np.ndarray:
    """Kernel density estimate of the positions ``x`` on the torus grid (unit mass)."""
    x = np.asarray(x, dtype=float)
    bandwidth = 1.0 / nx if bandwidth is None else bandwidth
    return smooth(deposit(x, nx), bandwidth) / x.shape[-1]


# ---------------------------------------------------------------------------
# rollouts
# ---------------------------------------------------------------------------

class _Policy:
    """Feedback control on the grid, linear in time and bilinear in (z, x)."""

    def __init__(self, alpha, grid):
        self.alpha = np.ascontiguousarray(alpha, dtype=float)
        if self.alpha.shape != (grid.Nt, grid.Nz, grid.Nx):
            raise ValueError(f"policy must have shape {(grid.Nt, grid.Nz, grid.Nx)}")
        self.grid = grid

    def __call__(self, t, z, x):
        g = self.grid
        pos = (t - g.t0) / g.dt
        if pos <= 0:
            return hjb.interpolate_slice(self.alpha[0], g, z, x)
        k = min(int(np.floor(pos)), g.Nt - 2)
        lam = min(pos - k, 1.0)
        a0 = hjb.interpolate_slice(self.alpha[k], g, z, x)
        if lam == 0.0:
            return a0
        return (1.0 - lam) * a0 + lam * hjb.interpolate_slice(self.alpha[k + 1], g, z, x)


def _as_alpha(policy):
    return policy.alpha if hasattr(policy, "alpha") else np.asarray(policy, dtype=float)


def _sample_initial(rng, rho0, n):
    nx = rho0.size
    p = rho0 / rho0.sum()
    idx = rng.choice(nx, size=n, p=p)
    return ((idx + rng.uniform(-0.5, 0.5, n)) / nx) % 1.0


def _grid_costs(model, s, x_nodes, rho, what):
    fn = model.flow if what == "flow" else model.terminal
    return np.asarray(fn(s, x_nodes, rho), dtype=float) * np.ones_like(x_nodes)


def simulate_population(problem, policy, config: SimConfig, deviation=None, rng=None) -> SimOutcome:
    """Roll the N-player game forward under ``policy``.

    Probe initial positions and noise are drawn after the population so the
    population itself does not depend on the probe count.  With a
    ``deviation`` policy the probe costs under both policies are filled in.
    """
    g = problem.grid
    config.validate(g)
    model = problem.model
    rng = np.random.default_rng(config.seed) if rng is None else rng
    s = float(rng.standard_normal()) if config.state is None else float(config.state)
    sigma, sx = problem.kernel.sigma, problem.sigma_x
    n, dt = config.N, config.delta
    n_rounds = config.rounds(g)
    t_start = config.start_time(g)
    times = t_start + dt * np.arange(n_rounds + 1)
    bw = g.dx
    act = _Policy(_as_alpha(policy), g)

    x = _sample_initial(rng, problem.rho0, n)
    z = np.zeros(n)
    costs = np.zeros(n)
    rho = np.empty((n_rounds + 1, g.Nx))
    masses = np.empty((n_rounds + 1, g.Nx))
    slot = np.empty(n_rounds + 1)
    for k in range(n_rounds):
        t = times[k]
        masses[k] = deposit(x, g.Nx)
        rho[k] = smooth(masses[k], bw) / n
        slot[k] = x[0]
        a = act(t, z, x)
        f_grid = _grid_costs(model, s, g.x, rho[k], "flow")
        costs += dt * (model.C(s, x, a) + interp_periodic(f_grid, x))
        eta = rng.standard_normal(n)
        xi = rng.standard_normal(n)
        z = z + s * dt + sigma * np.sqrt(dt) * eta
        x = (x + a * dt + sx * np.sqrt(dt) * xi) % 1.0
    masses[-1] = deposit(x, g.Nx)
    rho[-1] = smooth(masses[-1], bw) / n
    slot[-1] = x[0]
    costs += interp_periodic(_grid_costs(model, s, g.x, rho[-1], "terminal"), x)

    n_probes = config.probes()
    probe_x0 = _sample_initial(rng, problem.rho0, n_probes)
    probe_noise = rng.standard_normal((n_rounds, 2, n_probes))
    out = SimOutcome(
        state=s, times=times, costs=costs, rho=rho,
        probe_x0=probe_x0, slot_path=slot, probe_noise=probe_noise,
        diagnostics={"N": n, "delta": dt, "rounds": n_rounds, "seed": config.seed, "bandwidth": bw},
    )
    if deviation is not None:
        out.probe_costs = replay_probes(problem, out, policy)
        out.deviation_costs = replay_probes(problem, out, deviation)
    return out


def replay_probes(problem, outcome: SimOutcome, policy, probes=None):
    """Costs of the probe players when they occupy slot 0 under ``policy``.

    Every probe reuses its recorded noise and the other players keep their
    recorded trajectories.  ``probes`` selects a subset of probe indices.
    """
    idx = slice(None) if probes is None else np.asarray(probes)
    return _replay_probes(
        problem, _Policy(_as_alpha(policy), problem.grid), outcome.state, outcome.times, outcome.rho,
        outcome.slot_path, outcome.probe_x0[idx], outcome.probe_noise[:, :, idx],
        outcome.diagnostics["N"], outcome.diagnostics["bandwidth"],
    )


def _replay_probes(problem, policy, s, times, rho, slot_x, x0, noise, n, bw):
    """Costs of the probes when they alone follow ``policy`` with their recorded noise."""
    g = problem.grid
    model = problem.model
    sigma, sx = problem.kernel.sigma, problem.sigma_x
    dt = times[1] - times[0]
    n_rounds = times.size - 1
    p = x0.size
    x = x0.copy()
    z = np.zeros(p)
    cost = np.zeros(p)

    def others_plus_self(k, x_now):
        # the slot-0 atom moves to the probe; everybody else stays put
        swap = smooth(deposit(x_now[:, None], g.Nx) - deposit(slot_x[k:k + 1], g.Nx)[None, :], bw) / n
        return rho[k][None, :] + swap

    for k in range(n_rounds):
        a = policy(times[k], z, x)
        if model.flow_uses_rho:
            dens = others_plus_self(k, x)
            f = np.array([interp_periodic(_grid_costs(model, s, g.x, dens[i], "flow"), x[i]) for i in range(p)])
        else:
            f = interp_periodic(_grid_costs(model, s, g.x, rho[k], "flow"), x)
        cost += dt * (model.C(s, x, a) + f)
        z = z + s * dt + sigma * np.sqrt(dt) * noise[k, 0]
        x = (x + a * dt + sx * np.sqrt(dt) * noise[k, 1]) % 1.0
    if model.terminal_uses_rho:
        dens = others_plus_self(n_rounds, x)
        cost += np.array([interp_periodic(_grid_costs(model, s, g.x, dens[i], "terminal"), x[i]) for i in range(p)])
    else:
        cost += interp_periodic(_grid_costs(model, s, g.x, rho[-1], "terminal"), x)
    return cost


# ---------------------------------------------------------------------------
# prior averages and epsilon
# ---------------------------------------------------------------------------

def start_weights(problem, config: SimConfig) -> np.ndarray:
    """Node weights of the state given the information at the simulation start."""
    t = config.start_time(problem.grid)
    return posterior_weights(problem.quad, problem.kernel, t, np.array(0.0))


def flows_on_grid(problem, rho_rounds, times) -> np.ndarray:
    """Interpolate per-round densities ``(..., rounds + 1, Nx)`` onto the grid times."""
    g = problem.grid
    rho_rounds = np.asarray(rho_rounds, dtype=float)
    tg = np.clip(g.times, times[0], times[-1])
    pos = np.interp(tg, times, np.arange(times.size))
    k = np.minimum(np.floor(pos).astype(int), times.size - 2)
    lam = (pos - k)[:, None]
    out = (1 - lam) * rho_rounds[..., k, :] + lam * rho_rounds[..., k + 1, :]
    out = np.maximum(out, 0.0)
    return out / (out.sum(axis=-1, keepdims=True) * g.dx)


def node_rollouts(problem, policy, config: SimConfig, seed_seq, deviation=None) -> list[SimOutcome]:
    """One rollout per quadrature node with independent child seeds."""
    outs = []
    for s, child in zip(problem.quad.nodes, seed_seq.spawn(len(problem.quad))):
        cfg = SimConfig(N=config.N, delta=config.delta, seed=config.seed, state=float(s),
                        start=config.start, n_probes=config.n_probes)
        outs.append(simulate_population(problem, policy, cfg, deviation=deviation, rng=np.random.default_rng(child)))
    return outs


def prior_averaged_cost(problem, policy, config: SimConfig) -> dict:
    """Mean realized cost averaged over the state nodes with start-time weights."""
    w = start_weights(problem, config)
    outs = node_rollouts(problem, policy, config, np.random.SeedSequence(config.seed))
    means = np.array([o.mean_cost for o in outs])
    errs = np.array([o.stderr for o in outs])
    return {
        "mean": float(w @ means),
        "stderr": float(np.sqrt(np.sum((w * errs) ** 2))),
        "node_means": means,
        "weights": w,
    }


def value_oracle(problem, value) -> float:
    """``sum_q w_q int u(t0, 0, x) rho0(x) dx`` with the weights at ``(t0, 0)``."""
    g = problem.grid
    u0 = hjb.interpolate_slice(value.u[0], g, np.zeros(g.Nx), g.x)
    return float(np.sum(u0 * problem.rho0) * g.dx)


@dataclass
class EpsilonEstimate:
    epsilon: float
    ci_low: float
    ci_high: float
    replicas: np.ndarray
    N: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)


def background_flows(problem, outcomes) -> np.ndarray:
    """Grid flows ``(Q, Nt, Nx)`` of players ``1 .. N-1``, one node per outcome."""
    g = problem.grid
    n = outcomes[0].diagnostics["N"]
    bw = outcomes[0].diagnostics["bandwidth"]
    rho = np.stack([o.rho for o in outcomes]) * n
    slot = np.stack([smooth(deposit(o.slot_path[:, None], g.Nx), bw) for o in outcomes])
    return flows_on_grid(problem, (rho - slot) / (n - 1), outcomes[0].times)


def best_response(problem, flows) -> np.ndarray:
    return hjb.extract_control(problem, hjb.solve_hjb(problem, flows)).alpha


def _deviation_costs(problem, outs, deviation):
    """``(Q, P)`` probe costs; ``None`` means the best response to the other players' flows."""
    if deviation is None:
        deviation = best_response(problem, background_flows(problem, outs))
    return np.array([replay_probes(problem, o, deviation) for o in outs])


def _replica(problem, policy, config, seed_seq, deviation, crn):
    w = start_weights(problem, config)
    pop_seq, other_seq = seed_seq.spawn(2)
    outs = node_rollouts(problem, policy, config, pop_seq)
    eq_costs = np.array([replay_probes(problem, o, policy) for o in outs])
    if not crn:
        outs = node_rollouts(problem, policy, config, other_seq)
    dev_costs = _deviation_costs(problem, outs, deviation)
    return float(w @ (eq_costs.mean(axis=1) - dev_costs.mean(axis=1)))


def estimate_epsilon(problem, policy, config: SimConfig, n_replicas: int, deviation=None,
                     workers: int = 1, confidence: float = 0.95, crn: bool = True) -> EpsilonEstimate:
    """Average gain of a unilateral deviation with a Student-t confidence interval.

    Positive values mean deviating pays.  Without an explicit ``deviation``
    the probes of each replica best-respond to the flows that the other
    ``N - 1`` players actually produced at every state node.
    ``crn=False`` measures the deviation on an independent rollout, for
    variance comparisons only.
    """
    if n_replicas < 2:
        raise ValueError("need at least two replicas for a confidence interval")
    children = np.random.SeedSequence(config.seed).spawn(n_replicas)

    def one(child):
        return _replica(problem, policy, config, child, deviation, crn)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            gains = np.array(list(pool.map(one, children)))
    else:
        gains = np.array([one(c) for c in children])
    mean = float(gains.mean())
    se = float(gains.std(ddof=1) / np.sqrt(n_replicas))
    half = float(stats.t.ppf(0.5 + confidence / 2, n_replicas - 1)) * se
    return EpsilonEstimate(
        epsilon=mean, ci_low=mean - half, ci_high=mean + half, replicas=gains, N=config.N,
        diagnostics={"stderr": se, "confidence": confidence, "n_replicas": n_replicas, "crn": crn,
                     "delta": config.delta, "n_probes": config.probes(), "seed": config.seed},
    )
