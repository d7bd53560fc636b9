import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from bayesmfg import equilibrium as eq, fp, mc_sim as ms
from bayesmfg.costs import build_cost_model
from bayesmfg.problem import Problem

from conftest import make_problem


@pytest.fixture(scope="module")
def small():
    pb = make_problem(Nt=40, Nx=32, Nz=32, Q=4)
    return pb, eq.solve_equilibrium(pb)


@given(arrays(float, st.integers(1, 50), elements=st.floats(-3, 3)))
def test_deposit_and_smoothing_keep_mass(x):
    m = ms.deposit(x, 16)
    assert m.sum() == pytest.approx(x.size)
    assert m.min() >= 0
    rho = ms.empirical_density(x, 16)
    assert rho.sum() / 16 == pytest.approx(1.0)


def test_deposit_batches_match_single_rows(rng):
    x = rng.uniform(0, 1, (3, 7))
    np.testing.assert_allclose(ms.deposit(x, 8), np.stack([ms.deposit(r, 8) for r in x]))


@pytest.mark.parametrize("bw", [1 / 32, 4 / 32])
def test_smoothing_is_a_normalized_wrapped_gaussian_convolution(bw):
    n = 32
    masses = np.zeros(n)
    masses[5] = 1.0
    masses[30] = 2.0
    x = np.arange(n) / n
    k = np.arange(-6, 7)[:, None]

    def bump(c):
        w = np.exp(-0.5 * ((x - c + k) / bw) ** 2).sum(axis=0)
        return w / w.sum() * n

    out = ms.smooth(masses, bw)
    np.testing.assert_allclose(out, bump(5 / n) + 2 * bump(30 / n), atol=1e-10)
    assert out.min() >= 0.0


def test_unit_flow_cost_with_zero_control_equals_horizon():
    pb = Problem(*_grid_parts(), build_cost_model("constant_flow"), 0.5, np.ones(32), theta=0.5)
    zero = np.zeros((pb.grid.Nt, pb.grid.Nz, pb.grid.Nx))
    out = ms.simulate_population(pb, zero, ms.SimConfig(N=50, delta=0.01, start="zero", state=0.3))
    np.testing.assert_allclose(out.costs, pb.grid.T, rtol=1e-12)


def _grid_parts():
    p = make_problem(Nt=40, Nx=32, Nz=32, Q=4)
    return p.grid, p.kernel, p.quad


def test_rollout_is_seed_deterministic(small):
    pb, res = small
    cfg = ms.SimConfig(N=64, delta=pb.grid.dt / 2, seed=9, n_probes=5)
    a = ms.simulate_population(pb, res.control.alpha, cfg, deviation=res.control.alpha)
    b = ms.simulate_population(pb, res.control.alpha, cfg, deviation=res.control.alpha)
    for f in ("costs", "rho", "probe_x0", "slot_path", "probe_noise", "probe_costs"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))
    assert a.state == b.state
    c = ms.simulate_population(pb, res.control.alpha, ms.SimConfig(N=64, delta=pb.grid.dt / 2, seed=10))
    assert not np.array_equal(a.costs, c.costs)


def test_outcome_invariants(small):
    pb, res = small
    out = ms.simulate_population(pb, res.control.alpha, ms.SimConfig(N=80, delta=pb.grid.dt / 2, seed=1))
    assert np.all(np.isfinite(out.costs))
    np.testing.assert_allclose(out.rho.sum(axis=1) * pb.grid.dx, 1.0, atol=1e-12)
    assert out.rho.shape == (out.times.size, pb.grid.Nx)
    assert out.times[0] == pytest.approx(pb.grid.t0) and out.times[-1] == pytest.approx(pb.grid.T)


def test_config_validation(small):
    g = small[0].grid
    for bad in (ms.SimConfig(N=1, delta=0.01), ms.SimConfig(N=5, delta=0.017),
                ms.SimConfig(N=5, delta=0.01, start="late"), ms.SimConfig(N=5, delta=0.01, n_probes=0)):
        with pytest.raises(ValueError):
            bad.validate(g)
    assert ms.SimConfig(N=5, delta=0.01).probes() == 256


def test_probe_replay_under_own_policy_reproduces_slot_statistics(small):
    # probes following the population policy are draws of player 0's cost
    pb, res = small
    cfg = ms.SimConfig(N=40, delta=pb.grid.dt / 2, seed=2, n_probes=3000, state=0.5)
    out = ms.simulate_population(pb, res.control.alpha, cfg, deviation=res.control.alpha)
    np.testing.assert_array_equal(out.probe_costs, out.deviation_costs)
    assert out.gain == 0.0
    se = np.hypot(out.probe_costs.std() / np.sqrt(3000), out.costs.std() / np.sqrt(40))
    assert abs(out.probe_costs.mean() - out.costs.mean()) < 4 * se


def test_empirical_density_concentrates_as_population_grows(small):
    pb, res = small
    g = pb.grid
    s = pb.quad.nodes[2]
    m, _ = fp.solve_fp_per_state(g, res.control.alpha, pb.kernel, s, pb.rho0, pb.sigma_x, pb.theta)
    target, _ = fp.position_marginal(m[-1], g.dz, g.dx)
    errs = []
    for n in (100, 1000, 10000):
        d = [np.abs(ms.simulate_population(pb, res.control.alpha,
                                           ms.SimConfig(N=n, delta=g.dt, seed=k, state=s)).rho[-1] - target).sum() * g.dx
             for k in range(3)]
        errs.append(np.mean(d))
    assert errs[0] > errs[1] > errs[2]
    # roughly N^{-1/2} until the grid error floor: at least a factor 2 per decade
    assert errs[0] / errs[1] > 2


def test_equilibrium_deviation_gives_zero(small):
    pb, res = small
    est = ms.estimate_epsilon(pb, res.control.alpha, ms.SimConfig(N=30, delta=pb.grid.dt, n_probes=4), 3,
                              deviation=res.control.alpha)
    assert est.epsilon == 0.0 and est.half_width == 0.0
    np.testing.assert_array_equal(est.replicas, 0.0)


def test_uncoupled_best_response_cannot_lose():
    pb = make_problem("state_target", Nt=40, Nx=32, Nz=32, Q=4)
    res = eq.solve_equilibrium(pb)
    est = ms.estimate_epsilon(pb, res.control.alpha, ms.SimConfig(N=20, delta=pb.grid.dt, n_probes=16), 4)
    assert est.ci_high >= 0.0
    assert est.epsilon == 0.0  # the best response ignores the flows, so it is the same policy


def test_common_random_numbers_reduce_variance(small):
    pb, res = small
    g = pb.grid
    worse = res.control.alpha + 0.2 * np.sin(2 * np.pi * g.x)[None, None, :]
    cfg = ms.SimConfig(N=30, delta=g.dt, seed=5, n_probes=32)
    paired = ms.estimate_epsilon(pb, res.control.alpha, cfg, 8, deviation=worse)
    indep = ms.estimate_epsilon(pb, res.control.alpha, cfg, 8, deviation=worse, crn=False)
    assert paired.replicas.var(ddof=1) < indep.replicas.var(ddof=1)
    assert paired.epsilon < 0  # a detuned policy costs more


def test_threaded_replicas_are_identical(small):
    pb, res = small
    cfg = ms.SimConfig(N=30, delta=pb.grid.dt, seed=3, n_probes=8)
    a = ms.estimate_epsilon(pb, res.control.alpha, cfg, 3)
    b = ms.estimate_epsilon(pb, res.control.alpha, cfg, 3, workers=3)
    np.testing.assert_array_equal(a.replicas, b.replicas)


def test_mean_cost_matches_value_oracle(default_problem):
    pb = default_problem
    res = eq.solve_equilibrium(pb)
    rep = ms.prior_averaged_cost(pb, res.control.alpha, ms.SimConfig(N=2000, delta=pb.grid.T / 200, seed=0))
    oracle = ms.value_oracle(pb, res.u)
    assert abs(rep["mean"] - oracle) < 3 * rep["stderr"]
