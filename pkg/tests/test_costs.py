import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import optimize

from bayesmfg.belief import BeliefKernel
from bayesmfg.costs import (
    GENERAL,
    CostModel,
    ExpectedControlCost,
    HamiltonianError,
    available_models,
    build_cost_model,
    check_strong_convexity,
    expected_flow_cost,
    expected_state_cost,
    expected_terminal_cost,
    hamiltonian,
    hamiltonian_p_derivative,
    interp_periodic,
    maximize_control,
    mean_square_distance,
    register_cost_model,
)
from bayesmfg.grid import make_state_quadrature, posterior_weights

X = np.arange(64) / 64


def test_catalog():
    assert {"zero", "constant_flow", "state_target", "product_differentiation", "crowd_aversion",
            "quartic_control"} <= set(available_models())
    with pytest.raises(ValueError, match="unknown cost model"):
        build_cost_model("nope")
    assert build_cost_model("state_target").uncoupled
    assert not build_cost_model("crowd_aversion").uncoupled


def test_registration_and_convexity_guard():
    def concave():
        return CostModel("concave", kind=GENERAL, control_cost=lambda s, x, a: -a**2 + 0 * x,
                         control_cost_da=lambda s, x, a: -2 * a + 0 * x)

    register_cost_model("concave_test", concave)
    with pytest.raises(ValueError, match="strongly convex"):
        build_cost_model("concave_test")
    assert check_strong_convexity(build_cost_model("quartic_control")) >= 1.0


def test_mean_square_distance_uniform():
    # int_0^1 d(x, y)^2 dy = 1/12 on the unit torus for any x
    rho = np.ones(512)
    np.testing.assert_allclose(mean_square_distance(np.array([0.0, 0.3, 0.77]), rho), 1 / 12, atol=1e-5)


def test_product_differentiation_terminal():
    m = build_cost_model("product_differentiation")
    rho = np.ones(64)
    g = m.terminal(0.25, X, rho)
    d = np.minimum(np.abs(X - 0.25), 1 - np.abs(X - 0.25))
    np.testing.assert_allclose(g, d**2 - mean_square_distance(X, rho), atol=1e-14)


@given(st.lists(st.floats(0, 0.999), min_size=1, max_size=20))
def test_interp_periodic_is_exact_for_linear_data_on_nodes(xs):
    v = np.sin(2 * np.pi * X)
    xs = np.array(xs)
    out = interp_periodic(v, xs)
    assert np.all(out <= v.max() + 1e-15) and np.all(out >= v.min() - 1e-15)
    np.testing.assert_allclose(interp_periodic(v, X + 2.0), v, atol=1e-12)


def test_expected_costs_weight_nodes_by_posterior():
    m = build_cost_model("crowd_aversion", crowd=2.0)
    q = make_state_quadrature(4)
    k = BeliefKernel(2.0)
    fam = np.stack([1 + 0.5 * np.cos(2 * np.pi * (X - 0.1 * i)) for i in range(4)])
    z = np.array([-1.0, 0.5])
    got = expected_flow_cost(m, q, k, 0.5, z, X, fam)
    w = posterior_weights(q, k, 0.5, z)
    want = np.einsum("qz,qx->zx", w, np.stack([m.flow(s, X, fam[i]) for i, s in enumerate(q.nodes)]))
    np.testing.assert_allclose(got, want, rtol=1e-14)
    assert expected_terminal_cost(m, q, k, 1.0, z, X, fam).shape == (2, 64)
    assert np.all(expected_state_cost(m, q, k, 0.5, z, X) == 0)
    with pytest.raises(ValueError):
        expected_flow_cost(m, q, k, 0.5, z, X, fam[:2])


@given(st.floats(-5, 5))
def test_quadratic_hamiltonian_closed_form(p):
    m = build_cost_model("product_differentiation")
    q, k = make_state_quadrature(4), BeliefKernel(1.0)
    h, a = hamiltonian(m, q, k, 0.3, 0.0, 0.5, p)
    assert h == pytest.approx(0.5 * p**2)
    assert a == pytest.approx(-p)
    assert hamiltonian_p_derivative(m, q, k, 0.3, 0.0, 0.5, p) == pytest.approx(p)


@given(st.floats(-20, 20), st.floats(0.1, 3.0))
def test_newton_matches_scalar_optimizer(p, gamma):
    m = build_cost_model("quartic_control", gamma=gamma)
    q, k = make_state_quadrature(4), BeliefKernel(1.0)
    h, a = hamiltonian(m, q, k, 0.3, np.array(0.2), np.array(0.5), np.array(p))
    res = optimize.minimize_scalar(lambda b: b * p + gamma * b**4 / 4 + b**2 / 2)
    assert float(a) == pytest.approx(res.x, abs=1e-6)
    assert float(h) == pytest.approx(-res.fun, abs=1e-9)


def test_newton_reports_failure(monkeypatch):
    import bayesmfg.costs as costs

    monkeypatch.setattr(costs, "NEWTON_MAXITER", 1)
    m = build_cost_model("quartic_control", gamma=5.0)
    q = make_state_quadrature(2)
    ct = ExpectedControlCost(m, q.nodes, q.weights[:, None], np.zeros(1))
    with pytest.raises(HamiltonianError):
        maximize_control(ct, np.array([50.0]))
