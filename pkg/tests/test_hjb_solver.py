import numpy as np
import pytest
import sympy as sp

from bayesmfg import hjb
from bayesmfg.costs import build_cost_model
from bayesmfg.fp import CFLError
from bayesmfg.problem import Problem
from bayesmfg.validate import ManufacturedValue, hjb_checks

from conftest import make_problem


@pytest.fixture(scope="module")
def pb():
    return make_problem(Nt=40, Nx=32, Nz=32, Q=4)


@pytest.mark.parametrize("fast", [False, True])
def test_manufactured_source_matches_symbolic_residual(fast):
    t, z, x = sp.symbols("t z x", real=True)
    sigma, sx, L = 2.0, 0.5, 12.0
    a = b = sp.Rational(1, 20)
    amp = sp.cos(3 * t) if fast else 1 + t
    w = 4 if fast else 1
    u = a * amp * sp.cos(2 * sp.pi * x) * sp.cos(sp.pi * z / L) + b * sp.sin(2 * sp.pi * x + w * t)
    # -u_t + H(u_x) - r_t(z) u_z - sigma^2/2 u_zz - sigma'^2/2 u_xx with H(p) = p^2 / 2
    resid = (-sp.diff(u, t) + sp.diff(u, x) ** 2 / 2 - z / (t + sigma**2) * sp.diff(u, z)
             - sigma**2 / 2 * sp.diff(u, z, 2) - sx**2 / 2 * sp.diff(u, x, 2))
    f = sp.lambdify((t, z, x), resid, "numpy")
    g = sp.lambdify((t, z, x), u, "numpy")
    mv = ManufacturedValue(sigma, sx, L, fast=fast)
    rng = np.random.default_rng(0)
    T, Z, X = rng.uniform(0, 1, 50), rng.uniform(-L, L, 50), rng.uniform(0, 1, 50)
    np.testing.assert_allclose(mv.source(T, Z, X), f(T, Z, X), atol=1e-12)
    np.testing.assert_allclose(mv.value(T, Z, X), g(T, Z, X), atol=1e-14)


def test_zero_model_gives_zero_value(pb):
    zero = Problem(pb.grid, pb.kernel, pb.quad, build_cost_model("zero"), pb.sigma_x, pb.rho0, theta=pb.theta)
    assert np.abs(hjb.solve_hjb(zero, zero.constant_flow()).u).max() == 0.0


def test_constant_flow_gives_remaining_time(pb):
    flat = Problem(pb.grid, pb.kernel, pb.quad, build_cost_model("constant_flow", level=2.0), pb.sigma_x,
                   pb.rho0, theta=pb.theta)
    u = hjb.solve_hjb(flat, flat.constant_flow()).u
    expected = 2.0 * (pb.grid.T - pb.grid.times)
    np.testing.assert_allclose(u, np.broadcast_to(expected[:, None, None], u.shape), atol=1e-12)


def test_value_and_control_shapes(pb):
    vf = hjb.solve_hjb(pb, pb.constant_flow())
    ctrl = hjb.extract_control(pb, vf)
    assert vf.u.shape == ctrl.alpha.shape == (pb.grid.Nt, pb.grid.Nz, pb.grid.Nx)
    assert vf.diagnostics["terminal_gap"] == 0.0
    assert 0 < vf.diagnostics["max_cfl"] <= 1


def test_comparison_principle(pb):
    # a larger running cost can only raise the value
    base = hjb.solve_hjb(pb, pb.constant_flow()).u
    more = hjb.solve_hjb(pb, pb.constant_flow(), source=np.full(base.shape, 0.3)).u
    assert np.all(more >= base + 0.3 * (pb.grid.T - pb.grid.times)[:, None, None] - 1e-12)


@pytest.mark.parametrize("gradient", ["upwind", "lax-friedrichs"])
def test_alternative_gradients_stay_close(gradient):
    a = make_problem(Nt=40, Nx=32, Nz=32, Q=4)
    b = make_problem(Nt=40, Nx=32, Nz=32, Q=4, gradient=gradient)
    ua = hjb.solve_hjb(a, a.constant_flow()).u
    ub = hjb.solve_hjb(b, b.constant_flow()).u
    assert np.abs(ua - ub).max() < 0.02


def test_general_model_matches_quadratic_limit():
    # quartic cost with gamma -> 0 reduces to the quadratic state-target model
    q = make_problem("quartic_control", Nt=40, Nx=32, Nz=32, Q=4, gamma=1e-9, rho0="uniform")
    s = make_problem("state_target", Nt=40, Nx=32, Nz=32, Q=4, rho0="uniform")
    uq = hjb.solve_hjb(q, q.constant_flow()).u
    us = hjb.solve_hjb(s, s.constant_flow()).u
    assert np.abs(uq - us).max() < 5e-3


def test_cfl_error_from_steep_terminal_cost():
    pb = make_problem("state_target", Nt=4, Nx=64, Nz=16, Q=4, weight=50.0)
    with pytest.raises(CFLError, match="Nt >="):
        hjb.solve_hjb(pb, pb.constant_flow())


def test_interpolation_hits_nodes(pb):
    vf = hjb.solve_hjb(pb, pb.constant_flow())
    g = pb.grid
    zi, xi = np.meshgrid(g.z, g.x, indexing="ij")
    np.testing.assert_allclose(hjb.interpolate_slice(vf.u[3], g, zi.ravel(), xi.ravel()), vf.u[3].ravel(), atol=1e-13)


def test_policy_evaluation_agrees_with_value(pb):
    flow = pb.constant_flow()
    vf = hjb.solve_hjb(pb, flow)
    rep = hjb.policy_value_check(pb, vf, hjb.extract_control(pb, vf), flow, 0.5, n_paths=20_000, seed=3)
    assert rep["exploded"] == 0
    assert abs(rep["mc"] - rep["u"]) < 3 * rep["stderr"] + 0.02


def test_invariant_checks_without_orders(pb):
    checks = hjb_checks(pb, orders=False)
    assert all(c.passed for c in checks), [c for c in checks if not c.passed]
