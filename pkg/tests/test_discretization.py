import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import roots_hermitenorm

from bayesmfg.belief import BeliefKernel, posterior
from bayesmfg.grid import (
    Grid,
    check_truncation,
    gaussian_cell_density,
    initial_density,
    make_state_quadrature,
    posterior_weight_table,
    posterior_weights,
    required_zmax,
    torus_distance,
)


@pytest.mark.parametrize("Q", [2, 3, 8, 16])
def test_quadrature_reproduces_normal_moments(Q):
    q = make_state_quadrature(Q)
    # Gauss-Hermite with Q nodes is exact for polynomials of degree 2Q - 1
    for k in range(0, 2 * Q, 2):
        assert q.expect(q.nodes**k) == pytest.approx(math.prod(range(1, k, 2)), rel=1e-10)
    assert q.expect(q.nodes) == pytest.approx(0.0, abs=1e-14)
    assert q.weights.sum() == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_array_equal(q.nodes, -q.nodes[::-1])


@pytest.mark.parametrize("Q", [8, 16])
def test_quadrature_matches_probabilists_rule(Q):
    x, w = roots_hermitenorm(Q)
    q = make_state_quadrature(Q)
    np.testing.assert_allclose(q.nodes, x, atol=1e-12)
    np.testing.assert_allclose(q.weights, w / w.sum(), rtol=1e-10)


def test_quadrature_extent():
    assert make_state_quadrature(8).s_max == pytest.approx(4.1445, abs=1e-4)
    assert make_state_quadrature(16).s_max == pytest.approx(6.6309, abs=1e-4)
    with pytest.raises(ValueError):
        make_state_quadrature(1)


@given(st.floats(0.01, 3.0), st.floats(-8, 8))
def test_posterior_weights_track_closed_form(t, z):
    k = BeliefKernel(2.0)
    q = make_state_quadrature(24)
    w = posterior_weights(q, k, t, z)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(w >= 0)
    post = posterior(k, t, z)
    assert w @ q.nodes == pytest.approx(post.mean, abs=1e-6)


def test_posterior_weight_shapes_and_prior_limit():
    k = BeliefKernel(1.0)
    q = make_state_quadrature(8)
    z = np.linspace(-1, 1, 5)
    w = posterior_weights(q, k, 0.0, z)
    assert w.shape == (8, 5)
    np.testing.assert_allclose(w, np.repeat(q.weights[:, None], 5, axis=1))
    g = Grid(T=1.0, Nt=10, Nx=8, Nz=8, Zmax=required_zmax(q, k, 1.0))
    assert posterior_weight_table(g, q, k).shape == (10, 8, 8)


def test_grid_layout():
    g = Grid(T=1.0, Nt=100, Nx=64, Nz=64, Zmax=10.0)
    assert g.t0 == pytest.approx(0.01)
    assert g.dt == pytest.approx(0.01)
    assert g.times[-1] == 1.0
    assert g.z[0] == pytest.approx(-10 + g.dz / 2)
    assert g.z_faces[-1] == pytest.approx(10.0)
    assert g.x[-1] == pytest.approx(1 - 1 / 64)
    fine = g.refined()
    assert (fine.Nt, fine.Nx, fine.Nz, fine.t0) == (200, 128, 128, 0.005)


@pytest.mark.parametrize("kwargs", [dict(Nt=1), dict(Nx=4), dict(Zmax=0.0), dict(t0=1.0), dict(T=-1.0)])
def test_grid_rejects_bad_sizes(kwargs):
    base = dict(T=1.0, Nt=10, Nx=16, Nz=16, Zmax=5.0)
    base.update(kwargs)
    with pytest.raises(ValueError):
        Grid(**base)


def test_truncation_rule():
    k = BeliefKernel(2.0)
    q = make_state_quadrature(8)
    need = required_zmax(q, k, 1.0)
    assert need == pytest.approx(q.s_max + 8.0)
    check_truncation(Grid(T=1.0, Nt=10, Nx=8, Nz=8, Zmax=need), q, k)
    with pytest.raises(ValueError, match="too small"):
        check_truncation(Grid(T=1.0, Nt=10, Nx=8, Nz=8, Zmax=0.9 * need), q, k)


@given(st.floats(-3, 3), st.floats(1e-3, 4.0))
def test_cell_density_unit_mass(mean, var):
    g = Grid(T=1.0, Nt=10, Nx=8, Nz=40, Zmax=6.0)
    rho = gaussian_cell_density(mean, var, g)
    assert rho.sum() * g.dz == pytest.approx(1.0, abs=1e-13)
    assert np.all(rho >= 0)


def test_point_mass_cell():
    g = Grid(T=1.0, Nt=10, Nx=8, Nz=10, Zmax=5.0)
    rho = gaussian_cell_density(0.2, 0.0, g)
    assert rho[5] * g.dz == 1.0 and rho.sum() * g.dz == 1.0


@given(st.floats(0, 1), st.floats(0.02, 0.5))
def test_initial_bump_unit_mass(center, width):
    x = np.arange(64) / 64
    rho = initial_density({"kind": "bump", "center": center, "width": width}, x)
    assert rho.sum() / 64 == pytest.approx(1.0, abs=1e-12)
    assert np.all(rho > 0)


def test_initial_density_kinds():
    x = np.arange(16) / 16
    np.testing.assert_allclose(initial_density("uniform", x), 1.0)
    with pytest.raises(ValueError):
        initial_density({"kind": "spike"}, x)
    with pytest.raises(ValueError):
        initial_density({"kind": "bump", "width": 0}, x)


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_torus_distance_properties(a, b):
    d = torus_distance(a, b)
    assert 0 <= d <= 0.5
    assert d == pytest.approx(torus_distance(b, a))
    assert torus_distance(a, a + 3.0) == pytest.approx(0.0, abs=1e-12)
