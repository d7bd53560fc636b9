import numpy as np
import pytest
from hypothesis import settings

from bayesmfg.belief import BeliefKernel
from bayesmfg.costs import build_cost_model
from bayesmfg.grid import Grid, initial_density, make_state_quadrature, required_zmax
from bayesmfg.problem import Problem

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

BUMP = {"kind": "bump", "center": 0.5, "width": 0.15}


def make_problem(model="product_differentiation", Q=8, Nt=100, Nx=64, Nz=64, sigma=2.0, sigma_x=0.5,
                 rho0=BUMP, theta=0.5, gradient="hybrid", **params):
    kernel = BeliefKernel(sigma)
    quad = make_state_quadrature(Q)
    grid = Grid(T=1.0, Nt=Nt, Nx=Nx, Nz=Nz, Zmax=required_zmax(quad, kernel, 1.0))
    return Problem(grid, kernel, quad, build_cost_model(model, **params), sigma_x,
                   initial_density(rho0, grid.x), gradient=gradient, theta=theta, meta={"rho0": rho0})


@pytest.fixture(scope="session")
def default_problem():
    return make_problem()


@pytest.fixture(scope="session")
def small_problem():
    return make_problem(Nt=40, Nx=32, Nz=32, Q=4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
