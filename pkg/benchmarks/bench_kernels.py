"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat 20] [--size 64]

Each kernel is timed on solver-sized inputs with both backends, the outputs
are checked against each other, and one full HJB sweep plus one factor
solve are timed end to end.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from bayesmfg import fp, hjb, kernels
from bayesmfg.belief import BeliefKernel
from bayesmfg.costs import build_cost_model
from bayesmfg.grid import Grid, initial_density, make_state_quadrature, required_zmax
from bayesmfg.problem import Problem
from bayesmfg.validate import sample_control


def kernel_cases(n, rng):
    lower = -rng.uniform(0.1, 0.4, n)
    upper = -rng.uniform(0.1, 0.4, n)
    diag = 1.0 + rng.uniform(1.0, 2.0, n)
    rhs_z = rng.standard_normal((n, n))
    rhs_x = rng.standard_normal((n, n))
    u = rng.standard_normal((n, n))
    ct = rng.standard_normal((n, n))
    v = rng.standard_normal((n, n))
    m = rng.uniform(0, 1, (n, n))
    field = rng.standard_normal((n, n))
    zq = rng.uniform(-5, 5, 4096)
    xq = rng.uniform(0, 1, 4096)
    return {
        "solve_tridiag_axis0": (lower, diag, upper, rhs_z),
        "solve_cyclic_axis1": (lower, diag, upper, rhs_x),
        "upwind_divergence": (v, m, 1.0 / n),
        "hybrid_quadratic_hamiltonian": (u, ct, 1.0 / n, 0.125),
        "bilinear_periodic": (field, -5.0, 10.0 / n, 1.0 / n, zq, xq),
    }


def solver_problem(n):
    kernel = BeliefKernel(2.0)
    quad = make_state_quadrature(8)
    grid = Grid(T=1.0, Nt=100, Nx=n, Nz=n, Zmax=required_zmax(quad, kernel, 1.0))
    rho0 = initial_density({"kind": "bump", "center": 0.5, "width": 0.15}, grid.x)
    return Problem(grid, kernel, quad, build_cost_model("product_differentiation"), 0.5, rho0, theta=0.5)


def timed(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--size", type=int, default=64)
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled backend not built; only the Python timings are shown")
    cases = kernel_cases(args.size, np.random.default_rng(0))

    rows = []
    for name, inputs in cases.items():
        times = {}
        outputs = {}
        for b in backends:
            kernels.set_backend(b)
            fn = getattr(kernels, name)
            outputs[b] = np.asarray(fn(*inputs))
            times[b] = timed(lambda: fn(*inputs), args.repeat)
        gap = float(np.max(np.abs(outputs[backends[0]] - outputs[backends[-1]])))
        rows.append((name, times, gap))

    problem = solver_problem(args.size)
    control = sample_control(problem.grid)
    flow = problem.constant_flow()
    for label, fn in (
        ("HJB sweep", lambda: hjb.solve_hjb(problem, flow)),
        ("factor solve", lambda: fp.solve_tau(problem.grid, control, problem.kernel, problem.rho0,
                                              problem.sigma_x, problem.theta)),
    ):
        times = {}
        for b in backends:
            kernels.set_backend(b)
            times[b] = timed(fn, max(1, args.repeat // 10))
        rows.append((label, times, float("nan")))
    kernels.set_backend(backends[0])

    head = f"{'kernel':<30}" + "".join(f"{b + ' [ms]':>14}" for b in backends) + f"{'speed-up':>10}{'max |diff|':>12}"
    print(head)
    for name, times, gap in rows:
        cells = "".join(f"{1e3 * times[b]:>14.3f}" for b in backends)
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:<30}{cells}{speed:>10.1f}{gap:>12.2e}")


if __name__ == "__main__":
    main()
