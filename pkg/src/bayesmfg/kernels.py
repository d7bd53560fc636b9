"""Backend selection for the inner-loop kernels.

The compiled extension ``_kernels_c`` is used when it was built; otherwise the
numpy/scipy versions in ``_kernels_py`` are used.  Set ``BAYESMFG_PURE_PYTHON=1``
to force the fallback, or call :func:`set_backend` at runtime.

Kernels
-------
solve_tridiag_axis0(lower, diag, upper, rhs)
    Tridiagonal solve along axis 0 of ``rhs`` (shape ``(n,)`` or ``(n, m)``),
    one coefficient set shared by every column.  ``lower[0]`` and
    ``upper[n-1]`` are ignored.
solve_cyclic_axis1(lower, diag, upper, rhs)
    Periodic tridiagonal solve along axis 1 of ``rhs`` (shape ``(m, n)``);
    ``lower[0]`` couples to the last unknown and ``upper[n-1]`` to the first.
upwind_divergence(face_velocity, m, dx)
    Periodic conservative upwind ``d/dx (v m)`` along the last axis, with
    ``face_velocity[..., i]`` living on the face between nodes ``i`` and ``i+1``.
hybrid_quadratic_hamiltonian(u, ctilde, dx, diffusion)
    ``p^2 / 2 - ctilde`` with the central gradient where the cell Peclet
    number ``|p| dx / diffusion`` is at most 2 and the Godunov upwind
    Hamiltonian elsewhere.
bilinear_periodic(field, z0, dz, dx, zq, xq)
    Bilinear interpolation of a ``(Nz, Nx)`` field, clamped in ``z`` and
    periodic in ``x``.
"""

from __future__ import annotations

import os

from . import _kernels_py

_NAMES = (
    "solve_tridiag_axis0",
    "solve_cyclic_axis1",
    "upwind_divergence",
    "hybrid_quadratic_hamiltonian",
    "bilinear_periodic",
)

try:
    from . import _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

BACKEND = "python"


def available_backends() -> list[str]:
    return ["cython", "python"] if _kernels_c is not None else ["python"]


def set_backend(name: str) -> None:
    global BACKEND
    if name == "cython":
        if _kernels_c is None:
            raise RuntimeError("compiled kernels are not available; rebuild the package")
        module = _kernels_c
    elif name == "python":
        module = _kernels_py
    else:
        raise ValueError(f"unknown backend {name!r}")
    for fn in _NAMES:
        globals()[fn] = getattr(module, fn)
    BACKEND = name


set_backend(
    "cython" if _kernels_c is not None and os.environ.get("BAYESMFG_PURE_PYTHON", "") in ("", "0") else "python"
)
