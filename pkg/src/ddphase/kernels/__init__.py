"""Minimisation kernels with a compiled and a pure-numpy implementation.

The backend is chosen once at import from the ``DDPHASE_BACKEND``
environment variable: ``numba`` (require the compiled path), ``numpy``
(force the fallback), or ``auto`` (default; numba when importable).
``use_backend`` switches at runtime, e.g. for benchmarking.
"""

from __future__ import annotations

import os

from . import numpy_backend
from .coeffs import N_COEFF_ARRAYS, BranchCoeffs, compile_branches

__all__ = [
    "N_COEFF_ARRAYS",
    "BranchCoeffs",
    "compile_branches",
    "active_backend",
    "use_backend",
    "energy_many",
    "energy_grad_many",
    "minimize_many",
]

_BACKENDS = {"numpy": numpy_backend}
try:
    from . import numba_backend

    _BACKENDS["numba"] = numba_backend
except ImportError:
    numba_backend = None

_active = None


def use_backend(name: str) -> str:
    """Select the kernel backend; returns the name actually in effect."""
    global _active
    if name == "auto":
        name = "numba" if "numba" in _BACKENDS else "numpy"
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name not in _BACKENDS:
        raise ImportError("numba backend requested but numba is not importable")
    _active = name
    return name


def active_backend() -> str:
    """Name of the backend in effect."""
    return _active


def minimize_many(xa, xb, starts, co, rho_max, gtol, max_iter):
    """Dispatch to the active backend; see numpy_backend.minimize_many."""
    return _BACKENDS[_active].minimize_many(
        xa, xb, starts, co, rho_max, gtol, max_iter)


def energy_many(free, xa, xb, co):
    """Dispatch to the active backend; see numpy_backend.energy_many."""
    return _BACKENDS[_active].energy_many(free, xa, xb, co)


def energy_grad_many(free, xa, xb, co):
    """Dispatch to the active backend; see numpy_backend.energy_grad_many."""
    return _BACKENDS[_active].energy_grad_many(free, xa, xb, co)


use_backend(os.environ.get("DDPHASE_BACKEND", "auto"))
