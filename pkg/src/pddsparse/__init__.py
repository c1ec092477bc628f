"""Stochastic domain-decomposition sparse systems and their Neumann-Arnoldi preconditioning.

Submodules are imported on demand so that the command-line driver can fix
thread counts before numba and the BLAS backend initialise.
"""
import importlib

__version__ = "0.1.0"

_SUBMODULES = ("geometry", "interp", "rng", "stochastics", "problems", "assembly",
               "analysis", "precond", "krylov", "io", "bench", "cli")


def __getattr__(name):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
