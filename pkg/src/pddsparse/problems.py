"""Concrete boundary value problems used by the benchmark and the tests."""
from __future__ import annotations

import math

import numba as nb
import numpy as np

from .stochastics import ProblemSpec


def benchmark_exact(x, y):
    """Smooth manufactured solution on ``[-10, 10]^2``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.sqrt(1.0 + x * x / 100.0 + y * y / 50.0)
    s = np.sin(3.0 * x / 25.0 + y / 20.0) + np.sin(x / 20.0 - 3.0 * y / 25.0)
    return 3.0 + np.sin(r) / 3.0 + np.tanh(s) / 3.0


def laplacian_fd(u, x, y, step: float = 1e-3):
    """Fourth-order central difference Laplacian of ``u`` at ``(x, y)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12.0 * step * step)
    k = np.arange(-2, 3) * step
    out = np.zeros(np.broadcast(x, y).shape)
    for wi, ki in zip(w, k):
        out = out + wi * (u(x + ki, y) + u(x, y + ki))
    return out


def make_bilinear(table: np.ndarray, x0: float, y0: float, spacing: float):
    """njit point function interpolating ``table[ix, iy]`` on a uniform grid."""
    nx, ny = table.shape
    inv = 1.0 / spacing
    tab = np.ascontiguousarray(table)

    @nb.njit(inline="always")
    def f(x, y):
        sx = (x - x0) * inv
        sy = (y - y0) * inv
        i = min(max(int(math.floor(sx)), 0), nx - 2)
        j = min(max(int(math.floor(sy)), 0), ny - 2)
        tx = sx - i
        ty = sy - j
        a = tab[i, j] + tx * (tab[i + 1, j] - tab[i, j])
        b = tab[i, j + 1] + tx * (tab[i + 1, j + 1] - tab[i, j + 1])
        return a + ty * (b - a)

    return f


def benchmark_problem(half_side: float = 10.0, spacing: float = 0.05, fd_step: float = 1e-3) -> ProblemSpec:
    """Poisson problem ``Lap u = F`` with the manufactured solution.

    Trajectories are standard Brownian motions (generator ``Lap/2``), so the
    Feynman-Kac source is ``f = -F/2``.  ``F`` is obtained by finite
    differences and tabulated for bilinear lookup inside the simulation.
    """
    n = int(round(2 * half_side / spacing)) + 1
    g = np.linspace(-half_side, half_side, n)
    X, Y = np.meshgrid(g, g, indexing="ij")
    F = laplacian_fd(benchmark_exact, X, Y, fd_step)
    src = make_bilinear(-0.5 * F, -half_side, -half_side, g[1] - g[0])
    return ProblemSpec(dirichlet=benchmark_exact, source=src, exact=benchmark_exact,
                       name="benchmark-poisson")


def laplace_problem(g=None, name: str = "laplace") -> ProblemSpec:
    """``Lap u = 0`` with Dirichlet data ``g`` (default zero)."""
    return ProblemSpec(dirichlet=g, name=name)


@nb.njit(inline="always")
def _minus_one(x, y):
    return -1.0


@nb.njit(inline="always")
def _one(x, y):
    return 1.0


def discounted_problem(g=None, c=-1.0) -> ProblemSpec:
    """Constant zeroth-order coefficient ``c`` (must be <= 0)."""
    if c > 0:
        raise ValueError("zeroth-order coefficient must be nonpositive")
    cc = float(c)

    @nb.njit(inline="always")
    def zeroth(x, y):
        return cc

    return ProblemSpec(dirichlet=g, zeroth=zeroth, name=f"discounted({c})")


def unit_source_problem() -> ProblemSpec:
    """``f = 1`` and ``g = 0``: the score is the exit time itself."""
    return ProblemSpec(source=_one, name="unit-source")
