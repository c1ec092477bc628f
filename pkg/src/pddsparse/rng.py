"""Counter-based random streams.

Every trajectory owns a 64-bit key derived from ``(seed, row, generation,
trajectory)`` by chained SplitMix64 finalisers.  The k-th uniform of a stream
is ``mix(key + k * GAMMA)``, so any draw can be reproduced without replaying
the others and results do not depend on how work is scheduled.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0
_MASK = (1 << 64) - 1


@nb.njit(inline="always", cache=True)
def mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(inline="always", cache=True)
def uniform(key, k):
    """k-th uniform of the stream, in (0, 1]."""
    return ((mix(key + k * GAMMA) >> _S11) + _ONE) * _INV53


@nb.njit(inline="always", cache=True)
def stream_key(base, traj):
    return mix(base + mix(traj * GAMMA + GAMMA))


def _ziggurat_tables(layers: int = 128, r: float = 3.442619855899, v: float = 9.91256303526217e-3):
    """Layer abscissae and acceptance ratios of the ziggurat for the normal density."""
    x = np.zeros(layers + 1)
    f = math.exp(-0.5 * r * r)
    x[0] = v / f
    x[1] = r
    for i in range(2, layers):
        x[i] = math.sqrt(-2.0 * math.log(v / x[i - 1] + f))
        f = math.exp(-0.5 * x[i] * x[i])
    ratio = x[1:] / x[:-1]
    return x, ratio


ZIG_X, ZIG_RATIO = _ziggurat_tables()
ZIG_R = 3.442619855899
_LOW7 = np.uint64(0x7F)


@nb.njit(inline="always", cache=True)
def normal(key, k):
    """Standard normal by the 128-layer ziggurat; returns (z, k')."""
    while True:
        w = mix(key + k * GAMMA)
        k += _ONE
        u = 2.0 * ((w >> _S11) * _INV53) - 1.0
        i = np.int64(w & _LOW7)
        if abs(u) < ZIG_RATIO[i]:
            return u * ZIG_X[i], k
        if i == 0:
            # tail beyond r
            while True:
                a = math.log(uniform(key, k)) / ZIG_R
                b = math.log(uniform(key, k + _ONE))
                k += np.uint64(2)
                if -2.0 * b >= a * a:
                    break
            return (a - ZIG_R if u < 0.0 else ZIG_R - a), k
        x = u * ZIG_X[i]
        f0 = math.exp(-0.5 * (ZIG_X[i] * ZIG_X[i] - x * x))
        f1 = math.exp(-0.5 * (ZIG_X[i + 1] * ZIG_X[i + 1] - x * x))
        if f1 + uniform(key, k) * (f0 - f1) < 1.0:
            k += _ONE
            return x, k
        k += _ONE


@nb.njit(inline="always", cache=True)
def normal_pair(key, k):
    """Two independent standard normals; returns (z1, z2, k')."""
    z1, k = normal(key, k)
    z2, k = normal(key, k)
    return z1, z2, k


@nb.njit(inline="always", cache=True)
def normal_pair_polar(key, k):
    """Marsaglia polar pair, kept as an independent reference sampler."""
    while True:
        v1 = 2.0 * uniform(key, k) - 1.0
        v2 = 2.0 * uniform(key, k + _ONE) - 1.0
        k += np.uint64(2)
        q = v1 * v1 + v2 * v2
        if 0.0 < q < 1.0:
            f = math.sqrt(-2.0 * math.log(q) / q)
            return v1 * f, v2 * f, k


def _mix_py(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def row_base(seed: int, row: int, generation: int = 0) -> np.uint64:
    """Key shared by all trajectories of one row and generation."""
    z = _mix_py(int(seed) + 0x5851F42D4C957F2D)
    z = _mix_py(z + int(row) * 0x9E3779B97F4A7C15 + 1)
    z = _mix_py(z + int(generation) * 0xD1B54A32D192ED03 + 2)
    return np.uint64(z)


def stream_key_py(base: int, traj: int) -> int:
    g = 0x9E3779B97F4A7C15
    return _mix_py(int(base) + _mix_py(int(traj) * g + g))


def uniforms_py(key: int, count: int) -> np.ndarray:
    """Reference implementation of the first ``count`` uniforms of a stream."""
    g = 0x9E3779B97F4A7C15
    out = np.empty(count)
    for k in range(count):
        out[k] = ((_mix_py(int(key) + k * g) >> 11) + 1) * _INV53
    return out


@nb.njit(cache=True)
def uniforms(key, count):
    out = np.empty(count)
    for k in range(count):
        out[k] = uniform(key, np.uint64(k))
    return out
