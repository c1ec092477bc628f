"""Euler-Maruyama first-exit simulation with Feynman-Kac scoring.

Trajectories solve ``dX = b dt + sigma dW`` from a start point until they
leave a rectangle or a disc.  Along the way the discount ``Y`` and the
source integral ``Z`` are accumulated with the explicit rules

    Z <- Z + f(X_k) Y h,     Y <- Y (1 + c(X_k) h).

The exit point is the intersection of the last segment with the boundary and
the exit time includes the matching fraction of the last step.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numba as nb
import numpy as np

from .rng import normal_pair, row_base, stream_key

SIDE_TRUNCATED = -1
RECT = 0
DISC = 1


class ParameterError(ValueError):
    pass


@nb.njit(cache=True)
def _zero2(x, y):
    return 0.0, 0.0


@nb.njit(cache=True)
def _unit4(x, y):
    return 1.0, 0.0, 0.0, 1.0


@nb.njit(cache=True)
def _zero1(x, y):
    return 0.0


@dataclass
class ProblemSpec:
    """Coefficients of ``1/2 tr(a D^2 u) + b.grad u + c u = -f`` with ``a = sigma sigma^T``.

    ``drift``, ``diffusion``, ``zeroth`` and ``source`` are numba-jitted
    point functions ``(x, y) -> ...``; ``None`` means zero drift, identity
    diffusion, ``c = 0`` and ``f = 0`` respectively, and lets the kernel skip
    the call.  ``dirichlet`` and ``exact`` are vectorised numpy callables.
    """

    dirichlet: Callable = None
    drift: Optional[Callable] = None
    diffusion: Optional[Callable] = None
    zeroth: Optional[Callable] = None
    source: Optional[Callable] = None
    exact: Optional[Callable] = None
    name: str = "custom"

    def g(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.dirichlet is None:
            return np.zeros_like(x)
        return np.broadcast_to(np.asarray(self.dirichlet(x, np.asarray(y, dtype=float)), dtype=float), x.shape).copy()

    def kernel_args(self):
        return (
            self.drift if self.drift is not None else _zero2, self.drift is not None,
            self.diffusion if self.diffusion is not None else _unit4, self.diffusion is not None,
            self.zeroth if self.zeroth is not None else _zero1, self.zeroth is not None,
            self.source if self.source is not None else _zero1, self.source is not None,
        )

    def check(self, points: np.ndarray) -> None:
        """Sample ``c <= 0`` and positive definiteness of ``a`` at ``points``."""
        for x, y in np.asarray(points, dtype=float).reshape(-1, 2):
            if self.zeroth is not None and self.zeroth(x, y) > 0:
                raise ParameterError(f"c({x}, {y}) > 0")
            if self.diffusion is not None:
                s = np.array(self.diffusion(x, y)).reshape(2, 2)
                if np.linalg.eigvalsh(s @ s.T).min() <= 0:
                    raise ParameterError(f"sigma sigma^T not positive definite at ({x}, {y})")


def brownian(dirichlet=None, name="laplace") -> ProblemSpec:
    return ProblemSpec(dirichlet=dirichlet, name=name)


@dataclass(frozen=True)
class McParams:
    h: float = 1e-4
    samples: int = 10_000
    seed: int = 0
    max_steps: int = 100_000_000

    def __post_init__(self):
        if not self.h > 0:
            raise ParameterError("timestep must be positive")
        if self.samples < 1:
            raise ParameterError("need at least one sample")
        if self.max_steps < 1:
            raise ParameterError("max_steps must be positive")


@dataclass(frozen=True)
class Rect:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def params(self) -> tuple:
        return RECT, np.array([self.xmin, self.xmax, self.ymin, self.ymax])

    def contains(self, x, y) -> bool:
        return self.xmin < x < self.xmax and self.ymin < y < self.ymax

    @property
    def half_widths(self):
        return 0.5 * (self.xmax - self.xmin), 0.5 * (self.ymax - self.ymin)

    @property
    def centre(self):
        return 0.5 * (self.xmax + self.xmin), 0.5 * (self.ymax + self.ymin)


@dataclass(frozen=True)
class Disc:
    cx: float
    cy: float
    radius: float

    def params(self) -> tuple:
        return DISC, np.array([self.cx, self.cy, self.radius, 0.0])

    def contains(self, x, y) -> bool:
        return (x - self.cx) ** 2 + (y - self.cy) ** 2 < self.radius ** 2


@dataclass
class ExitBatch:
    """Per-trajectory exit records, indexed by trajectory number.

    ``side`` is 0..3 for E, N, W, S of a rectangle, 0 for a disc and -1 for
    truncated paths.
    """

    side: np.ndarray
    x: np.ndarray
    y: np.ndarray
    tau: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    steps: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.side)

    @property
    def truncated(self) -> np.ndarray:
        return self.side == SIDE_TRUNCATED

    @property
    def truncated_fraction(self) -> float:
        return float(self.truncated.mean()) if len(self) else 0.0

    def record(self, k: int) -> dict:
        return dict(side=int(self.side[k]), x=float(self.x[k]), y=float(self.y[k]),
                    tau=float(self.tau[k]), Y=float(self.Y[k]), Z=float(self.Z[k]))


@nb.njit(inline="always", cache=True)
def _rect_exit(x, y, xn, yn, box):
    """Parameter of the first boundary crossing on the segment and its side."""
    best = 2.0
    side = -1
    dx = xn - x
    dy = yn - y
    if xn > box[1]:
        t = (box[1] - x) / dx
        if t < best:
            best, side = t, 0
    if yn > box[3]:
        t = (box[3] - y) / dy
        if t < best:
            best, side = t, 1
    if xn < box[0]:
        t = (box[0] - x) / dx
        if t < best:
            best, side = t, 2
    if yn < box[2]:
        t = (box[2] - y) / dy
        if t < best:
            best, side = t, 3
    if best < 0.0:
        best = 0.0
    elif best > 1.0:
        best = 1.0
    return best, side


@nb.njit(cache=True)
def _snap_rect(x, y, side, box):
    if side == 0:
        x = box[1]
    elif side == 1:
        y = box[3]
    elif side == 2:
        x = box[0]
    else:
        y = box[2]
    x = min(max(x, box[0]), box[1])
    y = min(max(y, box[2]), box[3])
    return x, y


@functools.lru_cache(maxsize=64)
def _kernel(kind, drift, has_drift, diff, has_diff, cfun, has_c, ffun, has_f):
    """Compile a batch kernel with the problem's flags frozen as constants.

    Closure constants let the compiler drop the unused coefficient calls,
    which matters because the inner loop runs ~10^10 times per system.
    """
    is_rect = kind == RECT

    @nb.njit(parallel=True)
    def run(base, traj0, n, x0, y0, box, h, max_steps):
        side = np.empty(n, np.int8)
        ex = np.empty(n)
        ey = np.empty(n)
        tau = np.empty(n)
        Yo = np.empty(n)
        Zo = np.empty(n)
        steps = np.empty(n, np.int64)
        sq = math.sqrt(h)
        r2 = box[2] * box[2]
        for p in nb.prange(n):
            key = stream_key(base, np.uint64(traj0 + p))
            k = np.uint64(0)
            x = x0
            y = y0
            Y = 1.0
            Z = 0.0
            s = 0
            out = -1
            frac = 0.0
            xn = x
            yn = y
            while s < max_steps:
                z1, z2, k = normal_pair(key, k)
                w1 = sq * z1
                w2 = sq * z2
                if has_diff:
                    s11, s12, s21, s22 = diff(x, y)
                    d1 = s11 * w1 + s12 * w2
                    d2 = s21 * w1 + s22 * w2
                else:
                    d1 = w1
                    d2 = w2
                if has_drift:
                    bx, by = drift(x, y)
                    d1 += bx * h
                    d2 += by * h
                xn = x + d1
                yn = y + d2
                if is_rect:
                    outside = xn > box[1] or xn < box[0] or yn > box[3] or yn < box[2]
                else:
                    outside = (xn - box[0]) ** 2 + (yn - box[1]) ** 2 > r2
                dt = h
                if outside:
                    if is_rect:
                        frac, out = _rect_exit(x, y, xn, yn, box)
                    else:
                        px = x - box[0]
                        py = y - box[1]
                        a = d1 * d1 + d2 * d2
                        bq = px * d1 + py * d2
                        cq = px * px + py * py - r2
                        frac = (-bq + math.sqrt(max(bq * bq - a * cq, 0.0))) / a
                        frac = min(max(frac, 0.0), 1.0)
                        out = 0
                    dt = frac * h
                if has_f:
                    Z += ffun(x, y) * Y * dt
                if has_c:
                    Y *= 1.0 + cfun(x, y) * dt
                if outside:
                    break
                x = xn
                y = yn
                s += 1
            if out < 0:
                side[p] = -1
                ex[p] = x
                ey[p] = y
                tau[p] = s * h
            else:
                qx = x + frac * (xn - x)
                qy = y + frac * (yn - y)
                if is_rect:
                    qx, qy = _snap_rect(qx, qy, out, box)
                else:
                    rx = qx - box[0]
                    ry = qy - box[1]
                    rn = math.sqrt(rx * rx + ry * ry)
                    qx = box[0] + box[2] * (rx / rn)
                    qy = box[1] + box[2] * (ry / rn)
                side[p] = out
                ex[p] = qx
                ey[p] = qy
                tau[p] = s * h + frac * h
            Yo[p] = Y
            Zo[p] = Z
            steps[p] = s
        return side, ex, ey, tau, Yo, Zo, steps

    return run


def simulate_exit(region, start, problem: Optional[ProblemSpec], params: McParams,
                  row: int = 0, generation: int = 0, first: int = 0,
                  count: Optional[int] = None) -> ExitBatch:
    """Simulate ``count`` trajectories (default ``params.samples``) from ``start``.

    Trajectory ``k`` draws from the stream keyed by
    ``(params.seed, row, generation, first + k)``, so batches can be split or
    recomputed piecewise with identical results.
    """
    x0, y0 = (float(v) for v in start)
    if not region.contains(x0, y0):
        raise ParameterError(f"start {start} is not strictly inside {region}")
    n = params.samples if count is None else int(count)
    kind, box = region.params()
    problem = problem if problem is not None else ProblemSpec()
    base = row_base(params.seed, row, generation)
    run = _kernel(kind, *problem.kernel_args())
    res = run(base, np.int64(first), n, x0, y0, box, float(params.h), np.int64(params.max_steps))
    return ExitBatch(*res)


def fet_circle(R: float, r: float) -> float:
    """Mean exit time of standard Brownian motion from a disc of radius ``R``
    started at distance ``r`` from its centre."""
    if r < 0 or R < 0:
        raise ParameterError("radii must be nonnegative")
    if r > R:
        raise ParameterError(f"start radius {r} exceeds disc radius {R}")
    return 0.5 * (R * R - r * r)


def fet_rect_series(half_widths, point, K: int = 200) -> float:
    """Mean exit time of standard Brownian motion from ``[-a, a] x [-b, b]``.

    Double cosine series of the solution of ``1/2 Lap E = -1`` with zero
    boundary values, truncated at ``K`` terms per index.
    """
    a, b = (float(v) for v in half_widths)
    x, y = (float(v) for v in point)
    if abs(x) > a * (1 + 1e-12) or abs(y) > b * (1 + 1e-12):
        raise ParameterError("point outside rectangle")
    k = 2 * np.arange(K) + 1.0
    sgn = np.where(np.arange(K) % 2 == 0, 1.0, -1.0)
    cx = sgn * np.cos(k * np.pi * x / (2 * a)) / k
    cy = sgn * np.cos(k * np.pi * y / (2 * b)) / k
    den = (k[:, None] / a) ** 2 + (k[None, :] / b) ** 2
    return float(128.0 / np.pi ** 4 * np.sum(cx[:, None] * cy[None, :] / den))


def fet_rect_at(rect: Rect, point, K: int = 200) -> float:
    cx, cy = rect.centre
    return fet_rect_series(rect.half_widths, (point[0] - cx, point[1] - cy), K)


@dataclass(frozen=True)
class FetEstimate:
    mean: float
    se: float
    truncated_fraction: float
    flagged: bool
    h: float
    samples: int


def mean_fet_mc(region, start, params: McParams, row: int = 0) -> FetEstimate:
    """Monte Carlo mean first-exit time of standard Brownian motion."""
    batch = simulate_exit(region, start, None, params, row=row)
    ok = ~batch.truncated
    tau = batch.tau[ok]
    n = tau.size
    se = float(tau.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    frac = batch.truncated_fraction
    return FetEstimate(float(tau.mean()) if n else math.nan, se, frac, frac > 0.01,
                       params.h, params.samples)


def richardson_fet(region, start, params: McParams, ratio: int = 4, row: int = 0):
    """Remove the ``sqrt(h)`` exit bias using runs at ``h`` and ``ratio * h``.

    Returns ``(extrapolated mean, its standard error, fine, coarse)``.  The two
    runs use independent streams.
    """
    fine = mean_fet_mc(region, start, params, row=row)
    coarse = mean_fet_mc(region, start, McParams(params.h * ratio, params.samples, params.seed,
                                                 params.max_steps), row=row + 1)
    s = math.sqrt(ratio)
    w = s / (s - 1.0)
    mean = w * fine.mean - (w - 1.0) * coarse.mean
    se = math.hypot(w * fine.se, (w - 1.0) * coarse.se)
    return mean, se, fine, coarse


# Exit through a flat boundary from a discretely monitored walk overshoots on
# average by beta * sqrt(h) with beta = -zeta(1/2)/sqrt(2*pi).
OVERSHOOT = 0.5825971579390106


def exit_bias_scale(h: float) -> float:
    return OVERSHOOT * math.sqrt(h)
