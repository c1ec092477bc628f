"""Benchmark drivers: manufactured-solution run, condition sweeps, (t, r) grids, spectra.

Every driver returns plain dataclasses/dicts and, when given an output
directory, writes its artifacts there (Matrix Market, CSV, JSON).  Nothing in
here depends on wall-clock state except the reported timings, which are kept
out of the byte-compared artifacts.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import io
from .analysis import (condition_report, fet_estimates, inv_norm_inf, structure_check,
                       eq25_bound, eq34_bound)
from .assembly import StochasticSystem, assemble_systems, canonical_mode, _side_arc
from .geometry import DiscretizationConfig, Discretization, build_discretization
from .interp import build_cardinal_basis, default_shape
from .krylov import SolveReport, cost_model, gmres
from .precond import (algorithm_a, apply_pi, build_arnoldi_correction, neumann_dense,
                      pi_dense, precond_bounds, start_vector)
from .problems import benchmark_exact, benchmark_problem, laplace_problem
from .stochastics import (OVERSHOOT, Disc, McParams, ProblemSpec, Rect, fet_circle,
                          fet_rect_series, mean_fet_mc, richardson_fet, simulate_exit)

log = logging.getLogger(__name__)

START_MODES = ("coupled", "uncoupled", "ones", "random")


@dataclass
class BenchConfig:
    """Flat run configuration; field names double as JSON keys."""

    L: float = 20.0
    m: int = 4
    n: float = 4
    elongation: int = 3
    shape_c: Optional[float] = None
    samples: int = 50_000
    timestep: float = 1e-2
    seed: int = 20240601
    basis: str = "rbf"
    t: int = 1
    r: int = 0
    tol: float = 1e-12
    start_mode: str = "coupled"
    problem: str = "benchmark"
    t_list: tuple = (0, 1, 2)
    r_list: tuple = (0, 10, 50, 100)
    recompute_budget: int = 0

    def __post_init__(self):
        self.basis = canonical_mode(self.basis)
        if self.start_mode not in START_MODES:
            raise ValueError(f"start mode must be one of {START_MODES}")
        self.t_list = tuple(int(v) for v in self.t_list)
        self.r_list = tuple(int(v) for v in self.r_list)

    @classmethod
    def from_json(cls, path, **overrides) -> "BenchConfig":
        with open(path) as fh:
            raw = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**raw)

    def with_overrides(self, **overrides) -> "BenchConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    @property
    def geometry(self) -> DiscretizationConfig:
        return DiscretizationConfig(self.L, self.m, self.n, self.elongation)

    @property
    def mc(self) -> McParams:
        return McParams(h=self.timestep, samples=self.samples, seed=self.seed)

    def resolved_shape(self) -> float:
        return default_shape(self.geometry.dz) if self.shape_c is None else float(self.shape_c)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shape_c"] = self.resolved_shape()
        return d


def make_problem(name: str, half_side: float) -> ProblemSpec:
    if name == "benchmark":
        return benchmark_problem(half_side=max(10.0, half_side))
    if name == "laplace":
        return laplace_problem(None)
    if name == "harmonic-data":
        # Laplace operator with the manufactured solution as boundary data
        return laplace_problem(benchmark_exact, name="harmonic-data")
    raise ValueError(f"unknown problem {name!r}")


def build(cfg: BenchConfig):
    disc = build_discretization(cfg.geometry)
    problem = make_problem(cfg.problem, cfg.geometry.half_side)
    return disc, problem


def assemble_from_config(cfg: BenchConfig, modes: Optional[Sequence[str]] = None, probe=True):
    """Assemble the configured system(s); the exact solution is used as probe when known."""
    disc, problem = build(cfg)
    u = None
    if probe and problem.exact is not None:
        pos = disc.positions
        u = np.asarray(problem.exact(pos[:, 0], pos[:, 1]), dtype=float)
    modes = (cfg.basis,) if modes is None else tuple(modes)
    systems = assemble_systems(disc, problem, cfg.mc, modes, cfg.resolved_shape(), u)
    return disc, problem, systems


# ---------------------------------------------------------------- persistence

_VECTORS = ("rhs", "rhs_se", "abs_sum_se", "dirichlet_hit", "truncated", "generation")


def save_system(system: StochasticSystem, out_dir) -> None:
    d = io.ensure_dir(out_dir)
    io.write_matrix_market(d / "matrix.mtx", system.matrix)
    io.write_matrix_market(d / "se.mtx", system.se)
    for name in _VECTORS:
        io.write_vector(d / f"{name}.vec", getattr(system, name))
    meta = {"n_dirichlet": system.n_dirichlet, "mode": system.mode, "shape_c": system.shape_c,
            "params": asdict(system.params), "has_probe": system.probe_residual is not None}
    if system.probe_residual is not None:
        io.write_vector(d / "probe_residual.vec", system.probe_residual)
        io.write_vector(d / "probe_se.vec", system.probe_se)
    io.write_json(d / "system.json", meta)


def load_system(in_dir) -> StochasticSystem:
    d = Path(in_dir)
    with open(d / "system.json") as fh:
        meta = json.load(fh)
    vec = {name: io.read_vector(d / f"{name}.vec") for name in _VECTORS}
    vec["generation"] = vec["generation"].astype(np.int64)
    pr = ps = None
    if meta.get("has_probe"):
        pr = io.read_vector(d / "probe_residual.vec")
        ps = io.read_vector(d / "probe_se.vec")
    return StochasticSystem(io.read_matrix_market(d / "matrix.mtx"), vec["rhs"],
                            io.read_matrix_market(d / "se.mtx"), vec["rhs_se"], vec["abs_sum_se"],
                            vec["dirichlet_hit"], vec["truncated"], vec["generation"],
                            int(meta["n_dirichlet"]), meta["mode"], float(meta["shape_c"]),
                            McParams(**meta["params"]), pr, ps)


# ------------------------------------------------------------------- solving

def solve_direct(system: StochasticSystem) -> np.ndarray:
    """Sparse direct solve exploiting the identity Dirichlet block.

    Dirichlet values are copied from the right-hand side, so they are exact.
    """
    A = system.matrix.tocsr()
    ni = system.n_interior
    x = np.array(system.rhs, dtype=float)
    if ni:
        Gs = A[:ni, :ni].tocsc()
        C = A[:ni, ni:]
        x[:ni] = spla.splu(Gs).solve(system.rhs[:ni] - C @ x[ni:])
    return x


def preconditioned_solve(system: StochasticSystem, pre, t: int, r: int, start: str = "coupled",
                         tol: float = 1e-12, seed: int = 0, x0=None):
    """GMRES with ``Pi_{t,r}``; ``t = r = 0`` is the raw solve."""
    A = system.matrix
    b = system.rhs
    tb = time.perf_counter()
    corr = None
    if t == 0 and r == 0:
        M = None
    else:
        p = pre.with_order(t)
        if r > 0:
            y0 = start_vector(system, start, x0, seed)
            corr = build_arnoldi_correction(system, p, r, y0, start)
        M = (lambda v, p=p, c=corr: apply_pi(p, c, v))
    build_s = time.perf_counter() - tb
    rep = gmres(A, b, x0=x0, M=M, tol=tol)
    rep.build_seconds = build_s
    return rep, corr


# ------------------------------------------------------------- error budget

def interpolation_defect(disc: Discretization, u, c: float, mode: str = "rbf",
                         samples: int = 41) -> np.ndarray:
    """Per-row maximal interpolation error of ``u`` along the patch interface sides."""
    out = np.zeros(disc.N)
    pos = disc.positions
    uk = np.asarray(u(pos[:, 0], pos[:, 1]), dtype=float)
    dz = disc.config.dz
    for i, patch in disc.patches.items():
        worst = 0.0
        for side, st in patch.stencils.items():
            (x0, y0), (x1, y1) = patch.side_segment(side)
            s = np.linspace(0.0, 1.0, samples)
            ex, ey = x0 + s * (x1 - x0), y0 + s * (y1 - y0)
            z = _side_arc(disc, patch, side, ex, ey)
            basis = build_cardinal_basis((len(st), dz), c, mode)
            approx = basis.evaluate(z) @ uk[list(st.members)]
            worst = max(worst, float(np.abs(approx - u(ex, ey)).max()))
        out[i] = worst
    return out


def _grad_max(u, half: float, grid: int = 401, step: float = 1e-4) -> float:
    g = np.linspace(-half, half, grid)
    X, Y = np.meshgrid(g, g, indexing="ij")
    ux = (u(X + step, Y) - u(X - step, Y)) / (2 * step)
    uy = (u(X, Y + step) - u(X, Y - step)) / (2 * step)
    return float(np.sqrt(ux * ux + uy * uy).max())


def _source_max(problem: ProblemSpec, half: float, grid: int = 401) -> float:
    if problem.source is None:
        return 0.0
    g = np.linspace(-half, half, grid)
    return float(max(abs(problem.source(x, y)) for x in g[::4] for y in g[::4]))


@dataclass
class ErrorBudget:
    """``||G^{-1}||_inf`` times the largest per-row consistency defect.

    Row defects are modelled as three noise standard errors of the exact
    solution's residual score, plus the exit-overshoot bias
    ``2 beta sqrt(h) (max|grad u| + H max|f|)`` and the interpolation defect.
    """

    inv_norm: float
    noise: float
    bias: float
    interpolation: float
    total: float

    def to_dict(self) -> dict:
        return asdict(self)


def error_budget(system: StochasticSystem, disc: Discretization, problem: ProblemSpec,
                 inv_norm: float) -> ErrorBudget:
    if problem.exact is None or system.probe_se is None:
        raise ValueError("the error budget needs a known exact solution and probe statistics")
    cfg = disc.config
    ni = system.n_interior
    noise = 3.0 * float(np.max(system.probe_se[:ni])) if ni else 0.0
    half = cfg.half_side
    bias = 2.0 * OVERSHOOT * math.sqrt(system.params.h) * (
        _grad_max(problem.exact, half) + cfg.H * _source_max(problem, half))
    interp = float(interpolation_defect(disc, problem.exact, system.shape_c, system.mode)[:ni].max())
    total = inv_norm * (noise + bias + interp)
    return ErrorBudget(inv_norm, noise, bias, interp, total)


# ----------------------------------------------------------------- benchmark

@dataclass
class BenchmarkReport:
    config: dict
    N: int
    n_dirichlet: int
    max_error: float
    rms_error: float
    dirichlet_max_error: float
    budget: ErrorBudget
    structure: dict
    condition: dict
    preconditioner: dict
    solves: dict
    grid: Optional[dict]
    timing: dict = field(default_factory=dict)
    complete: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d["budget"] = self.budget.to_dict()
        return d


def run_benchmark(cfg: BenchConfig, out_dir=None, grid: bool = True,
                  systems: Optional[dict] = None) -> BenchmarkReport:
    """Assemble, analyse, precondition and solve the configured problem.

    ``systems`` may carry a previously assembled ``{mode: system}`` map for the
    same configuration (used by the test-suite to share one assembly).
    """
    t0 = time.perf_counter()
    disc, problem = build(cfg)
    if problem.exact is None:
        raise ValueError("benchmark runs need a problem with a known exact solution")
    if systems is None:
        _, _, systems = assemble_from_config(cfg)
    system = systems[cfg.basis]
    t_asm = time.perf_counter() - t0
    out = io.ensure_dir(out_dir) if out_dir is not None else None
    if out is not None:
        save_system(system, out / "system")
        io.write_json(out / "geometry.json", disc.to_dict())

    H, dz = disc.config.H, disc.config.dz
    fet = fet_estimates(disc)
    st = structure_check(system)
    cond = condition_report(system, fet, H, dz)
    ginv, _ = inv_norm_inf(system, "dense")
    budget = error_budget(system, disc, problem, ginv)

    x = solve_direct(system)
    pos = disc.positions
    u = problem.exact(pos[:, 0], pos[:, 1])
    err = np.abs(x - u)
    ni = system.n_interior

    pre, _ = algorithm_a(system, t=cfg.t)
    raw, _ = preconditioned_solve(system, pre, 0, 0, tol=cfg.tol)
    pc, corr = preconditioned_solve(system, pre, cfg.t, cfg.r, cfg.start_mode, cfg.tol, cfg.seed)
    solves = {"raw": _solve_summary(raw), "preconditioned": _solve_summary(pc),
              "preconditioned_t": cfg.t, "preconditioned_r": cfg.r,
              "gmres_vs_direct": float(np.abs(pc.x - x).max())}
    grid_rep = None
    if grid:
        grid_rep = run_table_grid(system, cfg.t_list, cfg.r_list, ("coupled", "uncoupled"),
                                  cfg.tol, cfg.seed, pre=pre, out_dir=out)
    rep = BenchmarkReport(
        config=cfg.to_dict(), N=system.N, n_dirichlet=system.n_dirichlet,
        max_error=float(err.max()), rms_error=float(np.sqrt(np.mean(err[:ni] ** 2))) if ni else 0.0,
        dirichlet_max_error=float(err[ni:].max()) if system.n_dirichlet else 0.0,
        budget=budget,
        structure={k: v for k, v in st.to_dict().items() if k != "offdiag_abs_sums"},
        condition=cond.to_dict(), preconditioner=pre.summary(), solves=solves,
        grid=grid_rep.to_dict() if grid_rep else None,
        timing={"assembly_seconds": system.timing.get("assembly_seconds", t_asm),
                "total_seconds": time.perf_counter() - t0})
    if out is not None:
        io.write_vector(out / "solution.vec", x)
        io.write_vector(out / "gmres_solution.vec", pc.x)
        pc.write_residuals(out / "residuals.csv")
        io.write_json(out / "benchmark.json", _deterministic(rep.to_dict()))
    return rep


def _solve_summary(rep: SolveReport) -> dict:
    return {"iterations": rep.iterations, "converged": rep.converged,
            "true_residual": rep.true_residual, "precond_residual": rep.precond_residual,
            "matvecs": rep.matvecs, "breakdown": rep.breakdown}


def _deterministic(d):
    """Drop timing entries so artifacts compare byte-for-byte across runs."""
    if isinstance(d, dict):
        return {k: _deterministic(v) for k, v in d.items()
                if "seconds" not in k and k != "timing"}
    if isinstance(d, list):
        return [_deterministic(v) for v in d]
    return d


# ------------------------------------------------------------------ scenarios

@dataclass
class ScenarioSpec:
    """One-parameter condition sweep at timestep ``hfac * dz^2``."""

    scenario: str
    parameter: str
    configs: list
    samples: int = 2000
    hfac: float = 0.08
    seed: int = 7

    def __post_init__(self):
        if len(self.configs) < 4:
            raise ValueError("a sweep needs at least four points")
        # growing the side at fixed H also grows m, so H is the fixed quantity there
        fixed = {"side": ("H", "n"), "n": ("side", "m"), "m": ("side", "n")}
        if self.parameter not in fixed:
            raise ValueError(f"parameter must be one of {sorted(fixed)}")
        moving = len({getattr(c, self.parameter) for c in self.configs}) > 1
        held = [k for k in fixed[self.parameter] if len({getattr(c, k) for c in self.configs}) > 1]
        if not moving or held:
            raise ValueError(f"{self.parameter!r} must vary with {fixed[self.parameter]} fixed")


def default_scenarios() -> dict:
    """Sweeps growing the domain (i), the resolution (ii) and the subdomain count (iii).

    Every point keeps at least four knot spacings per subdomain side.
    """
    C = DiscretizationConfig
    return {
        # H = 2, dz = 0.25
        "i": ScenarioSpec("i", "side", [C(2.0 * m, m, 4) for m in (4, 5, 6, 8, 10, 14)]),
        # L = 10, H = 2
        "ii": ScenarioSpec("ii", "n", [C(10.0, 5, n) for n in (2, 4, 8, 12, 16)]),
        # L = 15, dz = 0.25, H from 3.75 down to 1
        "iii": ScenarioSpec("iii", "m", [C(15.0, m, 4) for m in (4, 5, 6, 10, 12, 15)]),
    }


@dataclass
class ScenarioSweep:
    scenario: str
    parameter: str
    points: list
    alpha: float
    beta: float
    complete: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def fit_power_law(N, kappa) -> tuple[float, float]:
    """Least-squares fit of ``kappa - 1 = beta N^alpha`` in log-log coordinates."""
    N = np.asarray(N, dtype=float)
    k = np.asarray(kappa, dtype=float) - 1.0
    if np.any(k <= 0) or N.size < 2:
        raise ValueError("power-law fit needs kappa > 1 at two or more points")
    alpha, logb = np.polyfit(np.log(N), np.log(k), 1)
    return float(alpha), float(math.exp(logb))


def scenario_point(cfg: DiscretizationConfig, samples: int, h: float, seed: int,
                   basis: str = "rbf") -> dict:
    disc = build_discretization(cfg)
    t0 = time.perf_counter()
    system = assemble_systems(disc, laplace_problem(None), McParams(h, samples, seed), (basis,))[basis]
    t_asm = time.perf_counter() - t0
    fet = fet_estimates(disc)
    cond = condition_report(system, fet, cfg.H, cfg.dz)
    return {"L": cfg.side, "m": cfg.m, "n": cfg.n, "H": cfg.H, "dz": cfg.dz, "N": system.N,
            "h": h, "samples": samples,
            "kappa_inf": cond.kappa_inf, "kappa_2": cond.kappa_2, "norm_inf": cond.norm_inf,
            "inv_norm_inf": cond.inv_norm_inf, "skeel": cond.skeel, "skeel_raw": cond.skeel_raw,
            "skeel_clipped_kappa": cond.skeel_clipped_kappa,
            "kappa_bound": cond.kappa_bound, "inverse_bound": cond.inverse_bound,
            "assembly_seconds": t_asm}


def run_scenario(spec: ScenarioSpec, out_dir=None, basis: str = "rbf") -> ScenarioSweep:
    points = []
    complete = True
    for cfg in spec.configs:
        h = spec.hfac * cfg.dz ** 2
        try:
            points.append(scenario_point(cfg, spec.samples, h, spec.seed, basis))
        except Exception:
            log.exception("scenario %s point %s failed", spec.scenario, cfg)
            complete = False
            break
        log.info("scenario %s: N=%d kappa=%.3f", spec.scenario, points[-1]["N"], points[-1]["kappa_inf"])
    if len(points) >= 2:
        alpha, beta = fit_power_law([p["N"] for p in points], [p["kappa_inf"] for p in points])
    else:
        alpha = beta = float("nan")
    sweep = ScenarioSweep(spec.scenario, spec.parameter, points, alpha, beta, complete)
    if out_dir is not None:
        out = io.ensure_dir(out_dir)
        cols = ["L", "m", "n", "N", "kappa_inf", "kappa_2", "kappa_bound", "inv_norm_inf",
                "inverse_bound", "skeel", "skeel_clipped_kappa"]
        io.write_csv(out / f"scenario_{spec.scenario}.csv", cols,
                     [[p[c] for c in cols] for p in points])
        io.write_json(out / f"scenario_{spec.scenario}.json", _deterministic(sweep.to_dict()))
    if not complete:
        raise RuntimeError(f"scenario {spec.scenario} aborted after {len(points)} points")
    return sweep


# ------------------------------------------------------------------ (t, r) grid

@dataclass
class GridReport:
    baseline: int
    cells: list

    def to_dict(self) -> dict:
        return asdict(self)

    def cell(self, t: int, r: int) -> dict:
        for c in self.cells:
            if c["t"] == t and c["r"] == r:
                return c
        raise KeyError((t, r))


def run_table_grid(system: StochasticSystem, t_list=(0, 1, 2), r_list=(0, 10, 50, 100),
                   start_modes=("coupled", "uncoupled"), tol: float = 1e-12, seed: int = 0,
                   pre=None, out_dir=None) -> GridReport:
    """GMRES iteration counts for every ``(t, r)`` cell and start mode."""
    if pre is None:
        pre, _ = algorithm_a(system)
    raw, _ = preconditioned_solve(system, pre, 0, 0, tol=tol)
    it0 = raw.iterations
    cells = []
    for t in t_list:
        for r in r_list:
            cell = {"t": int(t), "r": int(r)}
            for mode in start_modes:
                try:
                    if t == 0 and r == 0:
                        rep, corr = raw, None
                    else:
                        rep, corr = preconditioned_solve(system, pre, t, r, mode, tol, seed)
                    cell[f"it_{mode}"] = rep.iterations
                    cell[f"converged_{mode}"] = rep.converged
                    cell[f"lowrank_matvecs_{mode}"] = corr.matvecs if corr else 0
                    cell[f"rank_{mode}"] = corr.r if corr else 0
                    cell[f"build_seconds_{mode}"] = rep.build_seconds
                    cell[f"solve_seconds_{mode}"] = rep.solve_seconds
                except Exception as exc:  # recorded, grid continues
                    log.warning("cell (%d, %d, %s) failed: %s", t, r, mode, exc)
                    cell[f"it_{mode}"] = None
                    cell[f"error_{mode}"] = str(exc)
            it = cell.get(f"it_{start_modes[0]}")
            if t == 0 and r == 0:
                cell["cost"], cell["pays"] = 0, None  # the baseline itself
            elif it is not None:
                cell["cost"], cell["pays"] = cost_model(int(t), int(r), it, it0)
            cells.append(cell)
    rep = GridReport(it0, cells)
    if out_dir is not None:
        out = io.ensure_dir(out_dir)
        cols = ["t", "r"] + [f"it_{m}" for m in start_modes] + ["cost", "pays"]
        io.write_csv(out / "table_grid.csv", cols, [[c.get(k) for k in cols] for c in cells])
        io.write_json(out / "table_grid.json", _deterministic(rep.to_dict()))
    return rep


# ------------------------------------------------------------------ spectrum

SPECTRUM_OPTIONS = ("raw", "neumann", "arnoldi")


def preconditioned_operator(system: StochasticSystem, option: str = "raw", t: int = 1, r: int = 100,
                            start: str = "coupled", seed: int = 0, pre=None) -> np.ndarray:
    """Dense ``G``, ``P_t^{-1} G`` or ``Pi_{t,r} G``."""
    if option not in SPECTRUM_OPTIONS:
        raise ValueError(f"option must be one of {SPECTRUM_OPTIONS}")
    from .analysis import DENSE_CAP
    if system.N > DENSE_CAP:
        raise ValueError(f"spectrum refused: N = {system.N} exceeds dense cap {DENSE_CAP}")
    G = system.matrix.toarray()
    if option == "raw":
        return G
    if pre is None:
        pre, _ = algorithm_a(system)
    p = pre.with_order(t)
    if option == "neumann":
        return neumann_dense(p) @ G
    corr = build_arnoldi_correction(system, p, r, start_vector(system, start, None, seed), start)
    return pi_dense(p, corr) @ G


def dump_spectrum(system: StochasticSystem, option: str = "raw", t: int = 1, r: int = 100,
                  start: str = "coupled", seed: int = 0, path=None, pre=None) -> np.ndarray:
    """Eigenvalues sorted by (real, imaginary) part; optionally written as CSV."""
    M = preconditioned_operator(system, option, t, r, start, seed, pre)
    lam = np.linalg.eigvals(M)
    lam = lam[np.lexsort((lam.imag, lam.real))]
    if path is not None:
        io.write_csv(path, ["re", "im"], [[float(z.real), float(z.imag)] for z in lam])
    return lam


def cluster_percentile(lam: np.ndarray, q: float = 90.0) -> float:
    return float(np.percentile(np.abs(lam - 1.0), q))


# ------------------------------------------------------------- FET validation

def fet_validate(samples: int = 100_000, h: float = 1e-4, seed: int = 1) -> dict:
    """Mean-exit-time oracles: disc, unit square (Richardson), Brownian scaling."""
    p = McParams(h, samples, seed)
    disc = mean_fet_mc(Disc(0.0, 0.0, 1.0), (0.0, 0.0), p)
    disc_exact = fet_circle(1.0, 0.0)
    sq = Rect(-0.5, 0.5, -0.5, 0.5)
    sq_exact = fet_rect_series((0.5, 0.5), (0.0, 0.0))
    rich, rich_se, fine, coarse = richardson_fet(sq, (0.0, 0.0), p)

    # Brownian scaling: domain x2 with timestep x4 reproduces every path
    lam = 2.0
    ps = McParams(h, min(samples, 20_000), seed)
    a = simulate_exit(sq, (0.1, -0.2), None, ps)
    big = Rect(-0.5 * lam, 0.5 * lam, -0.5 * lam, 0.5 * lam)
    b = simulate_exit(big, (0.1 * lam, -0.2 * lam), None, replace(ps, h=h * lam * lam))
    ok = ~a.truncated
    scale_err = float(np.max(np.abs(b.tau[ok] - lam * lam * a.tau[ok]) / (lam * lam * a.tau[ok])))
    pos_err = float(max(np.abs(b.x - lam * a.x).max(), np.abs(b.y - lam * a.y).max()))
    return {
        "disc": {"estimate": disc.mean, "se": disc.se, "exact": disc_exact,
                 "tolerance": 3 * disc.se + 2 * math.sqrt(h),
                 "ok": abs(disc.mean - disc_exact) <= 3 * disc.se + 2 * math.sqrt(h)},
        "square": {"richardson": rich, "se": rich_se, "fine": fine.mean, "fine_se": fine.se,
                   "coarse": coarse.mean, "series": sq_exact,
                   "ok": abs(rich - sq_exact) <= 3 * rich_se},
        "scaling": {"factor": lam, "tau_rel_error": scale_err, "position_error": pos_err,
                    "same_sides": bool(np.array_equal(a.side, b.side)),
                    "same_steps": bool(np.array_equal(a.steps, b.steps))},
    }
