"""Monte Carlo assembly of the skeleton system.

Row ``i`` is estimated from one set of trajectories started at knot ``i`` and
confined to its patch.  A trajectory leaving through an interface side at arc
length ``z`` contributes ``-Y H_j(z)`` to every stencil column ``j`` of that
side and ``Z`` to the right-hand side; one leaving through the domain boundary
contributes ``Z + Y g``.  The diagonal is exactly one and Dirichlet knots get
identity rows.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .geometry import SIDES, Discretization, Patch
from .interp import build_cardinal_basis, default_shape
from .stochastics import McParams, ProblemSpec, Rect, simulate_exit

log = logging.getLogger(__name__)

BASIS_ALIASES = {"rbf": "rbf", "gaussian-rbf": "rbf", "sinc": "sinc", "sinc-limit": "sinc",
                 "rbf-direct": "rbf-direct"}


def canonical_mode(mode: str) -> str:
    try:
        return BASIS_ALIASES[mode]
    except KeyError:
        raise ValueError(f"unknown basis mode {mode!r}") from None


@dataclass
class RowEstimate:
    """Sample means and standard errors of one row."""

    row: int
    cols: np.ndarray
    values: np.ndarray
    se: np.ndarray
    rhs: float
    rhs_se: float
    abs_sum_se: float
    samples: int
    dirichlet_hit: float
    side_mass: dict
    truncated_fraction: float
    probe_residual: float = math.nan
    probe_se: float = math.nan
    generation: int = 0


@dataclass
class StochasticSystem:
    """Assembled ``G~ x = b~`` plus per-entry statistics.

    ``se`` shares the sparsity pattern of ``matrix`` (zero on the diagonal and
    on Dirichlet rows).  ``abs_sum_se`` is the standard error of the estimate of
    the off-diagonal absolute row sum.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    se: sp.csr_matrix
    rhs_se: np.ndarray
    abs_sum_se: np.ndarray
    dirichlet_hit: np.ndarray
    truncated: np.ndarray
    generation: np.ndarray
    n_dirichlet: int
    mode: str
    shape_c: float
    params: McParams
    probe_residual: Optional[np.ndarray] = None
    probe_se: Optional[np.ndarray] = None
    timing: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_interior(self) -> int:
        return self.N - self.n_dirichlet

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def offdiag_abs_sums(self) -> np.ndarray:
        a = abs(self.matrix).sum(axis=1).A1
        return a - np.abs(self.matrix.diagonal())

    def diagnostics(self) -> dict:
        A = self.matrix.tocoo()
        S = self.se.tocsr()
        off = A.row != A.col
        vals = A.data[off]
        pos = vals > 0
        ratio = []
        if pos.any():
            se = np.asarray(S[A.row[off][pos], A.col[off][pos]]).ravel()
            ratio = (vals[pos] / np.where(se > 0, se, np.inf)).tolist()
        return {
            "N": self.N,
            "n_dirichlet": self.n_dirichlet,
            "nnz": int(self.matrix.nnz),
            "offdiag_nnz": int(off.sum()),
            "mode": self.mode,
            "shape_c": self.shape_c,
            "samples": self.params.samples,
            "timestep": self.params.h,
            "seed": self.params.seed,
            "positive_offdiag": int(pos.sum()),
            "positive_max": float(vals[pos].max()) if pos.any() else 0.0,
            "positive_max_se_ratio": float(max(ratio)) if ratio else 0.0,
            "max_entry_se": float(S.data.max()) if S.nnz else 0.0,
            "max_rhs_se": float(self.rhs_se.max()),
            "row_abs_sum_se": self.abs_sum_se.tolist(),
            "truncated_fraction": self.truncated.tolist(),
            "dirichlet_hit": self.dirichlet_hit.tolist(),
        }


def patch_region(patch: Patch) -> Rect:
    return Rect(*patch.bounds)


def _side_arc(disc: Discretization, patch: Patch, side: str, ex, ey) -> np.ndarray:
    st = patch.stencils[side]
    cfg = disc.config
    first = -cfg.half_side + st.origin * cfg.dz
    along = ey if st.axis == "y" else ex
    return along - first


def _bases(disc: Discretization, patch: Patch, modes, c):
    dz = disc.config.dz
    return {side: {md: build_cardinal_basis((len(st), dz), c, md) for md in modes}
            for side, st in patch.stencils.items()}


def assemble_rows(disc: Discretization, problem: ProblemSpec, i: int, params: McParams,
                  modes: Sequence[str] = ("rbf",), shape_c: Optional[float] = None,
                  probe: Optional[np.ndarray] = None, generation: int = 0) -> dict:
    """Estimate row ``i`` once per basis mode from a single trajectory set."""
    modes = tuple(canonical_mode(md) for md in modes)
    if disc.is_dirichlet(i):
        raise ValueError(f"row {i} belongs to a Dirichlet knot")
    patch = disc.patches[i]
    c = default_shape(disc.config.dz) if shape_c is None else float(shape_c)
    bases = _bases(disc, patch, modes, c)
    batch = simulate_exit(patch_region(patch), disc.knots[i].position, problem, params,
                          row=i, generation=generation)
    ok = ~batch.truncated
    n = int(ok.sum())
    if n == 0:
        raise RuntimeError(f"all trajectories of row {i} were truncated")

    # right-hand side: Z always, Y g on domain-boundary exits
    score = np.where(ok, batch.Z, 0.0)
    dmask = np.zeros(len(batch), dtype=bool)
    side_mass = {}
    for s_idx, side in enumerate(SIDES):
        hit = batch.side == s_idx
        side_mass[side] = float(hit.sum()) / n
        if side in patch.dirichlet_sides:
            dmask |= hit
    if dmask.any():
        score[dmask] += batch.Y[dmask] * problem.g(batch.x[dmask], batch.y[dmask])
    rhs = float(score[ok].mean())
    rhs_se = _se(score[ok], n)

    # cardinal values on each interface side
    evals = {}
    for side, st in patch.stencils.items():
        hit = np.flatnonzero(batch.side == SIDES.index(side))
        if hit.size == 0:
            continue
        z = _side_arc(disc, patch, side, batch.x[hit], batch.y[hit])
        evals[side] = (hit, z)

    cols = np.array(sorted({j for st in patch.stencils.values() for j in st.members}), dtype=np.int64)
    if i in set(cols.tolist()):
        raise RuntimeError(f"knot {i} lies on its own patch boundary")
    where = {j: k for k, j in enumerate(cols)}

    out = {}
    for md in modes:
        s1 = np.zeros(cols.size)
        s2 = np.zeros(cols.size)
        contrib = {}
        for side, (hit, z) in evals.items():
            st = patch.stencils[side]
            v = -batch.Y[hit, None] * bases[side][md].evaluate(z)
            pos = np.fromiter((where[j] for j in st.members), dtype=np.int64, count=len(st))
            s1[pos] += v.sum(axis=0)
            s2[pos] += (v * v).sum(axis=0)
            contrib[side] = (hit, pos, v)
        mean = s1 / n
        var = np.maximum(s2 / n - mean * mean, 0.0) * n / max(n - 1, 1)
        se = np.sqrt(var / n)

        # per-trajectory signed sums for the absolute row-sum estimate
        sign = np.where(mean > 0, 1.0, -1.0)
        per = np.zeros(len(batch))
        for hit, pos, v in contrib.values():
            per[hit] = v @ sign[pos]
        abs_se = _se(per[ok], n)

        est = RowEstimate(i, cols, mean, se, rhs, rhs_se, abs_se, n,
                          float(dmask[ok].mean()), dict(side_mass),
                          batch.truncated_fraction, generation=generation)
        if probe is not None:
            resid = probe[i] - score
            for hit, pos, v in contrib.values():
                resid[hit] += v @ probe[cols[pos]]
            est.probe_residual = float(resid[ok].mean())
            est.probe_se = _se(resid[ok], n)
        out[md] = est
    return out


def assemble_row(disc, problem, i, params, mode="rbf", shape_c=None, probe=None,
                 generation=0) -> RowEstimate:
    return assemble_rows(disc, problem, i, params, (mode,), shape_c, probe, generation)[canonical_mode(mode)]


def _se(x: np.ndarray, n: int) -> float:
    if n < 2:
        return math.inf
    return float(x.std(ddof=1) / math.sqrt(n))


def _pack(disc: Discretization, problem: ProblemSpec, rows: dict, mode: str, c: float,
          params: McParams, probe) -> StochasticSystem:
    N = disc.N
    indptr = [0]
    indices, data, sedata = [], [], []
    rhs = np.zeros(N)
    rhs_se = np.zeros(N)
    abs_se = np.zeros(N)
    dhit = np.ones(N)
    trunc = np.zeros(N)
    gen = np.zeros(N, dtype=np.int64)
    pres = np.full(N, np.nan) if probe is not None else None
    pse = np.full(N, np.nan) if probe is not None else None
    pos = disc.positions
    for i in range(N):
        if disc.is_dirichlet(i):
            indices.append(np.array([i]))
            data.append(np.array([1.0]))
            sedata.append(np.array([0.0]))
            rhs[i] = float(problem.g(pos[i, 0], pos[i, 1]))
            if probe is not None:
                pres[i], pse[i] = probe[i] - rhs[i], 0.0
        else:
            r = rows[i]
            k = np.searchsorted(r.cols, i)
            indices.append(np.insert(r.cols, k, i))
            data.append(np.insert(r.values, k, 1.0))
            sedata.append(np.insert(r.se, k, 0.0))
            rhs[i], rhs_se[i], abs_se[i] = r.rhs, r.rhs_se, r.abs_sum_se
            dhit[i], trunc[i], gen[i] = r.dirichlet_hit, r.truncated_fraction, r.generation
            if probe is not None:
                pres[i], pse[i] = r.probe_residual, r.probe_se
        indptr.append(indptr[-1] + len(indices[-1]))
    ind = np.concatenate(indices)
    A = sp.csr_matrix((np.concatenate(data), ind, np.array(indptr)), shape=(N, N))
    S = sp.csr_matrix((np.concatenate(sedata), ind.copy(), np.array(indptr)), shape=(N, N))
    return StochasticSystem(A, rhs, S, rhs_se, abs_se, dhit, trunc, gen, disc.n_dirichlet,
                            mode, c, params, pres, pse)


def assemble_systems(disc: Discretization, problem: ProblemSpec, params: McParams,
                     modes: Sequence[str] = ("rbf",), shape_c: Optional[float] = None,
                     probe: Optional[np.ndarray] = None) -> dict:
    """Assemble the full system for each basis mode from shared trajectories."""
    modes = tuple(dict.fromkeys(canonical_mode(md) for md in modes))
    c = default_shape(disc.config.dz) if shape_c is None else float(shape_c)
    t0 = time.perf_counter()
    per_mode = {md: {} for md in modes}
    for i in range(disc.n_interior):
        est = assemble_rows(disc, problem, i, params, modes, c, probe)
        for md in modes:
            per_mode[md][i] = est[md]
        if i % 50 == 0:
            log.debug("row %d/%d assembled (%.1fs)", i, disc.n_interior, time.perf_counter() - t0)
    elapsed = time.perf_counter() - t0
    out = {}
    for md in modes:
        sys_ = _pack(disc, problem, per_mode[md], md, c, params, probe)
        sys_.timing["assembly_seconds"] = elapsed
        out[md] = sys_
    return out


def assemble_system(disc: Discretization, problem: ProblemSpec, params: McParams,
                    mode: str = "rbf", shape_c: Optional[float] = None,
                    probe: Optional[np.ndarray] = None) -> StochasticSystem:
    return assemble_systems(disc, problem, params, (mode,), shape_c, probe)[canonical_mode(mode)]


def recompute_row(system: StochasticSystem, disc: Discretization, problem: ProblemSpec, i: int,
                  params: Optional[McParams] = None, generation: Optional[int] = None) -> StochasticSystem:
    """Return a copy of ``system`` with row ``i`` re-estimated.

    The default generation is one past the row's current generation, which
    selects an independent stream.
    """
    if disc.is_dirichlet(i):
        raise ValueError(f"row {i} belongs to a Dirichlet knot")
    params = system.params if params is None else params
    gen = int(system.generation[i]) + 1 if generation is None else int(generation)
    r = assemble_row(disc, problem, i, params, system.mode, system.shape_c, generation=gen)
    k = np.searchsorted(r.cols, i)
    cols = np.insert(r.cols, k, i)
    A = _replace_row(system.matrix, i, cols, np.insert(r.values, k, 1.0))
    S = _replace_row(system.se, i, cols, np.insert(r.se, k, 0.0))
    new = replace(system, matrix=A, se=S, rhs=system.rhs.copy(), rhs_se=system.rhs_se.copy(),
                  abs_sum_se=system.abs_sum_se.copy(), dirichlet_hit=system.dirichlet_hit.copy(),
                  truncated=system.truncated.copy(), generation=system.generation.copy(),
                  timing=dict(system.timing))
    new.rhs[i], new.rhs_se[i], new.abs_sum_se[i] = r.rhs, r.rhs_se, r.abs_sum_se
    new.dirichlet_hit[i], new.truncated[i], new.generation[i] = r.dirichlet_hit, r.truncated_fraction, gen
    return new


def _replace_row(M: sp.csr_matrix, i: int, cols: np.ndarray, vals: np.ndarray) -> sp.csr_matrix:
    """CSR copy of ``M`` with row ``i`` replaced, explicit zeros kept."""
    M = M.tocsr()
    lo, hi = M.indptr[i], M.indptr[i + 1]
    data = np.concatenate([M.data[:lo], vals, M.data[hi:]])
    ind = np.concatenate([M.indices[:lo], cols, M.indices[hi:]])
    ptr = M.indptr.copy()
    ptr[i + 1:] += cols.size - (hi - lo)
    return sp.csr_matrix((data, ind, ptr), shape=M.shape)


@dataclass
class ExitHistogram:
    side: str
    edges: np.ndarray
    counts: np.ndarray
    total: int

    @property
    def mass(self) -> float:
        return float(self.counts.sum()) / self.total


def exit_histogram(disc: Discretization, problem: Optional[ProblemSpec], i: int, params: McParams,
                   bins: int = 20) -> tuple[list, float]:
    """Per-side exit histograms over arc length from the side's start corner.

    Returns the histograms and the domain-boundary (Dirichlet) mass; all
    masses are fractions of non-truncated trajectories.
    """
    patch = disc.patches[i]
    batch = simulate_exit(patch_region(patch), disc.knots[i].position, problem, params, row=i)
    ok = ~batch.truncated
    n = int(ok.sum())
    xmin, xmax, ymin, ymax = patch.bounds
    hists = []
    dmass = 0
    for s_idx, side in enumerate(SIDES):
        hit = ok & (batch.side == s_idx)
        if side in patch.dirichlet_sides:
            dmass += int(hit.sum())
            continue
        if side in ("E", "W"):
            z, length = batch.y[hit] - ymin, ymax - ymin
        else:
            z, length = batch.x[hit] - xmin, xmax - xmin
        edges = np.linspace(0.0, length, bins + 1)
        counts, _ = np.histogram(z, bins=edges)
        hists.append(ExitHistogram(side, edges, counts, n))
    return hists, dmass / n
