"""Structural and conditioning diagnostics of assembled systems."""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .geometry import Discretization
from .stochastics import fet_rect_series

DENSE_CAP = 5000


class SingularMatrixError(ArithmeticError):
    pass


def _csr(A) -> sp.csr_matrix:
    if hasattr(A, "matrix") and sp.issparse(A.matrix):
        A = A.matrix
    return sp.csr_matrix(A, dtype=float)


def _offdiag(A: sp.csr_matrix) -> sp.csr_matrix:
    A = A.tocsr(copy=True)
    A.setdiag(0.0)
    A.eliminate_zeros()
    return A


@dataclass
class ClipItem:
    i: int
    j: int
    value: float
    se_ratio: float


def clip_to_mmatrix(A, se=None) -> tuple[sp.csr_matrix, list]:
    """Zero the positive off-diagonal entries.

    Returns the clipped matrix and one ``ClipItem`` per removed entry.  When
    ``A`` is a system its stored standard errors are used for ``se_ratio``.
    """
    if se is None and hasattr(A, "se"):
        se = A.se
    M = _csr(A)
    coo = M.tocoo()
    pos = (coo.row != coo.col) & (coo.data > 0)
    items = []
    if pos.any():
        S = sp.csr_matrix(se) if se is not None else None
        for i, j, v in zip(coo.row[pos], coo.col[pos], coo.data[pos]):
            s = float(S[i, j]) if S is not None else 0.0
            items.append(ClipItem(int(i), int(j), float(v), v / s if s > 0 else math.inf))
        data = coo.data.copy()
        data[pos] = 0.0
        M = sp.csr_matrix((data, (coo.row, coo.col)), shape=M.shape)
    return M, items


def strongly_connected(A, drop_last: int = 0) -> tuple[bool, int]:
    """Strong connectivity of the pattern digraph of the leading principal block."""
    M = _csr(A)
    n = M.shape[0] - drop_last
    M = M[:n, :n]
    if n == 0:
        return False, 0
    ncomp, _ = csgraph.connected_components(M, directed=True, connection="strong")
    return ncomp == 1, int(ncomp)


def perron_root(B, tol: float = 1e-8, maxit: int = 10_000, x0: Optional[np.ndarray] = None) -> dict:
    """Spectral radius of a nonnegative matrix by power iteration on ``B + I``.

    The shift makes the iteration converge for irreducible (and reducible,
    primitive after shifting) nonnegative matrices.  Collatz-Wielandt bounds
    ``min (Bx)_i/x_i <= rho <= max (Bx)_i/x_i`` bracket the estimate.
    """
    B = sp.csr_matrix(B)
    n = B.shape[0]
    x = np.ones(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    x /= np.linalg.norm(x)
    lam = 0.0
    converged = False
    it = 0
    for it in range(1, maxit + 1):
        y = B @ x + x
        lam_new = float(x @ y)
        nrm = np.linalg.norm(y)
        if nrm == 0:
            break
        y /= nrm
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)) and np.linalg.norm(y - x) <= math.sqrt(tol):
            x, lam = y, lam_new
            converged = True
            break
        x, lam = y, lam_new
    Bx = B @ x
    pos = x > 1e-300
    ratios = Bx[pos] / x[pos]
    lo = float(ratios.min()) if pos.all() else 0.0
    hi = float(ratios.max()) if ratios.size else 0.0
    return {"rho": lam - 1.0, "lower": lo, "upper": hi, "iterations": it,
            "converged": converged, "vector": x}


@dataclass
class StructureReport:
    diagonal_is_one: bool
    positive_count: int
    positive_fraction: float
    positive_max: float
    positive_max_se_ratio: float
    offdiag_abs_sums: np.ndarray = field(repr=False)
    strictly_dominant_rows: list = field(repr=False)
    significantly_dominant_rows: list = field(repr=False)
    irreducible: bool
    components: int
    rho: float
    rho_bounds: tuple
    rho_converged: bool
    rho_iterations: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["offdiag_abs_sums"] = self.offdiag_abs_sums.tolist()
        d["rho_bounds"] = list(self.rho_bounds)
        return d


def structure_check(system, n_dirichlet: Optional[int] = None, tol: float = 1e-8,
                    maxit: int = 10_000) -> StructureReport:
    """Sign census, dominance, irreducibility of G* and Perron root of the clipped B."""
    A = _csr(system)
    n_d = getattr(system, "n_dirichlet", 0) if n_dirichlet is None else n_dirichlet
    abs_se = getattr(system, "abs_sum_se", None)
    diag_ok = bool(np.all(A.diagonal() == 1.0))
    O = _offdiag(A)
    clipped, items = clip_to_mmatrix(system)
    sums = np.asarray(abs(O).sum(axis=1)).ravel()
    strict = np.flatnonzero(sums < 1.0).tolist()
    if abs_se is not None:
        sig = np.flatnonzero(1.0 - sums > 3.0 * abs_se).tolist()
    else:
        sig = strict
    irr, ncomp = strongly_connected(A, n_d)
    B = -_offdiag(clipped)
    pr = perron_root(B, tol, maxit)
    vals = [it.value for it in items]
    return StructureReport(
        diagonal_is_one=diag_ok,
        positive_count=len(items),
        positive_fraction=len(items) / max(O.nnz, 1),
        positive_max=max(vals) if vals else 0.0,
        positive_max_se_ratio=max((it.se_ratio for it in items), default=0.0),
        offdiag_abs_sums=sums,
        strictly_dominant_rows=strict,
        significantly_dominant_rows=sig,
        irreducible=irr,
        components=ncomp,
        rho=pr["rho"],
        rho_bounds=(pr["lower"], pr["upper"]),
        rho_converged=pr["converged"],
        rho_iterations=pr["iterations"],
    )


def is_mmatrix_like(system, k: float = 3.0, slack: float = 1e-3) -> bool:
    """No significant positive off-diagonals and rows dominant within noise."""
    A = _csr(system)
    _, items = clip_to_mmatrix(system)
    if any(it.se_ratio > k for it in items):
        return False
    sums = np.asarray(abs(_offdiag(A)).sum(axis=1)).ravel()
    se = getattr(system, "abs_sum_se", np.zeros(A.shape[0]))
    return bool(np.all(sums <= 1.0 + k * se + slack))


def _lu(A: sp.csr_matrix):
    try:
        return spla.splu(A.tocsc())
    except RuntimeError as exc:
        raise SingularMatrixError(f"matrix is singular to working precision ({exc})") from None


def inv_norm_inf(system, path: str = "auto") -> tuple[float, str]:
    """Infinity norm of the inverse.

    ``"solve"`` returns ``max_i (A^{-1} 1)_i``, which equals the norm when the
    inverse is nonnegative; ``"dense"`` forms ``|A^{-1}|`` explicitly.
    ``"auto"`` picks the solve path when the matrix passes the M-matrix check.
    """
    A = _csr(system)
    if path == "auto":
        path = "solve" if is_mmatrix_like(system) else "dense"
    if path == "solve":
        w = _lu(A).solve(np.ones(A.shape[0]))
        return float(np.max(w)), "solve"
    if path == "dense":
        if A.shape[0] > 10_000:
            raise ValueError("dense path refused above N = 10000")
        inv = _dense_inverse(A)
        return float(np.abs(inv).sum(axis=1).max()), "dense"
    raise ValueError(f"unknown path {path!r}")


def _dense_inverse(A: sp.csr_matrix) -> np.ndarray:
    D = A.toarray()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu = sla.lu_factor(D, check_finite=True)
    except (sla.LinAlgError, ValueError) as exc:
        raise SingularMatrixError(str(exc)) from None
    if np.min(np.abs(np.diag(lu[0]))) == 0:
        raise SingularMatrixError("zero pivot")
    return sla.lu_solve(lu, np.eye(A.shape[0]))


def norm_inf(A) -> float:
    A = _csr(A)
    return float(np.asarray(abs(A).sum(axis=1)).max())


@dataclass
class FetEstimates:
    max_domain: float
    min_patch: float
    source: str = "series"


def fet_estimates(disc: Discretization, K: int = 200) -> FetEstimates:
    """Brownian mean exit times from the rectangle series.

    ``max_domain`` is the domain-centre value (the maximiser on a square);
    ``min_patch`` is the smallest patch exit time over non-Dirichlet knots.
    """
    a = disc.config.half_side
    emax = fet_rect_series((a, a), (0.0, 0.0), K)
    emin = math.inf
    seen = {}
    for i, p in disc.patches.items():
        xmin, xmax, ymin, ymax = p.bounds
        x, y = disc.knots[i].position
        # patch FET depends only on the offset from the patch centre
        key = (round(x - 0.5 * (xmin + xmax), 12), round(y - 0.5 * (ymin + ymax), 12),
               round(xmax - xmin, 12), round(ymax - ymin, 12))
        if key not in seen:
            seen[key] = fet_rect_series((0.5 * (xmax - xmin), 0.5 * (ymax - ymin)), key[:2], K)
        emin = min(emin, seen[key])
    return FetEstimates(emax, emin)


def eq25_bound(fet: FetEstimates) -> float:
    return 1.0 + fet.max_domain / fet.min_patch


def eq34_bound(fet: FetEstimates, H: float, dz: float) -> float:
    return 2.0 + 2.0 * fet.max_domain / (H * dz)


@dataclass
class ConditionReport:
    norm_inf: float
    inv_norm_inf: float
    inv_path: str
    kappa_inf: float
    kappa_2: Optional[float]
    skeel: Optional[float]
    skeel_raw: Optional[float]
    skeel_clipped_kappa: Optional[float]
    inverse_bound: Optional[float]
    kappa_bound: Optional[float]
    fet_max_domain: Optional[float]
    fet_min_patch: Optional[float]

    def to_dict(self) -> dict:
        return asdict(self)


def condition_report(system, fet: Optional[FetEstimates] = None, H: Optional[float] = None,
                     dz: Optional[float] = None, dense_cap: int = DENSE_CAP) -> ConditionReport:
    """Norms and condition numbers of the system matrix.

    Skeel's number is computed on the clipped matrix (where the sign identity
    ``|G| = 2I - G`` holds) and on the raw matrix for comparison;
    ``skeel_clipped_kappa`` is the infinity condition number of the clipped
    matrix, the right comparison for the Skeel inequality.
    """
    A = _csr(system)
    N = A.shape[0]
    nA = norm_inf(A)
    dense = N <= dense_cap
    if dense:
        inv = _dense_inverse(A)
        ninv = float(np.abs(inv).sum(axis=1).max())
        path = "dense"
        sv = sla.svdvals(A.toarray())
        k2 = float(sv[0] / sv[-1])
        skeel_raw = float((np.abs(inv) @ np.asarray(abs(A).sum(axis=1)).ravel()).max())
        C, _ = clip_to_mmatrix(A)
        cinv = _dense_inverse(C)
        skeel = float((np.abs(cinv) @ np.asarray(abs(C).sum(axis=1)).ravel()).max())
        kc = norm_inf(C) * float(np.abs(cinv).sum(axis=1).max())
    else:
        ninv, path = inv_norm_inf(system, "solve")
        k2 = skeel = skeel_raw = kc = None
    ib = kb = None
    if fet is not None:
        ib = eq25_bound(fet)
        if H is not None and dz is not None:
            kb = eq34_bound(fet, H, dz)
    return ConditionReport(nA, ninv, path, nA * ninv, k2, skeel, skeel_raw, kc, ib, kb,
                           fet.max_domain if fet else None, fet.min_patch if fet else None)


def spectrum(A) -> np.ndarray:
    """Dense eigenvalues (refused above the dense cap)."""
    M = A.toarray() if sp.issparse(A) else np.asarray(A)
    if M.shape[0] > DENSE_CAP:
        raise ValueError(f"spectrum refused: N = {M.shape[0]} exceeds dense cap {DENSE_CAP}")
    return np.linalg.eigvals(M)
