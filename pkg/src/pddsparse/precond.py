"""Neumann and Neumann-Arnoldi left preconditioners.

``algorithm_a`` projects a noisy matrix onto a diagonally dominant M-matrix
``P = (1 + delta) I - B`` by dropping positive off-diagonal entries and lifting
the diagonal.  ``P^{-1}`` is then approximated by the truncated Neumann series
``P_t^{-1}`` and, optionally, corrected by a rank-``r`` term built from an
incomplete Arnoldi factorisation of ``I - G P_t^{-1}``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .analysis import DENSE_CAP, _dense_inverse, norm_inf

R_CAP = 512


class UnsupportedOperation(RuntimeError):
    pass


class PreconditionerError(ArithmeticError):
    pass


def _matrix(system) -> sp.csr_matrix:
    A = system.matrix if hasattr(system, "matrix") else system
    return sp.csr_matrix(A, dtype=float)


@dataclass
class NeumannPrecond:
    """``P = (1 + delta) I - B`` with ``B >= 0`` and zero diagonal, truncated at order ``t``."""

    delta: float
    B: sp.csr_matrix
    t: int
    E: sp.csr_matrix = field(repr=False)
    row_delta: np.ndarray = field(repr=False)
    recomputed: list = field(default_factory=list)

    @property
    def N(self) -> int:
        return self.B.shape[0]

    def with_order(self, t: int) -> "NeumannPrecond":
        return NeumannPrecond(self.delta, self.B, int(t), self.E, self.row_delta, list(self.recomputed))

    def P(self) -> sp.csr_matrix:
        return ((1.0 + self.delta) * sp.identity(self.N, format="csr") - self.B).tocsr()

    def apply(self, x: np.ndarray) -> np.ndarray:
        return apply_neumann(self, x)

    def summary(self) -> dict:
        hist, edges = np.histogram(self.row_delta, bins=20)
        return {"delta": self.delta, "t": self.t, "E_norm_inf": norm_inf(self.E),
                "row_delta_hist": hist.tolist(), "row_delta_edges": edges.tolist(),
                "recomputed_rows": list(self.recomputed)}


def _project(A: sp.csr_matrix):
    """Steps I and II: clip positive off-diagonals, compute per-row excess."""
    coo = A.tocoo()
    off = coo.row != coo.col
    pos = off & (coo.data > 0)
    n = A.shape[0]
    Eoff = sp.csr_matrix((-coo.data[pos], (coo.row[pos], coo.col[pos])), shape=A.shape)
    keep = off & ~pos
    B = sp.csr_matrix((-coo.data[keep], (coo.row[keep], coo.col[keep])), shape=A.shape)
    B.eliminate_zeros()
    diag = A.diagonal()
    # excess of the off-diagonal absolute sum over the diagonal
    row_delta = np.asarray(B.sum(axis=1)).ravel() - diag
    delta = max(0.0, float(row_delta.max())) if n else 0.0
    return Eoff, B, row_delta, delta


def is_outlier(row_delta: np.ndarray, k: float = 5.0) -> bool:
    """Largest row excess beyond ``median + k * IQR`` of the row excesses."""
    if row_delta.size < 4:
        return False
    q1, med, q3 = np.percentile(row_delta, [25, 50, 75])
    return bool(row_delta.max() > med + k * (q3 - q1))


def algorithm_a(system, recompute_budget: int = 0, recompute: Optional[Callable] = None,
                t: int = 1, outlier_k: float = 5.0):
    """Project onto a diagonally dominant M-matrix.

    With ``recompute_budget > 0`` the row attaining the largest excess is
    re-estimated through ``recompute(system, row) -> system`` while it is an
    outlier of the excess distribution.  Returns ``(precond, system)``; the
    system is the input unless rows were recomputed.
    """
    if recompute_budget > 0 and recompute is None:
        raise UnsupportedOperation("row recomputation requires an assembly context")
    done = []
    while True:
        A = _matrix(system)
        Eoff, B, row_delta, delta = _project(A)
        if len(done) >= recompute_budget or delta == 0.0 or not is_outlier(row_delta, outlier_k):
            break
        alpha = int(np.argmax(row_delta))
        system = recompute(system, alpha)
        done.append(alpha)
    n = A.shape[0]
    diag_fix = sp.diags(1.0 + delta - A.diagonal())
    E = (Eoff + diag_fix).tocsr()
    pre = NeumannPrecond(delta, B, int(t), E, row_delta, done)
    return pre, system


def apply_neumann(pre: NeumannPrecond, x: np.ndarray) -> np.ndarray:
    """``P_t^{-1} x`` through ``x_k = x_0 + B x_{k-1} / (1 + delta)``."""
    s = 1.0 / (1.0 + pre.delta)
    x0 = np.asarray(x, dtype=float)
    xk = x0
    for _ in range(pre.t):
        xk = x0 + s * (pre.B @ xk)
    return s * xk


def neumann_dense(pre: NeumannPrecond) -> np.ndarray:
    """Dense ``P_t^{-1}`` (test oracle)."""
    n = pre.N
    s = 1.0 / (1.0 + pre.delta)
    M = s * pre.B.toarray()
    acc = np.eye(n)
    term = np.eye(n)
    for _ in range(pre.t):
        term = M @ term
        acc += term
    return s * acc


@dataclass
class ArnoldiCorrection:
    r: int
    V: np.ndarray = field(repr=False)
    H: np.ndarray = field(repr=False)
    inv_block: np.ndarray = field(repr=False)
    start: str = "coupled"
    breakdown: bool = False
    requested: int = 0
    matvecs: int = 0

    def orthogonality_defect(self) -> float:
        return float(np.abs(self.V.T @ self.V - np.eye(self.r)).max()) if self.r else 0.0

    def summary(self) -> dict:
        return {"r": self.r, "requested": self.requested, "breakdown": self.breakdown,
                "start": self.start, "matvecs": self.matvecs,
                "orthogonality_defect": self.orthogonality_defect()}


def arnoldi(op: Callable, v0: np.ndarray, steps: int, breakdown_tol: float = 1e-14):
    """Modified Gram-Schmidt Arnoldi with selective reorthogonalisation.

    Returns ``(V, H, k, broke)`` with ``V`` of shape ``(n, k + 1)`` and ``H`` of
    shape ``(k + 1, k)``; ``k < steps`` only on breakdown.
    """
    n = v0.size
    V = np.zeros((n, steps + 1))
    H = np.zeros((steps + 1, steps))
    beta = np.linalg.norm(v0)
    if beta == 0:
        raise ValueError("Arnoldi start vector is zero")
    V[:, 0] = v0 / beta
    for j in range(steps):
        w = op(V[:, j])
        before = np.linalg.norm(w)
        for i in range(j + 1):
            hij = V[:, i] @ w
            H[i, j] = hij
            w = w - hij * V[:, i]
        after = np.linalg.norm(w)
        if after < before / math.sqrt(2.0):
            for i in range(j + 1):
                c = V[:, i] @ w
                H[i, j] += c
                w = w - c * V[:, i]
            after = np.linalg.norm(w)
        H[j + 1, j] = after
        if after < breakdown_tol:
            return V[:, : j + 1], H[: j + 2, : j + 1], j + 1, True
        V[:, j + 1] = w / after
    return V, H, steps, False


def start_vector(system, mode: str = "coupled", x0: Optional[np.ndarray] = None, seed: int = 0) -> np.ndarray:
    """Arnoldi seed: ``b - G x0`` (coupled), the ones vector (uncoupled, alias
    ``ones``) or a seeded standard normal vector (random)."""
    A = _matrix(system)
    n = A.shape[0]
    if mode == "coupled":
        b = np.asarray(system.rhs, dtype=float)
        return b if x0 is None else b - A @ x0
    if mode in ("uncoupled", "ones"):
        return np.ones(n)
    if mode == "random":
        return np.random.default_rng(seed).standard_normal(n)
    raise ValueError(f"unknown start mode {mode!r}")


def build_arnoldi_correction(system, pre: NeumannPrecond, r: int, y0: np.ndarray,
                             start: str = "custom") -> ArnoldiCorrection:
    """Rank-``r`` approximation ``I - G P_t^{-1} ~ V H V^T`` and ``(I - H)^{-1}``."""
    A = _matrix(system)
    n = A.shape[0]
    if r < 0:
        raise ValueError("rank must be nonnegative")
    if r > R_CAP and r != n:
        raise ValueError(f"rank {r} exceeds cap {R_CAP}")
    if r == 0:
        return ArnoldiCorrection(0, np.zeros((n, 0)), np.zeros((0, 0)), np.zeros((0, 0)), start,
                                 False, 0, 0)
    count = [0]

    def op(v):
        count[0] += 1
        return v - A @ apply_neumann(pre, v)

    V, H, k, broke = arnoldi(op, np.asarray(y0, dtype=float), r)
    # a vanishing residual after the final requested step is harmless
    broke = broke and k < r
    Vr = np.ascontiguousarray(V[:, :k])
    Hr = np.triu(H[:k, :k], -1)
    M = np.eye(k) - Hr
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(M)
    if np.min(np.abs(np.diag(lu))) <= 1e-14 * max(1.0, np.abs(M).max()):
        raise PreconditionerError(f"I - H is singular at rank {k}")
    inv = sla.lu_solve((lu, piv), np.eye(k))
    return ArnoldiCorrection(k, Vr, Hr, inv, start, broke, r, count[0] * pre.t)


def apply_pi(pre: NeumannPrecond, corr: Optional[ArnoldiCorrection], x: np.ndarray) -> np.ndarray:
    """Neumann-Arnoldi preconditioner ``P_t^{-1} (I + V [(I - H)^{-1} - I] V^T) x``."""
    x = np.asarray(x, dtype=float)
    if corr is None or corr.r == 0:
        return apply_neumann(pre, x)
    c = corr.V.T @ x
    y = x + corr.V @ (corr.inv_block @ c - c)
    return apply_neumann(pre, y)


def pi_dense(pre: NeumannPrecond, corr: Optional[ArnoldiCorrection]) -> np.ndarray:
    Pt = neumann_dense(pre)
    if corr is None or corr.r == 0:
        return Pt
    return Pt @ (np.eye(pre.N) + corr.V @ (corr.inv_block - np.eye(corr.r)) @ corr.V.T)


def truncation_factor(pre: NeumannPrecond, t: Optional[int] = None) -> np.ndarray:
    """Dense ``T_{t+1} = I - (B / (1 + delta))^{t+1}``."""
    t = pre.t if t is None else t
    M = pre.B.toarray() / (1.0 + pre.delta)
    return np.eye(pre.N) - np.linalg.matrix_power(M, t + 1)


def _ninf(M: np.ndarray) -> float:
    return float(np.abs(M).sum(axis=1).max())


def precond_bounds(system, pre: NeumannPrecond, ts=(1, 2, 5), dense_cap: int = DENSE_CAP) -> dict:
    """Condition bounds of the (truncated) Neumann-preconditioned matrix.

    ``bound`` multiplies ``||T|| ||T^{-1}||`` (exact dense inverse) by the
    full second-order perturbation factor built on ``||P^{-1}||``; this is a
    rigorous upper bound.  ``estimate`` follows the leading-order form with
    ``||P_t^{-1}||`` and the first-order surrogate ``||2I - T||`` for the
    inverse, and is reported for comparison only.
    """
    A = _matrix(system)
    n = A.shape[0]
    En = norm_inf(pre.E)
    out = {"delta": pre.delta, "E_norm_inf": En, "N": n}
    if n > dense_cap:
        out["dense"] = False
        return out
    Gd = A.toarray()
    Ginv = _dense_inverse(A)
    Pinv = _dense_inverse(pre.P())
    gi, pi = _ninf(Ginv), _ninf(Pinv)
    factor = 1.0 + (gi + pi) * En + gi * pi * En * En
    out.update(dense=True, G_inv_norm=gi, P_inv_norm=pi, eq43=factor,
               kappa_PG=_ninf(Pinv @ Gd) * _ninf(np.linalg.solve(Pinv @ Gd, np.eye(n))))
    rows = []
    for t in ts:
        p = pre.with_order(t)
        T = truncation_factor(p)
        Tn = _ninf(T)
        Tinv = _ninf(np.linalg.inv(T))
        est_inv = _ninf(2.0 * np.eye(n) - T)
        Pt = neumann_dense(p)
        ptn = _ninf(Pt)
        PtG = Pt @ Gd
        actual = _ninf(PtG) * _ninf(np.linalg.inv(PtG))
        rows.append({"t": t, "T_norm": Tn, "T_inv_norm": Tinv, "T_inv_estimate": est_inv,
                     "Pt_inv_norm": ptn, "bound": Tn * Tinv * factor,
                     "estimate": Tn * est_inv * (1.0 + (gi + ptn) * En),
                     "actual": actual})
    out["per_t"] = rows
    return out
