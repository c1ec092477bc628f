from collections import deque
from types import SimpleNamespace

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from pddsparse.analysis import (SingularMatrixError, clip_to_mmatrix, condition_report,
                                eq25_bound, eq34_bound, fet_estimates, inv_norm_inf,
                                is_mmatrix_like, norm_inf, perron_root, spectrum,
                                strongly_connected, structure_check)
from pddsparse.geometry import DiscretizationConfig, build_discretization


def test_identity_structure():
    rep = structure_check(sp.identity(4, format="csr"), n_dirichlet=0)
    assert rep.diagonal_is_one and rep.positive_count == 0
    assert not rep.irreducible and rep.components == 4
    assert rep.rho == pytest.approx(0.0, abs=1e-12)


def test_cycle_is_strongly_connected():
    A = sp.identity(3, format="lil")
    A[0, 1] = A[1, 2] = A[2, 0] = -0.5
    ok, n = strongly_connected(A.tocsr())
    assert ok and n == 1
    A[2, 0] = 0.0
    A = A.tocsr()
    A.eliminate_zeros()
    assert strongly_connected(A) == (False, 3)


def _bfs_reach(adj, s):
    seen = {s}
    q = deque([s])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                q.append(v)
    return seen


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 25), st.floats(0.02, 0.4), st.integers(0, 2**31))
def test_strong_connectivity_matches_bfs(n, p, seed):
    rng = np.random.default_rng(seed)
    M = (rng.uniform(size=(n, n)) < p).astype(float)
    fwd = [np.flatnonzero(M[i]).tolist() for i in range(n)]
    bwd = [np.flatnonzero(M[:, i]).tolist() for i in range(n)]
    expected = len(_bfs_reach(fwd, 0)) == n and len(_bfs_reach(bwd, 0)) == n
    assert strongly_connected(sp.csr_matrix(M))[0] == expected


def test_drop_last_block():
    # the Dirichlet tail is excluded before the component count
    A = sp.csr_matrix(np.array([[1, -1, 0], [-1, 1, -0.5], [0, 0, 1.0]]))
    assert strongly_connected(A, drop_last=1) == (True, 1)
    assert strongly_connected(A) == (False, 2)


def test_bidiagonal_inverse_paths():
    G = sp.csr_matrix(np.eye(3) - 0.5 * np.eye(3, k=-1))
    a, pa = inv_norm_inf(G, "solve")
    b, pb = inv_norm_inf(G, "dense")
    assert (pa, pb) == ("solve", "dense")
    assert a == pytest.approx(1.75, abs=1e-14)
    assert abs(a - b) <= 1e-10
    assert inv_norm_inf(sp.identity(5))[0] == 1.0


def test_inverse_auto_path_falls_back():
    G = sp.csr_matrix(np.array([[1.0, 0.5], [-0.3, 1.0]]))
    val, path = inv_norm_inf(G)
    assert path == "dense"
    assert val == pytest.approx(np.abs(np.linalg.inv(G.toarray())).sum(axis=1).max(), rel=1e-14)


def test_singular_matrix():
    with pytest.raises(SingularMatrixError):
        inv_norm_inf(sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]])), "solve")
    with pytest.raises(SingularMatrixError):
        inv_norm_inf(sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]])), "dense")


def test_clip():
    M = sp.csr_matrix(np.eye(3) - 0.3 * np.eye(3, k=1))
    C, items = clip_to_mmatrix(M)
    assert items == [] and np.array_equal(C.toarray(), M.toarray())
    A = sp.lil_matrix(np.eye(6))
    A[2, 5] = 1e-3
    se = sp.lil_matrix((6, 6))
    se[2, 5] = 5e-4
    C, items = clip_to_mmatrix(A.tocsr(), se.tocsr())
    assert C[2, 5] == 0.0 and len(items) == 1
    it = items[0]
    assert (it.i, it.j, it.value, it.se_ratio) == (2, 5, 1e-3, pytest.approx(2.0))


def test_perron_against_eigenvalues():
    rng = np.random.default_rng(3)
    B = rng.uniform(0, 1, (20, 20)) * (rng.uniform(size=(20, 20)) < 0.4)
    np.fill_diagonal(B, 0.0)
    res = perron_root(sp.csr_matrix(B), tol=1e-12, maxit=100_000)
    exact = np.abs(np.linalg.eigvals(B)).max()
    assert res["converged"]
    assert res["rho"] == pytest.approx(exact, rel=1e-6)
    assert res["lower"] - 1e-9 <= exact <= res["upper"] + 1e-9


def test_identity_condition():
    rep = condition_report(sp.identity(6, format="csr"))
    assert rep.kappa_inf == rep.kappa_2 == rep.skeel == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2**31), st.floats(0.3, 1.0))
def test_condition_inequalities_on_dominant_m_matrices(n, seed, scale):
    rng = np.random.default_rng(seed)
    B = rng.uniform(0, 1, (n, n)) * (rng.uniform(size=(n, n)) < 0.5)
    np.fill_diagonal(B, 0.0)
    s = B.sum(axis=1, keepdims=True)
    B = scale * B / np.where(s > 0, s, 1.0)
    B[0] *= 0.5  # at least one strictly dominant row
    G = sp.csr_matrix(np.eye(n) - B)
    rep = condition_report(G)
    assert rep.kappa_inf <= 2 * rep.inv_norm_inf * (1 + 1e-12)
    assert rep.skeel <= 1 + rep.skeel_clipped_kappa + 1e-9
    assert rep.kappa_2 <= rep.kappa_inf * np.sqrt(n) * (1 + 1e-9)


def test_mmatrix_like_uses_stored_errors():
    A = sp.lil_matrix(np.eye(3) - 0.4 * np.eye(3, k=1))
    A[1, 0] = 0.01
    se = sp.lil_matrix((3, 3))
    se[1, 0] = 0.01
    sysm = SimpleNamespace(matrix=A.tocsr(), se=se.tocsr(), abs_sum_se=np.zeros(3))
    assert is_mmatrix_like(sysm)
    se[1, 0] = 0.001
    sysm.se = se.tocsr()
    assert not is_mmatrix_like(sysm)


def test_reference_fet_estimates():
    disc = build_discretization(DiscretizationConfig(20.0, 4, 4, 3))
    fet = fet_estimates(disc)
    # frozen after cross-checking the series against Monte Carlo
    assert fet.max_domain == pytest.approx(58.93708101333641, rel=1e-12)
    assert fet.min_patch == pytest.approx(1.1004344827685288, rel=1e-12)
    assert eq25_bound(fet) == pytest.approx(1 + 58.93708101333641 / 1.1004344827685288, rel=1e-12)
    assert eq34_bound(fet, 5.0, 0.25) == pytest.approx(2 + 2 * 58.93708101333641 / 1.25, rel=1e-12)
    # inscribed-circle underbound for the knot nearest the patch boundary
    assert fet.min_patch > (2.5 ** 2 - 2.25 ** 2) / 2


def test_norms_and_spectrum():
    A = sp.csr_matrix(np.array([[1.0, -2.0], [3.0, 0.5]]))
    assert norm_inf(A) == 3.5
    lam = np.sort_complex(spectrum(sp.identity(3)))
    assert np.array_equal(lam, np.ones(3))
