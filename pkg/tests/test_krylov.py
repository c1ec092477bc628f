import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from pddsparse.krylov import cost_model, gmres, report_json


def test_identity_one_iteration():
    b = np.array([1.0, -2.0, 3.5, 0.25])
    rep = gmres(sp.identity(4), b)
    assert rep.iterations == 1 and rep.converged
    assert np.allclose(rep.x, b, rtol=0, atol=1e-15)
    assert len(rep.residuals) == rep.iterations + 1


def test_diagonal_three_eigenvalues():
    rep = gmres(sp.diags([1.0, 2.0, 4.0]), np.ones(3))
    assert rep.converged and rep.iterations <= 3
    assert np.abs(rep.x - [1.0, 0.5, 0.25]).max() <= 1e-12


def test_zero_rhs():
    rep = gmres(np.eye(3), np.zeros(3))
    assert rep.converged and rep.iterations == 0 and not rep.x.any()


def _matrix(n, seed):
    rng = np.random.default_rng(seed)
    A = np.eye(n) + 0.3 * rng.standard_normal((n, n)) / np.sqrt(n)
    return A, rng.standard_normal(n)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 60), st.integers(0, 2**31))
def test_matches_dense_solve_and_residuals_decrease(n, seed):
    A, b = _matrix(n, seed)
    rep = gmres(A, b, tol=1e-12)
    assert rep.converged
    x = np.linalg.solve(A, b)
    assert np.abs(rep.x - x).max() <= 1e-8 * np.abs(x).max()
    r = np.array(rep.residuals)
    assert np.all(np.diff(r) <= 1e-14)


def test_left_preconditioner_and_callables():
    A, b = _matrix(40, 3)
    Minv = np.linalg.inv(A + 0.05 * np.eye(40))
    plain = gmres(lambda v: A @ v, b)
    pre = gmres(A, b, M=lambda v: Minv @ v)
    assert pre.converged and pre.iterations < plain.iterations
    assert np.abs(pre.x - np.linalg.solve(A, b)).max() <= 1e-8
    # the history tracks the preconditioned residual
    assert pre.precond_residual <= 1e-11


def test_maxit_gives_nonconverged_report():
    A, b = _matrix(50, 5)
    rep = gmres(A, b, maxit=3)
    assert not rep.converged and rep.iterations == 3
    with pytest.raises(ValueError):
        gmres(A, b, tol=0.0)


def test_breakdown_with_exact_solution():
    # b lies in a 2-dimensional invariant subspace
    A = np.diag([1.0, 3.0, 5.0, 7.0])
    b = np.array([1.0, 1.0, 0.0, 0.0])
    rep = gmres(A, b)
    assert rep.converged and rep.iterations <= 2
    assert np.allclose(rep.x, [1.0, 1.0 / 3.0, 0.0, 0.0], atol=1e-14)


@pytest.mark.parametrize("args,expected", [((1, 100, 2, 193), (102, True)),
                                           ((3, 100, 2, 75), (306, False)),
                                           ((0, 0, 193, 193), (0, False)),
                                           ((0, 10, 20, 193), (0, True)),
                                           ((1, 0, 40, 40), (40, False))])
def test_cost_model(args, expected):
    assert cost_model(*args) == expected


def test_cost_model_rejects_negative():
    with pytest.raises(ValueError):
        cost_model(-1, 0, 1, 1)


def test_report_json(tmp_path):
    rep = gmres(np.eye(2), np.ones(2))
    report_json(rep, tmp_path / "r.json", label="x")
    rep.write_residuals(tmp_path / "r.csv")
    import json
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["iterations"] == 1 and d["label"] == "x"
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "iteration,relative_residual"
