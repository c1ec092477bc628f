import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pddsparse.problems import discounted_problem, unit_source_problem
from pddsparse.stochastics import (SIDE_TRUNCATED, Disc, McParams, ParameterError, ProblemSpec,
                                   Rect, fet_circle, fet_rect_series, mean_fet_mc, simulate_exit)

SQUARE = Rect(-0.5, 0.5, -0.5, 0.5)


def test_fet_circle():
    assert fet_circle(1.0, 0.0) == 0.5
    assert fet_circle(3.0, 3.0) == 0.0
    assert fet_circle(2.0, 1.0) == 1.5
    with pytest.raises(ParameterError):
        fet_circle(1.0, 2.0)


def test_fet_rect_series_boundary_and_centre():
    assert abs(fet_rect_series((0.5, 0.5), (0.5, 0.1), 200)) <= 1e-6
    assert abs(fet_rect_series((1.0, 0.5), (0.2, -0.5), 200)) <= 1e-6
    # unit square centre, frozen after the Monte Carlo cross-check
    assert fet_rect_series((0.5, 0.5), (0.0, 0.0), 200) == pytest.approx(0.147343, abs=5e-7)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.floats(-0.99, 0.99), st.floats(-0.99, 0.99),
       st.floats(0.3, 5.0))
def test_fet_rect_series_scaling(a, b, fx, fy, lam):
    base = fet_rect_series((a, b), (fx * a, fy * b))
    scaled = fet_rect_series((lam * a, lam * b), (lam * fx * a, lam * fy * b))
    assert scaled == pytest.approx(lam * lam * base, rel=1e-12, abs=1e-300)


def test_fet_rect_series_long_strip_limit():
    # far from the ends of a long strip the exit time is the 1D value (b^2 - y^2)
    assert fet_rect_series((40.0, 1.0), (0.0, 0.3), 800) == pytest.approx(1.0 - 0.09, rel=1e-6)


def test_brownian_scores_are_trivial():
    b = simulate_exit(SQUARE, (0.1, 0.2), None, McParams(1e-3, 500, 3))
    assert np.all(b.Y == 1.0)
    assert np.all(b.Z == 0.0)


def test_unit_source_score_is_exit_time():
    b = simulate_exit(SQUARE, (0.0, 0.0), unit_source_problem(), McParams(1e-3, 500, 3))
    assert np.allclose(b.Z, b.tau, rtol=1e-12, atol=1e-15)


def test_exit_points_and_times():
    h = 1e-3
    b = simulate_exit(SQUARE, (0.2, -0.1), None, McParams(h, 2000, 9))
    assert not b.truncated.any()
    assert set(np.unique(b.side)) <= {0, 1, 2, 3}
    on = {0: np.abs(b.x - 0.5), 1: np.abs(b.y - 0.5), 2: np.abs(b.x + 0.5), 3: np.abs(b.y + 0.5)}
    for s, dist in on.items():
        assert np.all(dist[b.side == s] <= 1e-12)
    assert np.all(np.abs(b.x) <= 0.5 + 1e-12) and np.all(np.abs(b.y) <= 0.5 + 1e-12)
    # steps counts the full steps; the exit step is a fraction of h
    assert np.all(b.tau >= b.steps * h - 1e-15)
    assert np.all(b.tau <= (b.steps + 1) * h + 1e-15)
    masses = np.bincount(b.side, minlength=4) / len(b)
    assert masses.sum() == pytest.approx(1.0, abs=1e-15)


def test_disc_exit_on_circle():
    b = simulate_exit(Disc(0.3, -0.2, 1.5), (0.3, -0.2), None, McParams(1e-3, 1000, 2))
    r = np.hypot(b.x - 0.3, b.y + 0.2)
    assert np.abs(r - 1.5).max() <= 1e-12


def test_determinism_and_batch_splitting():
    p = McParams(1e-3, 300, 17)
    a = simulate_exit(SQUARE, (0.0, 0.0), None, p, row=4)
    b = simulate_exit(SQUARE, (0.0, 0.0), None, p, row=4)
    assert np.array_equal(a.tau, b.tau) and np.array_equal(a.x, b.x)
    first = simulate_exit(SQUARE, (0.0, 0.0), None, p, row=4, first=0, count=120)
    rest = simulate_exit(SQUARE, (0.0, 0.0), None, p, row=4, first=120, count=180)
    assert np.array_equal(np.concatenate([first.tau, rest.tau]), a.tau)
    other = simulate_exit(SQUARE, (0.0, 0.0), None, p, row=5)
    assert not np.array_equal(other.tau, a.tau)
    gen = simulate_exit(SQUARE, (0.0, 0.0), None, p, row=4, generation=1)
    assert not np.array_equal(gen.tau, a.tau)


@pytest.mark.parametrize("lam", [2.0, 0.5])
def test_brownian_scaling_path_by_path(lam):
    h = 1e-3
    p = McParams(h, 400, 5)
    a = simulate_exit(SQUARE, (0.1, -0.2), None, p)
    big = Rect(-0.5 * lam, 0.5 * lam, -0.5 * lam, 0.5 * lam)
    b = simulate_exit(big, (0.1 * lam, -0.2 * lam), None, replace(p, h=h * lam * lam))
    assert np.array_equal(a.side, b.side) and np.array_equal(a.steps, b.steps)
    assert np.allclose(b.tau, lam * lam * a.tau, rtol=1e-9, atol=0)
    assert np.allclose(b.x, lam * a.x, rtol=0, atol=1e-9)


def test_discount_is_monotone_pathwise():
    # same streams with and without c = -1: |g Y| never exceeds |g| for g >= 0
    g = lambda x, y: 1.0 + x * x + 0 * y  # noqa: E731
    p = McParams(1e-3, 500, 8)
    plain = simulate_exit(SQUARE, (0.0, 0.1), ProblemSpec(dirichlet=g), p)
    disc = simulate_exit(SQUARE, (0.0, 0.1), discounted_problem(g, -1.0), p)
    assert np.array_equal(plain.x, disc.x)
    assert np.all(0 < disc.Y) and np.all(disc.Y <= 1.0)
    assert np.all(g(disc.x, disc.y) * disc.Y <= g(plain.x, plain.y) * plain.Y)
    # multiplicative Euler discount tracks exp(-tau)
    assert np.abs(disc.Y - np.exp(-disc.tau)).max() < 1e-3


def test_truncation_is_flagged():
    est = mean_fet_mc(SQUARE, (0.0, 0.0), McParams(1e-3, 200, 1, max_steps=10))
    assert est.flagged and est.truncated_fraction > 0.01
    b = simulate_exit(SQUARE, (0.0, 0.0), None, McParams(1e-3, 200, 1, max_steps=10))
    assert np.all(b.side[b.truncated] == SIDE_TRUNCATED)


def test_start_outside_rejected():
    with pytest.raises(ParameterError):
        simulate_exit(SQUARE, (0.5, 0.0), None, McParams())
    with pytest.raises(ParameterError):
        McParams(h=0.0)


def test_rectangle_fet_against_series():
    h = 1e-4
    rect = Rect(-1.0, 1.0, -0.5, 0.5)
    est = mean_fet_mc(rect, (0.0, 0.0), McParams(h, 20_000, 21))
    ref = fet_rect_series((1.0, 0.5), (0.0, 0.0), 200)
    assert abs(est.mean - ref) <= 3 * est.se + 2 * math.sqrt(h)


def test_boundary_adjacent_exceeds_inscribed_circle_bound():
    a, dz, h = 0.5, 0.1, 1e-4
    est = mean_fet_mc(SQUARE, (a - dz, 0.0), McParams(h, 20_000, 4))
    lower = fet_circle(a, a - dz)
    assert est.mean - 3 * est.se > lower
