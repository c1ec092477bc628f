import csv
import json
import math

import numpy as np
import pytest
import scipy.sparse as sp

from pddsparse import analysis, cli
from pddsparse.bench import (BenchConfig, ScenarioSpec, cluster_percentile, default_scenarios,
                             dump_spectrum, error_budget, fet_validate, fit_power_law,
                             interpolation_defect, make_problem, preconditioned_operator,
                             run_benchmark, run_table_grid, save_system, solve_direct)
from pddsparse.geometry import DiscretizationConfig, build_discretization
from pddsparse.problems import benchmark_exact, benchmark_problem, laplacian_fd


def test_exact_solution_at_origin():
    assert benchmark_exact(0.0, 0.0) == 3.0 + math.sin(1.0) / 3.0
    assert abs(benchmark_exact(0.0, 0.0) - 3.280490) < 5e-7


def test_finite_difference_source_is_self_consistent():
    rng = np.random.default_rng(0)
    x, y = rng.uniform(-9.9, 9.9, (2, 100))
    full = laplacian_fd(benchmark_exact, x, y, 1e-3)
    half = laplacian_fd(benchmark_exact, x, y, 5e-4)
    assert np.abs(full - half).max() <= 1e-6


def test_tabulated_source_matches_fd():
    pb = benchmark_problem()
    rng = np.random.default_rng(1)
    x, y = rng.uniform(-9.9, 9.9, (2, 50))
    tab = np.array([pb.source(a, b) for a, b in zip(x, y)])
    assert np.abs(tab + 0.5 * laplacian_fd(benchmark_exact, x, y)).max() <= 1e-3


def test_config_json(tmp_path):
    cfg = BenchConfig(L=8.0, m=4, n=2, samples=100)
    path = tmp_path / "c.json"
    d = cfg.to_dict()
    d["shape_c"] = None
    path.write_text(json.dumps(d))
    back = BenchConfig.from_json(path, seed=5)
    assert back == cfg.with_overrides(seed=5)
    path.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(ValueError):
        BenchConfig.from_json(path)
    with pytest.raises(ValueError):
        BenchConfig(start_mode="sideways")
    assert BenchConfig(basis="sinc-limit").basis == "sinc"
    assert BenchConfig().resolved_shape() == 0.625
    with pytest.raises(ValueError):
        make_problem("heat", 10.0)


def test_power_law_fit():
    N = np.array([100.0, 400.0, 900.0, 2500.0])
    alpha, beta = fit_power_law(N, 1.0 + 0.3 * N ** 0.9)
    assert alpha == pytest.approx(0.9, rel=1e-12) and beta == pytest.approx(0.3, rel=1e-12)
    with pytest.raises(ValueError):
        fit_power_law([1, 2], [1.0, 2.0])


def test_scenario_specs():
    C = DiscretizationConfig
    with pytest.raises(ValueError):
        ScenarioSpec("x", "m", [C(8.0, 4, 2)] * 3)
    with pytest.raises(ValueError):
        ScenarioSpec("x", "m", [C(2.0 * m, m, 2 + m) for m in (4, 5, 6, 7)])
    for key, spec in default_scenarios().items():
        assert len(spec.configs) >= 4
        Ns = [build_discretization(c).N for c in spec.configs]
        assert Ns == sorted(Ns) and max(Ns) <= 3000


def test_identity_spectrum(tmp_path):
    eye = type("S", (), {})()
    eye.matrix = sp.identity(4, format="csr")
    eye.N = 4
    lam = dump_spectrum(eye, "raw", path=tmp_path / "s.csv")
    assert np.array_equal(lam, np.ones(4))
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == ["re", "im"] and len(rows) == 5
    assert cluster_percentile(lam) == 0.0
    with pytest.raises(ValueError):
        preconditioned_operator(eye, "inverse")


def test_raw_spectrum_has_dirichlet_block(toy):
    s = toy.systems["rbf"]
    lam = dump_spectrum(s, "raw")
    assert np.sum(np.abs(lam - 1.0) <= 1e-10) >= s.n_dirichlet
    assert np.all(np.diff(lam.real) >= 0)


def test_preconditioned_spectra_cluster(toy):
    s = toy.systems["rbf"]
    raw = cluster_percentile(dump_spectrum(s, "raw"))
    neu = cluster_percentile(dump_spectrum(s, "neumann", t=1))
    arn = cluster_percentile(dump_spectrum(s, "arnoldi", t=1, r=20))
    assert arn < neu < raw


def test_direct_solve_keeps_dirichlet_exact(toy):
    s = toy.systems["rbf"]
    x = solve_direct(s)
    ni = s.n_interior
    assert np.array_equal(x[ni:], s.rhs[ni:])
    assert np.abs(s.matrix @ x - s.rhs).max() <= 1e-12


def test_error_budget_on_toy(toy):
    s = toy.systems["rbf"]
    inv, _ = analysis.inv_norm_inf(s, "dense")
    b = error_budget(s, toy.disc, toy.problem, inv)
    assert b.total == pytest.approx(inv * (b.noise + b.bias + b.interpolation))
    x = solve_direct(s)
    u = benchmark_exact(*toy.disc.positions.T)
    assert np.abs(x - u).max() <= b.total
    d = interpolation_defect(toy.disc, benchmark_exact, s.shape_c)
    assert np.all(d[s.n_interior:] == 0.0) and d.max() < 0.05


def test_table_grid(toy, tmp_path):
    s = toy.systems["rbf"]
    g = run_table_grid(s, (0, 1), (0, 5), ("coupled", "uncoupled"), out_dir=tmp_path)
    base = g.cell(0, 0)
    assert base["it_coupled"] == g.baseline and base["pays"] is None
    assert g.cell(1, 0)["cost"] == g.cell(1, 0)["it_coupled"]
    assert g.cell(1, 0)["it_coupled"] <= g.baseline
    assert (tmp_path / "table_grid.csv").read_text().startswith("t,r,it_coupled,it_uncoupled,cost,pays")
    with pytest.raises(KeyError):
        g.cell(7, 7)


def test_run_benchmark_artifacts(toy, tmp_path):
    rep = run_benchmark(toy.cfg, tmp_path, systems=toy.systems)
    assert rep.dirichlet_max_error == 0.0
    assert rep.max_error <= rep.budget.total
    assert rep.solves["gmres_vs_direct"] <= 1e-8
    for name in ("benchmark.json", "solution.vec", "gmres_solution.vec", "residuals.csv",
                 "geometry.json", "system/matrix.mtx", "table_grid.csv"):
        assert (tmp_path / name).exists()
    body = json.loads((tmp_path / "benchmark.json").read_text())
    assert "timing" not in body and body["schema_version"] == 1


def test_fet_validate_small():
    res = fet_validate(samples=2000, h=1e-3, seed=3)
    assert res["scaling"]["same_sides"] and res["scaling"]["same_steps"]
    assert res["scaling"]["tau_rel_error"] <= 1e-9
    assert set(res) == {"disc", "square", "scaling"}


TOY_FLAGS = ["--L", "8", "--m", "4", "--n", "2", "--samples", "300", "--timestep", "0.02",
             "--seed", "4"]


def test_cli_pipeline(tmp_path):
    out = tmp_path / "a"
    assert cli.main(["geometry", "--out-dir", str(out)] + TOY_FLAGS) == 0
    assert json.loads((out / "geometry.json").read_text())["N"] == 93
    assert cli.main(["assemble", "--out-dir", str(out), "--modes", "rbf", "sinc"] + TOY_FLAGS) == 0
    sysdir = out / "system_rbf"
    assert (sysdir / "matrix.mtx").exists() and (out / "system_sinc" / "diagnostics.json").exists()
    common = ["--system", str(sysdir), "--out-dir", str(out)] + TOY_FLAGS
    assert cli.main(["analyze"] + common) == 0
    assert cli.main(["precondition", "--t", "2"] + common) == 0
    assert cli.main(["solve", "--t", "1", "--r", "10"] + common) == 0
    assert cli.main(["table-grid", "--t-list", "0", "1", "--r-list", "0", "5"] + common) == 0
    assert cli.main(["spectrum", "--option", "neumann"] + common) == 0
    solve = json.loads((out / "solve.json").read_text())
    assert solve["converged"] and solve["arnoldi"]["r"] == 10
    an = json.loads((out / "analysis.json").read_text())
    assert an["structure"]["diagonal_is_one"]
    assert (out / "spectrum_neumann.csv").exists() and (out / "P.mtx").exists()


def test_cli_spectrum_refuses_large(tmp_path, monkeypatch, capsys, toy):
    save_system(toy.systems["rbf"], tmp_path / "sys")
    monkeypatch.setattr(analysis, "DENSE_CAP", 10)
    rc = cli.main(["spectrum", "--system", str(tmp_path / "sys"), "--out-dir", str(tmp_path)])
    assert rc == 2
    assert "exceeds dense cap" in capsys.readouterr().err


def test_cli_config_file(tmp_path):
    cfgp = tmp_path / "c.json"
    cfgp.write_text(json.dumps({"L": 8.0, "m": 4, "n": 1, "elongation": 1}))
    assert cli.main(["geometry", "--config", str(cfgp), "--out-dir", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "geometry.json").read_text())["config"]["elongation"] == 1
