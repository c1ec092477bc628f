"""Command-line driver.

Every subcommand reads an optional JSON config, applies flag overrides and
writes its artifacts into ``--out-dir``.  Dense linear algebra is pinned to a
single BLAS thread so artifacts are bit-identical whatever ``--threads`` says.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

_OVERRIDES = {
    "L": float, "m": int, "n": float, "elongation": int, "shape_c": float, "samples": int,
    "timestep": float, "t": int, "r": int, "tol": float,
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="numba worker threads")
    p.add_argument("--out-dir", default="out")
    for name, typ in _OVERRIDES.items():
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ)
    p.add_argument("--start-mode", choices=("coupled", "uncoupled", "ones", "random"))
    p.add_argument("--basis", choices=("rbf", "sinc", "rbf-direct"))
    p.add_argument("--problem", choices=("benchmark", "laplace", "harmonic-data"))
    p.add_argument("-v", "--verbose", action="store_true")


def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pddsparse", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    cmds = {
        "geometry": "dump the discretization as JSON",
        "assemble": "assemble the stochastic system",
        "analyze": "structure and condition reports",
        "precondition": "project onto an M-matrix and report preconditioner bounds",
        "solve": "GMRES with the Neumann(-Arnoldi) preconditioner",
        "benchmark": "full manufactured-solution run",
        "scenario": "condition-number sweep",
        "table-grid": "iteration counts over a (t, r) grid",
        "spectrum": "eigenvalues of the (preconditioned) operator",
        "fet-validate": "mean exit time oracles",
    }
    subs = {}
    for name, help_ in cmds.items():
        subs[name] = p = sub.add_parser(name, help=help_)
        _add_common(p)
    for name in ("analyze", "precondition", "solve", "table-grid", "spectrum"):
        subs[name].add_argument("--system", help="directory written by 'assemble' (default: assemble now)")
    subs["assemble"].add_argument("--modes", nargs="+", help="basis modes sharing one trajectory set")
    subs["precondition"].add_argument("--recompute-budget", type=int, default=0)
    subs["scenario"].add_argument("--id", dest="scenario", choices=("i", "ii", "iii"), required=True)
    subs["scenario"].add_argument("--scenario-samples", type=int, help="samples per row in the sweep")
    subs["table-grid"].add_argument("--t-list", type=int, nargs="+")
    subs["table-grid"].add_argument("--r-list", type=int, nargs="+")
    subs["spectrum"].add_argument("--option", choices=("raw", "neumann", "arnoldi"), default="raw")
    subs["benchmark"].add_argument("--no-grid", action="store_true")
    subs["fet-validate"].add_argument("--fet-samples", type=int, default=100_000)
    return ap


def _pin_threads(threads) -> None:
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = "1"
    # portable threading layer; avoids probing an incompatible TBB install
    os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
    if threads is not None:
        if threads < 1:
            raise SystemExit("--threads must be positive")
        os.environ["NUMBA_NUM_THREADS"] = str(threads)


def _config(args):
    from .bench import BenchConfig

    over = {k: getattr(args, k, None) for k in list(_OVERRIDES) + ["start_mode", "basis", "problem", "seed"]}
    if getattr(args, "t_list", None):
        over["t_list"] = tuple(args.t_list)
    if getattr(args, "r_list", None):
        over["r_list"] = tuple(args.r_list)
    if args.config:
        return BenchConfig.from_json(args.config, **over)
    return BenchConfig().with_overrides(**over)


def _system(args, cfg):
    from .bench import assemble_from_config, load_system

    if getattr(args, "system", None):
        return load_system(args.system)
    _, _, systems = assemble_from_config(cfg)
    return systems[cfg.basis]


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    _pin_threads(args.threads)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    import numba

    if args.threads is not None:
        numba.set_num_threads(args.threads)

    from . import bench, io
    from .analysis import condition_report, fet_estimates, structure_check
    from .precond import algorithm_a, precond_bounds

    cfg = _config(args)
    out = io.ensure_dir(args.out_dir)
    cmd = args.command

    if cmd == "geometry":
        disc, _ = bench.build(cfg)
        io.write_json(out / "geometry.json", disc.to_dict())
    elif cmd == "assemble":
        modes = tuple(args.modes) if args.modes else (cfg.basis,)
        disc, _, systems = bench.assemble_from_config(cfg, modes)
        for mode, s in systems.items():
            target = out / "system" if len(systems) == 1 else out / f"system_{mode}"
            bench.save_system(s, target)
            io.write_json(target / "diagnostics.json", s.diagnostics())
    elif cmd == "analyze":
        s = _system(args, cfg)
        disc, _ = bench.build(cfg)
        fet = fet_estimates(disc)
        st = structure_check(s)
        cond = condition_report(s, fet, disc.config.H, disc.config.dz)
        io.write_json(out / "analysis.json", {"structure": st.to_dict(), "condition": cond.to_dict()})
    elif cmd == "precondition":
        s = _system(args, cfg)
        recompute = None
        if args.recompute_budget:
            from .assembly import recompute_row

            disc, problem = bench.build(cfg)
            recompute = lambda sys_, i: recompute_row(sys_, disc, problem, i)  # noqa: E731
        pre, s = algorithm_a(s, args.recompute_budget, recompute, cfg.t)
        io.write_matrix_market(out / "P.mtx", pre.P())
        io.write_json(out / "precondition.json",
                      {"summary": pre.summary(), "bounds": precond_bounds(s, pre)})
    elif cmd == "solve":
        s = _system(args, cfg)
        pre, _ = algorithm_a(s)
        rep, corr = bench.preconditioned_solve(s, pre, cfg.t, cfg.r, cfg.start_mode, cfg.tol, cfg.seed)
        io.write_vector(out / "solution.vec", rep.x)
        rep.write_residuals(out / "residuals.csv")
        body = bench._deterministic(rep.to_dict())
        body.update(t=cfg.t, r=cfg.r, start_mode=cfg.start_mode,
                    arnoldi=corr.summary() if corr else None)
        io.write_json(out / "solve.json", body)
    elif cmd == "benchmark":
        rep = bench.run_benchmark(cfg, out, grid=not args.no_grid)
        print(f"N={rep.N} max_error={rep.max_error:.3e} budget={rep.budget.total:.3e} "
              f"rms={rep.rms_error:.3e}")
    elif cmd == "scenario":
        spec = bench.default_scenarios()[args.scenario]
        if args.scenario_samples:
            spec.samples = args.scenario_samples
        if args.seed is not None:
            spec.seed = args.seed
        sw = bench.run_scenario(spec, out, cfg.basis)
        print(f"scenario {sw.scenario}: alpha={sw.alpha:.3f} beta={sw.beta:.3g}")
    elif cmd == "table-grid":
        s = _system(args, cfg)
        rep = bench.run_table_grid(s, cfg.t_list, cfg.r_list, ("coupled", "uncoupled"), cfg.tol,
                                   cfg.seed, out_dir=out)
        print(f"baseline iterations: {rep.baseline}")
    elif cmd == "spectrum":
        s = _system(args, cfg)
        try:
            bench.dump_spectrum(s, args.option, cfg.t, cfg.r, cfg.start_mode, cfg.seed,
                                out / f"spectrum_{args.option}.csv")
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    elif cmd == "fet-validate":
        res = bench.fet_validate(args.fet_samples, seed=cfg.seed)
        io.write_json(out / "fet.json", res)
        print(f"disc ok={res['disc']['ok']} square ok={res['square']['ok']} "
              f"scaling err={res['scaling']['tau_rel_error']:.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
