"""Command-line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 simulator failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import design, histmatch, metrics, report, sweep
from .config import ConfigError, RunConfig, echo, load_config, read_series_csv
from .histmatch import HmConfig
from .simulator import SimulatorError, SimulatorSpec, TimeGrid, TimeSeries, target_from_point
from .surrogate import FitError

EXIT_CONFIG, EXIT_SIMULATOR, EXIT_IO = 2, 3, 4

log = logging.getLogger("hmcalib")


def _out_dir(args, cfg_dir: str) -> Path:
    out = Path(args.out or cfg_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_calibrate(args) -> int:
    cfg = load_config(args.config, seed=args.seed)
    out = _out_dir(args, cfg.out_dir)
    target = cfg.target
    result = histmatch.run(cfg.spec, target, cfg.hm, jobs=args.jobs)
    report.write_bundle(out, result, cfg.spec, target, echo(cfg))
    print(f"x_opt = {' '.join(f'{v:.6g}' for v in result.x_opt)}")
    print(f"log delta = {result.log_delta:.4f}  N = {result.N}  stop: {result.status}")
    print(f"bundle written to {out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, seed=args.seed)
    out = _out_dir(args, cfg.out_dir)
    w = cfg.sweep
    reps = w.quick_replications if args.quick else w.replications
    base = replace(cfg.hm, dps="auto-fixed")
    plan = sweep.SweepPlan(cfg.spec, cfg.target, n1=w.n1, c=w.c, T_k=w.T_k, M=w.M,
                           dps_mode=w.dps_mode, replications=reps, base_seed=cfg.hm.seed,
                           base=base)
    (out / "config.echo").write_text(echo(cfg), encoding="utf-8")
    n_cells = len(plan.cells())
    print(f"sweep: {n_cells} cells x {reps} replicates")
    result = sweep.run_sweep(plan, jobs=args.jobs, raw_path=out / "sweep_raw.csv")
    report.write_sweep(out, result)
    if w.dps_comparison:
        dreps = reps if args.quick or w.dps_replications is None else w.dps_replications
        comp = sweep.dps_comparison(cfg.spec, cfg.target, T_k=w.dps_T_k, replications=dreps,
                                    seed=cfg.hm.seed, base=base, jobs=args.jobs)
        report.write_dps_comparison(out / "fig6_dps.csv", comp)
        print(f"DPS comparison: median N fixed {comp.median('fixed', 'N')}, "
              f"variable {comp.median('variable', 'N')}")
    failed = sum(r["status"].startswith("error") for r in result.rows)
    print(f"{len(result.rows)} runs ({failed} failed); results in {out}")
    return 0


def cmd_metrics(args) -> int:
    cand = read_series_csv(args.candidate)
    target = read_series_csv(args.target)
    if len(cand) != len(target):
        raise ConfigError(f"length mismatch: {len(cand)} candidate values, "
                          f"{len(target)} target values")
    if len(cand) < 2:
        raise ConfigError("series need at least 2 values")
    grid = TimeGrid(tuple(range(1, len(cand) + 1)))
    rep = metrics.report(TimeSeries(grid, cand), TimeSeries(grid, target))
    for f in metrics.FitReport.FIELDS:
        print(f"{f:15s} {getattr(rep, f)}")
    for f, msg in rep.errors.items():
        print(f"warning: {f}: {msg}", file=sys.stderr)
    out = Path(args.out) if args.out else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    report.write_metrics(out / "metrics.csv", {Path(args.candidate).name: rep})
    return 0


def cmd_demo(args) -> int:
    """Illustrative example: the two-input test function with target (0.5, 0.5)."""
    seed = 0 if args.seed is None else args.seed
    spec = SimulatorSpec()
    target = target_from_point([0.5, 0.5], spec)
    cfg = RunConfig(spec, HmConfig(n1=10, c=3.0, T_k=2, dps=(33, 67), M=5000, seed=seed),
                    out_dir="demo_out", target_point=(0.5, 0.5), _target=target)
    out = _out_dir(args, cfg.out_dir)
    result = histmatch.run(spec, target, cfg.hm, jobs=args.jobs, record_screens=True)
    report.write_bundle(out, result, spec, target, echo(cfg))

    # a few random model outputs next to the target
    X = design.latin_hypercube(5, 2, histmatch.stream(seed, 99))
    header, rows = report.sample_curves(spec, target, X)
    report.write_csv(out / "fig1_curves.csv", header, rows)
    report.write_screens(out, result, spec.names)
    report.write_csv(out / "fig4_best.csv", ["t", "target", "best"],
                     zip(spec.grid.values, target.values, result.best_series))

    print(f"x_opt = ({result.x_opt[0]:.4f}, {result.x_opt[1]:.4f})")
    print(f"log delta = {result.log_delta:.4f}")
    print(f"N = {result.N}  ({' -> '.join(str(t.n_total) for t in result.traces)})")
    print(f"figure data written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hmcalib",
                                description="History-matching calibration of time-series simulators")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, metavar="PATH")
        sp.add_argument("--seed", type=int, metavar="U64")
        sp.add_argument("--jobs", type=int, default=1, metavar="N")
        sp.add_argument("--out", metavar="DIR")

    c = sub.add_parser("calibrate", help="run one calibration")
    common(c)
    c.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("sweep", help="sensitivity study over algorithmic parameters")
    common(s)
    s.add_argument("--quick", action="store_true", help="few replicates (smoke test)")
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("metrics", help="goodness-of-fit of one series against another")
    m.add_argument("candidate")
    m.add_argument("target")
    m.add_argument("--out", metavar="DIR")
    m.set_defaults(func=cmd_metrics)

    d = sub.add_parser("demo", help="illustrative two-input example")
    common(d, config=False)
    d.set_defaults(func=cmd_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulatorError, FitError) as exc:
        print(f"simulator error: {exc}", file=sys.stderr)
        if getattr(exc, "x", None) is not None:
            print(f"  at x = {exc.x}", file=sys.stderr)
        return EXIT_SIMULATOR
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
