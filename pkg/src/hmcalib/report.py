"""CSV and text writers for calibration, sweep and demo bundles.

Numbers are written with ``repr`` (shortest text that parses back to the same
double); files are UTF-8 with LF line endings.
"""

from __future__ import annotations

import csv
from pathlib import Path

from . import metrics
from .histmatch import HmResult
from .simulator import CachedSimulator, SimulatorSpec, TimeSeries
from .sweep import FACTORS, DpsComparison, SweepResult, fmt, marginal_medians


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_runs(path, result: HmResult, names) -> Path:
    rows = ([int(b), *x, dl] for b, x, dl in zip(result.batch, result.X, result.deltas))
    return write_csv(path, ["iteration", *names, "delta"], rows)


def write_trace(path, result: HmResult) -> Path:
    rows = ([t.iteration, t.n_train, t.n_plausible, t.n_new, t.n_total, t.best_delta]
            for t in result.traces)
    return write_csv(path, ["iteration", "n_train", "n_plausible", "n_new", "N", "best_delta"],
                     rows)


def write_best(path, result: HmResult, spec: SimulatorSpec, target: TimeSeries) -> Path:
    """Best point and its series as ``record,key,v1,v2`` rows.

    ``x`` rows: key = input name, v1 = scaled, v2 = native units.
    ``delta`` row: v1 = discrepancy, v2 = its natural log.
    ``series`` rows: key = time, v1 = best series, v2 = target.
    """
    native = spec.bounds.descale(result.x_opt) if spec.bounds is not None else result.x_opt
    rows = [["x", n, s, v] for n, s, v in zip(spec.names, result.x_opt, native)]
    rows.append(["delta", "", result.delta_opt, result.log_delta])
    rows += [["series", t, b, g] for t, b, g in
             zip(spec.grid.values, result.best_series, target.values)]
    return write_csv(path, ["record", "key", "v1", "v2"], rows)


def write_metrics(path, reports: dict) -> Path:
    fields = metrics.FitReport.FIELDS
    rows = ([name, *(getattr(r, f) for f in fields)] for name, r in reports.items())
    return write_csv(path, ["candidate", *fields], rows)


def write_surrogates(path, result: HmResult) -> Path:
    lines = []
    for t in result.traces:
        for s in t.surrogates:
            lines.append(f"# iteration {t.iteration}, DPS index {s.dps_index}")
            lines += [f"n         {s.n}", f"mu        {s.mu!r}", f"sigma2    {s.sigma2!r}",
                      "theta     " + " ".join(repr(v) for v in s.theta),
                      f"nugget    {s.nugget!r}" + (" (escalated)" if s.nugget_escalated else ""),
                      f"deviance  {s.deviance!r}"]
            if s.degenerate:
                lines.append("degenerate (constant response)")
            lines.append("")
    path = Path(path)
    path.write_text("\n".join(lines), encoding="utf-8")
    return path


def write_bundle(out_dir, result: HmResult, spec: SimulatorSpec, target: TimeSeries,
                 echo_text: str) -> dict:
    """Calibration bundle: runs, trace, best point, metrics, surrogate dump, config echo."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    best = TimeSeries(spec.grid, result.best_series)
    files = {
        "runs": write_runs(out / "runs.csv", result, spec.names),
        "trace": write_trace(out / "trace.csv", result),
        "best": write_best(out / "best.csv", result, spec, target),
        "metrics": write_metrics(out / "metrics.csv", {"x_opt": metrics.report(best, target)}),
        "surrogates": write_surrogates(out / "surrogates.txt", result),
    }
    (out / "config.echo").write_text(echo_text, encoding="utf-8")
    files["config"] = out / "config.echo"
    return files


def write_screens(out_dir, result: HmResult, names) -> list:
    """One ``screen_iter<i>.csv`` per recorded screen: coordinates, I_j, I_max, plausible."""
    paths = []
    for sc in result.screens:
        k = sc.impl.shape[1]
        header = [*names, *(f"I{j + 1}" for j in range(k)), "Imax", "plausible"]
        imax = sc.impl.max(axis=1)
        rows = ([*x, *i, m, int(p)] for x, i, m, p in zip(sc.points, sc.impl, imax,
                                                          sc.plausible))
        paths.append(write_csv(Path(out_dir) / f"screen_iter{sc.iteration}.csv", header, rows))
    return paths


def write_sweep(out_dir, result: SweepResult) -> list:
    out = Path(out_dir)
    summary = result.cell_summary()
    cols = [*FACTORS, "dps_mode", "n_ok", "n_failed", "n_exact", "median_log_delta",
            "mean_log_delta", "median_N", "mean_N", "median_iterations"]
    paths = [write_csv(out / "sweep_medians.csv", cols, ([s[c] for c in cols] for s in summary))]
    for i, a in enumerate(FACTORS):
        for b in FACTORS[i + 1:]:
            table = marginal_medians(result, a, b)
            paths.append(write_csv(out / f"fig5_{a}_{b}.csv", [a, b, "median_log_delta"],
                                   ([r[a], r[b], r["median_log_delta"]] for r in table)))
    return paths


def write_dps_comparison(path, comp: DpsComparison) -> Path:
    cols = ["replicate", "seed", "mode", "dps", "N", "log_N", "log_delta", "status"]
    return write_csv(path, cols, ([r[c] for c in cols] for r in comp.rows))


def sample_curves(spec: SimulatorSpec, target: TimeSeries, X) -> list:
    """Header and rows of target plus simulator curves at ``X`` (one column each)."""
    Y = CachedSimulator(spec).evaluate_batch(X)
    header = ["t", "target", *(f"sample_{k + 1}" for k in range(len(X)))]
    rows = [[t, g, *Y[:, i]] for i, (t, g) in enumerate(zip(spec.grid.values, target.values))]
    return [header, rows]

