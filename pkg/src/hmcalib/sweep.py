"""Replicated history-matching runs over factor grids of ``(n1, c, T_k, M)``.

Every replicate gets its own seed from :func:`derive_seed`, so cells are
independent and any single run can be reproduced in isolation.
"""

from __future__ import annotations

import csv
import itertools
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import histmatch
from .histmatch import HmConfig
from .simulator import SimulatorError, SimulatorSpec, TimeSeries
from .surrogate import FitError

FACTORS = ("n1", "c", "T_k", "M")
RAW_COLUMNS = ("cell", "n1", "c", "T_k", "M", "dps_mode", "replicate", "seed", "dps",
               "log_delta", "N", "iterations", "status", "exact")


def derive_seed(base_seed: int, cell: int, replicate: int) -> int:
    """Run seed for ``(cell, replicate)``.

    The first 64-bit word of ``SeedSequence(base_seed, spawn_key=(cell, replicate))``.
    """
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(cell), int(replicate)))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class SweepPlan:
    spec: SimulatorSpec
    target: TimeSeries
    n1: Sequence[int] = (5, 10, 20)
    c: Sequence[float] = (1.0, 2.0, 3.0)
    T_k: Sequence[int] = (2, 4, 8)
    M: Sequence[int] = (500, 2000, 5000)
    dps_mode: str = "auto-random"
    replications: int = 25
    base_seed: int = 0
    base: HmConfig = field(default_factory=HmConfig)

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        for name in FACTORS:
            if len(getattr(self, name)) == 0:
                raise ValueError(f"factor {name} has no levels")
        for cell in self.cells():
            self.config(cell, 0)  # HmConfig validates every level combination

    def cells(self) -> list:
        return [dict(zip(FACTORS, combo)) for combo in
                itertools.product(self.n1, self.c, self.T_k, self.M)]

    def config(self, cell: dict, seed: int) -> HmConfig:
        return replace(self.base, n1=int(cell["n1"]), c=float(cell["c"]), T_k=int(cell["T_k"]),
                       M=int(cell["M"]), dps=self.dps_mode, seed=int(seed))


def _run_one(spec, target, cfg):
    """One replicate as a CSV-ready row fragment; failures become a status string."""
    try:
        r = histmatch.run(spec, target, cfg)
    except (SimulatorError, FitError, ValueError, ArithmeticError) as exc:
        return {"dps": "", "log_delta": math.nan, "N": 0, "iterations": 0,
                "status": f"error: {exc}".replace("\n", " "), "exact": False}, None
    row = {"dps": " ".join(map(str, r.dps)), "log_delta": r.log_delta, "N": r.N,
           "iterations": len(r.traces), "status": r.status, "exact": r.delta_opt == 0}
    return row, r


def _run_job(job):
    spec, target, cfg, keep = job
    row, result = _run_one(spec, target, cfg)
    return row, (result if keep else None)


def _execute(jobs_list, jobs: int, on_row: Optional[Callable] = None) -> list:
    """Run jobs, delivering results to ``on_row`` strictly in submission order."""
    out = []
    if jobs <= 1 or len(jobs_list) <= 1:
        for i, job in enumerate(jobs_list):
            out.append(_run_job(job))
            if on_row:
                on_row(i, out[-1][0])
        return out
    with ProcessPoolExecutor(jobs) as pool:
        for i, res in enumerate(pool.map(_run_job, jobs_list, chunksize=1)):
            out.append(res)
            if on_row:
                on_row(i, res[0])
    return out


def fmt(v) -> str:
    """Shortest round-trip text for floats, plain ``str`` otherwise."""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class RawWriter:
    """Append-only CSV writer; every row is flushed as soon as it is written."""

    def __init__(self, path, columns):
        self.columns = columns
        self.fh = open(path, "w", newline="", encoding="utf-8")
        self.w = csv.writer(self.fh, lineterminator="\n")
        self.w.writerow(columns)
        self.fh.flush()

    def write(self, row: dict):
        self.w.writerow([fmt(row[c]) for c in self.columns])
        self.fh.flush()

    def close(self):
        self.fh.close()


@dataclass
class SweepResult:
    plan: SweepPlan
    rows: list  # one dict per replicate, RAW_COLUMNS plus "exact"

    def cell_rows(self, cell_index: int) -> list:
        return [r for r in self.rows if r["cell"] == cell_index]

    def cell_summary(self) -> list:
        out = []
        for i, cell in enumerate(self.plan.cells()):
            rows = self.cell_rows(i)
            ok = [r for r in rows if not r["status"].startswith("error")]
            ld = [r["log_delta"] for r in ok]
            ns = [r["N"] for r in ok]
            out.append({
                **cell, "dps_mode": self.plan.dps_mode, "n_ok": len(ok),
                "n_failed": len(rows) - len(ok), "n_exact": sum(bool(r["exact"]) for r in ok),
                "median_log_delta": statistics.median(ld) if ld else math.nan,
                "mean_log_delta": statistics.fmean(ld) if ld else math.nan,
                "median_N": statistics.median(ns) if ns else math.nan,
                "mean_N": statistics.fmean(ns) if ns else math.nan,
                "median_iterations": statistics.median(r["iterations"] for r in ok) if ok
                else math.nan,
            })
        return out

    def median(self, **levels) -> float:
        """Median log delta over all successful replicates of cells matching ``levels``."""
        cells = {i for i, c in enumerate(self.plan.cells())
                 if all(c[k] == v for k, v in levels.items())}
        ld = [r["log_delta"] for r in self.rows
              if r["cell"] in cells and not r["status"].startswith("error")]
        return statistics.median(ld) if ld else math.nan


def run_sweep(plan: SweepPlan, jobs: int = 1, raw_path=None) -> SweepResult:
    """Run ``plan.replications`` seeded HM runs in every factor cell.

    With ``raw_path`` each replicate row is appended to that CSV as soon as it
    (and every earlier row) is complete, so an interrupted sweep leaves a valid
    prefix.
    """
    meta, job_list = [], []
    for ci, cell in enumerate(plan.cells()):
        for rep in range(plan.replications):
            seed = derive_seed(plan.base_seed, ci, rep)
            meta.append({"cell": ci, **cell, "dps_mode": plan.dps_mode, "replicate": rep,
                         "seed": seed})
            job_list.append((plan.spec, plan.target, plan.config(cell, seed), False))

    rows = []
    writer = RawWriter(raw_path, RAW_COLUMNS) if raw_path else None

    def on_row(i, frag):
        rows.append({**meta[i], **frag})
        if writer:
            writer.write(rows[-1])

    try:
        _execute(job_list, jobs, on_row)
    finally:
        if writer:
            writer.close()
    return SweepResult(plan, rows)


def marginal_medians(result: SweepResult, factor_a: str, factor_b: str) -> list:
    """Median of per-cell medians for each ``(a, b)`` level pair, collapsing the rest."""
    if factor_a == factor_b or factor_a not in FACTORS or factor_b not in FACTORS:
        raise ValueError("need two distinct factors out of " + ", ".join(FACTORS))
    summary = result.cell_summary()
    table = []
    for a in getattr(result.plan, factor_a):
        for b in getattr(result.plan, factor_b):
            meds = [s["median_log_delta"] for s in summary
                    if s[factor_a] == a and s[factor_b] == b
                    and not math.isnan(s["median_log_delta"])]
            table.append({factor_a: a, factor_b: b,
                          "median_log_delta": statistics.median(meds) if meds else math.nan})
    return table


@dataclass
class DpsComparison:
    rows: list  # replicate, seed, mode, dps, N, log_N, log_delta, status
    fixed: list  # HmResult per replicate (None where the run failed)
    variable: list

    def _values(self, mode, key):
        return [r[key] for r in self.rows
                if r["mode"] == mode and not r["status"].startswith("error")]

    def median(self, mode: str, key: str) -> float:
        v = self._values(mode, key)
        return statistics.median(v) if v else math.nan


def dps_comparison(spec: SimulatorSpec, target: TimeSeries, T_k: int = 2,
                   replications: int = 25, seed: int = 0,
                   base: Optional[HmConfig] = None, jobs: int = 1) -> DpsComparison:
    """Paired runs with fixed and randomized DPS sharing each replicate's seed.

    Sharing the seed shares the initial design and test sets; only the DPS
    differs between the two members of a pair.
    """
    base = base or HmConfig()
    job_list, meta = [], []
    for rep in range(replications):
        s = derive_seed(seed, 0, rep)
        for mode, dps in (("fixed", "auto-fixed"), ("variable", "auto-random")):
            job_list.append((spec, target, replace(base, T_k=T_k, dps=dps, seed=s), True))
            meta.append({"replicate": rep, "seed": s, "mode": mode})
    done = _execute(job_list, jobs)
    rows, fixed, variable = [], [], []
    for m, (frag, res) in zip(meta, done):
        rows.append({**m, "dps": frag["dps"], "N": frag["N"],
                     "log_N": math.log(frag["N"]) if frag["N"] else math.nan,
                     "log_delta": frag["log_delta"], "status": frag["status"]})
        (fixed if m["mode"] == "fixed" else variable).append(res)
    return DpsComparison(rows, fixed, variable)

