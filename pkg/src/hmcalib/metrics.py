"""Goodness-of-fit statistics between a simulated series ``g`` and a target ``g0``."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np


class MetricError(ValueError):
    """A statistic is undefined for the given series."""


def _pair(g, g0):
    a = np.asarray(getattr(g, "values", g), dtype=float)
    b = np.asarray(getattr(g0, "values", g0), dtype=float)
    ga, gb = getattr(g, "grid", None), getattr(g0, "grid", None)
    if a.shape != b.shape or a.ndim != 1 or (ga is not None and gb is not None and ga != gb):
        raise MetricError(f"series do not share a grid ({a.shape} vs {b.shape})")
    return a, b


def _sum_sq(e: np.ndarray) -> tuple:
    """``(scale, s)`` with ``sum(e**2) = scale**2 * s``; scaled only if squaring loses range."""
    with np.errstate(over="ignore", under="ignore"):
        s = float(np.sum(e * e))
    scale = float(np.max(np.abs(e)))
    if scale == 0 or (np.isfinite(s) and s >= np.finfo(float).tiny):
        return 1.0, s
    return scale, float(np.sum((e / scale) ** 2))


def delta(g, g0) -> float:
    a, b = _pair(g, g0)
    scale, s = _sum_sq(a - b)
    return scale * math.sqrt(s)


def rmse(g, g0) -> float:
    a, b = _pair(g, g0)
    scale, s = _sum_sq(a - b)
    return scale * math.sqrt(s / len(a))


def r2(g, g0, unit_slope: bool = False) -> float:
    """R^2 of the least-squares regression of ``g0`` on ``g``.

    By default intercept and slope are both fitted (equal to the squared Pearson
    correlation). With ``unit_slope`` the slope is held at 1 and only the
    intercept is fitted; that variant can be negative.
    """
    a, b = _pair(g, g0)
    sst = np.sum((b - b.mean()) ** 2)
    if unit_slope:
        if sst == 0:
            raise MetricError("R^2 undefined for a constant target")
        e = b - a
        return float(1.0 - np.sum((e - e.mean()) ** 2) / sst)
    if np.all(a == a[0]):
        raise MetricError("R^2 undefined for a constant candidate series")
    if sst == 0:
        raise MetricError("R^2 undefined for a constant target")
    ac, bc = a - a.mean(), b - b.mean()
    return float(np.dot(ac, bc) ** 2 / (np.dot(ac, ac) * np.dot(bc, bc)))


def nse(g, g0) -> float:
    a, b = _pair(g, g0)
    sst = np.sum((b - b.mean()) ** 2)
    if sst == 0:
        raise MetricError("NSE undefined for a constant target")
    return float(1.0 - np.sum((a - b) ** 2) / sst)


def ppts_ratios(g, g0):
    """Sorted ``|g0 - g| / |g|`` and the number of points dropped by the zero guard."""
    a, b = _pair(g, g0)
    eps = 1e-12 * np.max(np.abs(a)) if a.size else 0.0
    ok = np.abs(a) > eps
    return np.sort(np.abs(b[ok] - a[ok]) / np.abs(a[ok])), int(np.sum(~ok))


def ppts(g, g0, l: float = 0.0, u: float = 100.0) -> float:
    """Peak percent threshold statistic: mean of the ratios ranked in ``[l, u]`` percent.

    The ``i``-th smallest of ``m`` ratios has rank ``100 (i - 0.5) / m``.
    """
    if not 0 <= l < u <= 100:
        raise ValueError("need 0 <= l < u <= 100")
    ratios, _ = ppts_ratios(g, g0)
    m = len(ratios)
    if m == 0:
        raise MetricError("PPTS undefined: candidate series is zero everywhere")
    rank = 100.0 * (np.arange(1, m + 1) - 0.5) / m
    kept = ratios[(rank >= l) & (rank <= u)]
    if kept.size == 0:
        raise MetricError(f"PPTS({l:g},{u:g}) keeps no values out of {m}")
    return float(kept.mean())


@dataclass
class FitReport:
    delta: float
    rmse: float
    r2: float
    r2_unit_slope: float
    nse: float
    ppts_5_95: float
    ppts_1_100: float
    ppts_excluded: int
    errors: dict = field(default_factory=dict)

    FIELDS = ("delta", "rmse", "r2", "r2_unit_slope", "nse", "ppts_5_95", "ppts_1_100",
              "ppts_excluded")

    def row(self) -> dict:
        d = asdict(self)
        d.pop("errors")
        return d


def report(g, g0) -> FitReport:
    """All statistics at once; an undefined one becomes NaN with its reason in ``errors``."""
    _pair(g, g0)
    values, errors = {}, {}
    calcs = {
        "delta": lambda: delta(g, g0),
        "rmse": lambda: rmse(g, g0),
        "r2": lambda: r2(g, g0),
        "r2_unit_slope": lambda: r2(g, g0, unit_slope=True),
        "nse": lambda: nse(g, g0),
        "ppts_5_95": lambda: ppts(g, g0, 5, 95),
        "ppts_1_100": lambda: ppts(g, g0, 1, 100),
    }
    for name, fn in calcs.items():
        try:
            values[name] = fn()
        except MetricError as exc:
            values[name] = math.nan
            errors[name] = str(exc)
    values["ppts_excluded"] = ppts_ratios(g, g0)[1]
    return FitReport(**values, errors=errors)
