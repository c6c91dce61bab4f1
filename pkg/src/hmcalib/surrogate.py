"""Scalar-output Gaussian-process emulator with a constant mean.

Correlation is the power-exponential product
``R(x, x') = prod_k exp(-10**theta_k * |x_k - x'_k|**p)`` with ``theta`` on a
log10 scale. ``mu`` and ``sigma^2`` are profiled out of the likelihood, so only
``theta`` is searched, by multi-start Powell (derivative free) from an LHD of
starting points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .design import latin_hypercube

DEFAULT_POWER = 1.95
THETA_BOUNDS = (-2.0, 3.0)
NUGGET = 1e-8
NUGGET_CAP = 1e-2


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class GpHyperParams:
    theta: tuple
    power: float = DEFAULT_POWER


class Prediction(NamedTuple):
    mean: float
    sd: float


@dataclass(frozen=True)
class FitOptions:
    power: float = DEFAULT_POWER
    theta_bounds: tuple = THETA_BOUNDS
    nugget: float = NUGGET
    nugget_cap: float = NUGGET_CAP
    n_starts: Optional[int] = None  # default 5 * d
    tol: float = 1e-6


@dataclass(frozen=True, eq=False)
class SurrogateModel:
    X: np.ndarray
    y: np.ndarray
    mu: float
    sigma2: float
    params: GpHyperParams
    nugget: float
    chol: Optional[np.ndarray]  # lower Cholesky factor of R + nugget * I
    alpha: Optional[np.ndarray]  # R^{-1} (y - mu 1)
    deviance: float
    degenerate: bool = False
    nugget_escalated: bool = False
    n_evals: int = field(default=0, compare=False)

    @property
    def n(self) -> int:
        return len(self.y)

    def correlation_matrix(self) -> np.ndarray:
        """``R + nugget * I`` rebuilt from the stored factor."""
        return self.chol @ self.chol.T

    def report(self) -> str:
        theta = " ".join(f"{t:.6g}" for t in self.params.theta)
        lines = [
            f"n         {self.n}",
            f"mu        {self.mu!r}",
            f"sigma2    {self.sigma2!r}",
            f"theta     {theta}",
            f"power     {self.params.power}",
            f"nugget    {self.nugget:g}{' (escalated)' if self.nugget_escalated else ''}",
            f"deviance  {self.deviance!r}",
        ]
        if self.degenerate:
            lines.append("degenerate (constant response)")
        return "\n".join(lines)


def corr(params: GpHyperParams, xa, xb) -> float:
    xa, xb = np.asarray(xa, dtype=float), np.asarray(xb, dtype=float)
    if xa.shape != xb.shape or xa.shape != (len(params.theta),):
        raise ValueError("dimension mismatch")
    w = 10.0 ** np.asarray(params.theta)
    return float(np.exp(-np.sum(w * np.abs(xa - xb) ** params.power)))


def corr_matrix(XA, XB, theta, power: float) -> np.ndarray:
    w = 10.0 ** np.asarray(theta, dtype=float)
    D = np.abs(XA[:, None, :] - XB[None, :, :]) ** power
    return np.exp(-(D @ w))


def _factor(R: np.ndarray, nugget: float, cap: float):
    """Cholesky of ``R + nugget I``, multiplying the nugget by 10 on failure.

    A zero nugget steps straight to the default one.
    """
    eye = np.eye(len(R))
    while True:
        try:
            return cholesky(R + nugget * eye, lower=True, check_finite=False), nugget
        except LinAlgError:
            nugget = nugget * 10 if nugget > 0 else NUGGET
            if nugget > cap * (1 + 1e-9):
                return None, nugget


def _profile(L: np.ndarray, y: np.ndarray):
    """Profiled ``(mu, sigma2, deviance, alpha)`` given the Cholesky factor."""
    n = len(y)
    ones = np.ones(n)
    Ri1 = cho_solve((L, True), ones, check_finite=False)
    Riy = cho_solve((L, True), y, check_finite=False)
    mu = float(ones @ Riy / (ones @ Ri1))
    alpha = Riy - mu * Ri1
    resid = y - mu
    sigma2 = float(resid @ alpha / n)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    dev = n * np.log(sigma2) + logdet if sigma2 > 0 else -np.inf
    return mu, sigma2, float(dev), alpha


class _Deviance:
    """Profile deviance ``n log sigma2(theta) + log det R(theta)`` on fixed data."""

    def __init__(self, X, y, opts: FitOptions):
        self.y = y
        self.opts = opts
        self.D = np.abs(X[:, None, :] - X[None, :, :]) ** opts.power
        self.n_evals = 0

    def factor(self, theta):
        R = np.exp(-(self.D @ (10.0 ** np.asarray(theta))))
        return _factor(R, self.opts.nugget, self.opts.nugget_cap)

    def __call__(self, theta) -> float:
        self.n_evals += 1
        L, _ = self.factor(theta)
        if L is None:
            return np.inf
        dev = _profile(L, self.y)[2]
        # an exactly-fitting theta (sigma2 -> 0) is a numerical artefact, not an optimum
        return dev if np.isfinite(dev) else np.inf


def _dedupe(X, y):
    _, idx = np.unique(X, axis=0, return_index=True)
    idx = np.sort(idx)
    return X[idx], y[idx]


def fit(X, y, opts: Optional[FitOptions] = None, rng: Optional[np.random.Generator] = None,
        theta: Optional[tuple] = None) -> SurrogateModel:
    """Fit the GP by profile maximum likelihood.

    Exact duplicate rows are dropped. Passing ``theta`` skips the search and fits
    at those (log10) correlation parameters.
    """
    opts = opts or FitOptions()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(X) != len(y):
        raise ValueError("X and y lengths differ")
    if not np.all(np.isfinite(y)):
        raise ValueError("y must be finite")
    X, y = _dedupe(X, y)
    n, d = X.shape
    if n < 2:
        raise ValueError("at least 2 distinct training points are needed")

    if np.all(y == y[0]):
        return SurrogateModel(X, y, float(y[0]), 0.0, GpHyperParams((0.0,) * d, opts.power),
                              opts.nugget, None, None, -np.inf, degenerate=True)

    objective = _Deviance(X, y, opts)
    lo, hi = opts.theta_bounds
    if theta is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        n_starts = opts.n_starts or 5 * d
        starts = lo + (hi - lo) * latin_hypercube(n_starts, d, rng)
        best_theta, best_dev = None, np.inf
        for s in starts:
            # Brent steps do arithmetic on infeasible (inf) deviances
            with np.errstate(invalid="ignore", over="ignore"):
                res = minimize(objective, s, method="Powell", bounds=[(lo, hi)] * d,
                               options={"xtol": 1e-4, "ftol": 1e-10})
            f = float(res.fun)
            # never worse than the start itself
            start_dev = objective(s)
            cand, fc = (res.x, f) if f <= start_dev else (s, start_dev)
            if best_theta is None or fc < best_dev:
                best_theta, best_dev = np.clip(cand, lo, hi), fc
        theta = best_theta
    theta = np.asarray(theta, dtype=float)

    L, nugget = objective.factor(theta)
    if L is None:
        raise FitError(f"correlation matrix singular even with nugget {opts.nugget_cap:g}")
    mu, sigma2, dev, alpha = _profile(L, y)
    return SurrogateModel(X, y, mu, max(sigma2, 0.0), GpHyperParams(tuple(theta), opts.power),
                          nugget, L, alpha, dev, nugget_escalated=nugget > opts.nugget,
                          n_evals=objective.n_evals)


def predict_batch(m: SurrogateModel, xs) -> tuple:
    """Vectorized predictions: returns ``(mean, sd)`` arrays aligned with ``xs``."""
    xs = np.atleast_2d(np.asarray(xs.points if hasattr(xs, "points") else xs, dtype=float))
    if m.degenerate:
        return np.full(len(xs), m.mu), np.zeros(len(xs))
    r = corr_matrix(xs, m.X, m.params.theta, m.params.power)
    mean = m.mu + r @ m.alpha
    v = solve_triangular(m.chol, r.T, lower=True, check_finite=False)
    s2 = m.sigma2 * (1.0 - np.einsum("ij,ij->j", v, v))
    return mean, np.sqrt(np.maximum(s2, 0.0))


def predict(m: SurrogateModel, x) -> Prediction:
    mean, sd = predict_batch(m, np.asarray(x, dtype=float)[None, :])
    return Prediction(float(mean[0]), float(sd[0]))


def deviance(X, y, theta, opts: Optional[FitOptions] = None) -> float:
    """Profile deviance at a given ``theta`` (exposed for diagnostics and tests)."""
    opts = opts or FitOptions()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return _Deviance(X, np.asarray(y, dtype=float), opts)(np.asarray(theta, dtype=float))
