"""Modified history matching for time-series simulators.

The series is reduced to ``T_k`` scalar problems at the discretization-point-set
(DPS). Each iteration fits one GP per DPS index on every point evaluated so far,
screens a fresh space-filling test set by maximum implausibility, and evaluates
the simulator on the survivors. The loop stops when nothing survives (or a cap
is hit) and returns the evaluated point whose full series is closest to the
target in Euclidean norm.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import design, surrogate
from .simulator import CachedSimulator, SimulatorError, SimulatorSpec, TimeSeries
from .surrogate import FitOptions, Prediction, SurrogateModel

log = logging.getLogger(__name__)

S_MIN = 1e-12

STOP_EMPTY = "empty-screen"
STOP_ITERATIONS = "max-iterations"
STOP_BUDGET = "budget"

# child-stream tags for SeedSequence spawn keys
_STREAM_DESIGN, _STREAM_DPS, _STREAM_TEST, _STREAM_FIT, _STREAM_SUBSET = range(5)


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for one purpose, derived from the run seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass(frozen=True)
class HmConfig:
    n1: int = 10
    c: float = 3.0
    T_k: int = 2
    dps: Union[str, tuple] = "auto-fixed"  # "auto-fixed", "auto-random" or explicit indices
    M: int = 5000
    max_iterations: int = 20
    budget: int = 1000
    subsample_size: Optional[int] = None
    training_set: str = "cumulative"  # or "last-two": D_i and D_{i-1} only
    seed: int = 0
    restarts: Optional[int] = None
    fit: FitOptions = field(default_factory=FitOptions)

    def __post_init__(self):
        if not isinstance(self.dps, str):
            object.__setattr__(self, "dps", tuple(int(i) for i in self.dps))
            object.__setattr__(self, "T_k", len(self.dps))
        if self.n1 < 2:
            raise ValueError("n1 must be at least 2")
        if not self.c > 0:
            raise ValueError("c must be positive")
        if self.T_k < 1:
            raise ValueError("T_k must be at least 1")
        if self.M < 1:
            raise ValueError("M must be at least 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.budget < self.n1:
            raise ValueError("budget must be at least n1")
        if self.subsample_size is not None and self.subsample_size < 1:
            raise ValueError("subsample_size must be positive")
        if isinstance(self.dps, str) and self.dps not in ("auto-fixed", "auto-random"):
            raise ValueError(f"unknown dps mode {self.dps!r}")
        if self.training_set not in ("cumulative", "last-two"):
            raise ValueError(f"unknown training_set {self.training_set!r}")


@dataclass(frozen=True)
class SurrogateDiag:
    dps_index: int
    n: int
    mu: float
    sigma2: float
    theta: tuple
    nugget: float
    deviance: float
    degenerate: bool
    nugget_escalated: bool

    @classmethod
    def of(cls, idx: int, m: SurrogateModel) -> "SurrogateDiag":
        return cls(idx, m.n, m.mu, m.sigma2, tuple(map(float, m.params.theta)), m.nugget,
                   m.deviance, m.degenerate, m.nugget_escalated)


@dataclass
class IterationTrace:
    iteration: int
    n_train: int
    surrogates: list
    n_plausible: int
    n_new: int
    n_total: int
    best_delta: float


@dataclass
class Screen:
    """Test set of one iteration with its per-DPS implausibilities."""

    iteration: int
    points: np.ndarray
    impl: np.ndarray  # (M, T_k)
    plausible: np.ndarray  # bool (M,)


@dataclass
class HmResult:
    x_opt: np.ndarray
    delta_opt: float
    X: np.ndarray  # every evaluated point, in evaluation order
    series: np.ndarray  # (N, L) simulator outputs
    deltas: np.ndarray
    batch: np.ndarray  # iteration in which each point was evaluated (1 = initial design)
    traces: list
    dps: tuple
    status: str
    config: HmConfig
    screens: list = field(default_factory=list)

    @property
    def N(self) -> int:
        return len(self.X)

    @property
    def log_delta(self) -> float:
        return math.log(max(self.delta_opt, 1e-300))

    @property
    def budget_exhausted(self) -> bool:
        return self.status == STOP_BUDGET

    @property
    def best_series(self) -> np.ndarray:
        return self.series[int(np.argmin(self.deltas))]


class HmRunError(SimulatorError):
    """Simulator failure mid-run; ``partial`` is the result up to the failure."""

    def __init__(self, cause: SimulatorError, partial: Optional[HmResult]):
        super().__init__(str(cause), cause.x)
        self.partial = partial


def implausibility(pred: Prediction, target: float) -> float:
    diff = abs(pred.mean - target)
    if pred.sd == 0:
        return 0.0 if diff == 0 else math.inf
    return diff / max(pred.sd, S_MIN)


def implausibility_array(mean, sd, target: float) -> np.ndarray:
    """Vectorized :func:`implausibility`; identical arithmetic per element."""
    diff = np.abs(np.asarray(mean, dtype=float) - target)
    sd = np.asarray(sd, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = diff / np.maximum(sd, S_MIN)
    zero = sd == 0
    out[zero] = np.where(diff[zero] == 0, 0.0, np.inf)
    return out


def i_max(values: Sequence[float]) -> float:
    if len(values) == 0:
        raise ValueError("i_max of an empty list")
    return max(values)


def implausibility_matrix(models, targets, X) -> np.ndarray:
    """``(len(X), T_k)`` implausibilities of every point against every model."""
    pts = X.points if isinstance(X, design.DesignSet) else np.atleast_2d(X)
    cols = []
    for m, t in zip(models, targets):
        mean, sd = surrogate.predict_batch(m, pts)
        cols.append(implausibility_array(mean, sd, t))
    return np.column_stack(cols) if cols else np.zeros((len(pts), 0))


def screen(models, targets, chi, c: float) -> design.DesignSet:
    """Points of ``chi`` with ``I_max <= c``, in their original order."""
    pts = chi.points if isinstance(chi, design.DesignSet) else np.atleast_2d(chi)
    keep = implausibility_matrix(models, targets, pts).max(axis=1) <= c
    return design.DesignSet(pts[keep], "plausible-subset")


def resolve_dps(cfg: HmConfig, L: int, rng: Optional[np.random.Generator] = None) -> tuple:
    """1-based DPS indices for a series of length ``L``."""
    if isinstance(cfg.dps, tuple):
        idx = cfg.dps
        if len(set(idx)) != len(idx):
            raise ValueError(f"duplicate DPS indices in {idx}")
        bad = [i for i in idx if not 1 <= i <= L]
        if bad:
            raise ValueError(f"DPS indices {bad} outside 1..{L}")
        return idx
    if not 1 <= cfg.T_k <= L:
        raise ValueError(f"T_k = {cfg.T_k} outside 1..{L}")
    if cfg.dps == "auto-fixed":
        return tuple(design.fixed_dps(cfg.T_k, L))
    if rng is None:
        rng = stream(cfg.seed, _STREAM_DPS)
    return tuple(design.variable_dps(cfg.T_k, L, rng))


def fit_surrogates(X, Y, dps, cfg: HmConfig, iteration: int, jobs: int = 1) -> list:
    """One GP per DPS index; column ``j - 1`` of ``Y`` holds the outputs at index ``j``."""

    def one(k):
        rng = stream(cfg.seed, _STREAM_FIT, iteration, k)
        return surrogate.fit(X, Y[:, dps[k] - 1], cfg.fit, rng)

    if jobs > 1 and len(dps) > 1:
        with ThreadPoolExecutor(min(jobs, len(dps))) as pool:
            return list(pool.map(one, range(len(dps))))
    return [one(k) for k in range(len(dps))]


def run(sim: Union[SimulatorSpec, CachedSimulator], g0: TimeSeries, cfg: HmConfig,
        jobs: int = 1, record_screens: bool = False) -> HmResult:
    """Run modified history matching against the target ``g0``.

    Raises :class:`HmRunError` (carrying the partial result) if the simulator fails.
    """
    runner = sim if isinstance(sim, CachedSimulator) else CachedSimulator(sim, jobs)
    spec = runner.spec
    if g0.grid != spec.grid:
        raise ValueError("target and simulator use different time grids")
    target = np.asarray(g0.values)
    L = len(target)
    dps = resolve_dps(cfg, L)
    targets = [float(target[j - 1]) for j in dps]

    X = np.empty((0, spec.d))
    Y = np.empty((0, L))
    batch = np.empty(0, dtype=int)
    traces: list = []
    screens: list = []

    def result(status):
        deltas = np.linalg.norm(Y - target, axis=1)
        best = int(np.argmin(deltas))
        return HmResult(X[best].copy(), float(deltas[best]), X, Y, deltas, batch, traces,
                        dps, status, cfg, screens)

    def absorb(points, it):
        nonlocal X, Y, batch
        try:
            out = runner.evaluate_batch(points)
        except SimulatorError as exc:
            raise HmRunError(exc, result("simulator-error") if len(X) else None) from exc
        X = np.vstack([X, points])
        Y = np.vstack([Y, out])
        batch = np.concatenate([batch, np.full(len(points), it)])

    d1 = design.lhd_maximin(cfg.n1, spec.d, stream(cfg.seed, _STREAM_DESIGN), cfg.restarts)
    absorb(d1.points, 1)

    it = 1
    while True:
        if len(X) >= cfg.budget:
            status = STOP_BUDGET
            break
        if it > cfg.max_iterations:
            status = STOP_ITERATIONS
            break
        if cfg.training_set == "last-two":
            train = batch >= it - 1
        else:
            train = np.ones(len(X), dtype=bool)
        models = fit_surrogates(X[train], Y[train], dps, cfg, it, jobs)
        chi = design.random_test_set(cfg.M, spec.d, stream(cfg.seed, _STREAM_TEST, it))
        impl = implausibility_matrix(models, targets, chi.points)
        keep = impl.max(axis=1) <= cfg.c
        plausible = chi.points[keep]
        if record_screens:
            screens.append(Screen(it, chi.points, impl, keep))

        seen = {tuple(row) for row in X.tolist()}
        new = np.array([p for p in plausible.tolist() if tuple(p) not in seen]).reshape(-1, spec.d)
        if cfg.subsample_size is not None and len(new) > cfg.subsample_size:
            new = design.maximin_subset(new, cfg.subsample_size).points
        room = cfg.budget - len(X)
        if len(new) > room:
            new = design.maximin_subset(new, room).points

        best_so_far = float(np.min(np.linalg.norm(Y - target, axis=1)))
        diags = [SurrogateDiag.of(j, m) for j, m in zip(dps, models)]
        if len(plausible) == 0:
            traces.append(IterationTrace(it, int(train.sum()), diags, 0, 0, len(X), best_so_far))
            status = STOP_EMPTY
            break
        absorb(new, it + 1)
        best_so_far = float(np.min(np.linalg.norm(Y - target, axis=1)))
        traces.append(IterationTrace(it, int(train.sum()), diags, len(plausible), len(new),
                                     len(X), best_so_far))
        log.debug("iteration %d: %d plausible, N = %d, best delta %.4g",
                  it, len(plausible), len(X), best_so_far)
        it += 1
    return result(status)


def with_seed(cfg: HmConfig, seed: int) -> HmConfig:
    return replace(cfg, seed=int(seed))
