"""Simulators: the built-in time-series test function and an external-process adapter.

A simulator maps a point of the unit hypercube ``[0, 1]^d`` to a time series on a
fixed :class:`TimeGrid`. External simulators receive inputs in native units; the
adapter descales using :class:`InputBounds`.
"""

from __future__ import annotations

import math
import os
import subprocess
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

BUILTIN = "builtin-testfunc"
EXTERNAL = "external-exec"


class SimulatorError(RuntimeError):
    """A simulator evaluation failed. ``x`` holds the offending scaled input."""

    def __init__(self, message: str, x: Optional[Sequence[float]] = None):
        super().__init__(message)
        self.x = None if x is None else tuple(float(v) for v in x)


@dataclass(frozen=True)
class TimeGrid:
    values: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("a time grid needs at least 2 time stamps")
        if not np.all(np.isfinite(v)):
            raise ValueError("time stamps must be finite")
        if not np.all(np.diff(v) > 0):
            raise ValueError("time stamps must be strictly increasing")
        object.__setattr__(self, "values", tuple(float(t) for t in v))

    def __len__(self):
        return len(self.values)

    def asarray(self) -> np.ndarray:
        return np.array(self.values)

    @classmethod
    def linspace(cls, start: float, stop: float, length: int) -> "TimeGrid":
        return cls(tuple(np.linspace(start, stop, length)))


@dataclass(frozen=True)
class TimeSeries:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.grid),):
            raise ValueError(
                f"series has {v.size} values but the grid has {len(self.grid)}")
        if not np.all(np.isfinite(v)):
            raise ValueError("series values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.grid)


@dataclass(frozen=True)
class InputBounds:
    lower: tuple
    upper: tuple
    names: tuple = ()

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or not lo:
            raise ValueError("lower and upper bounds must have the same nonzero length")
        if any(not a < b for a, b in zip(lo, hi)):
            raise ValueError("every lower bound must be strictly below its upper bound")
        names = tuple(self.names) or tuple(f"x{k + 1}" for k in range(len(lo)))
        if len(names) != len(lo):
            raise ValueError("one name per input is required")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "names", names)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def descale(self, x) -> np.ndarray:
        """Map unit-cube coordinates to native units."""
        lo, hi = np.array(self.lower), np.array(self.upper)
        return lo + np.asarray(x, dtype=float) * (hi - lo)

    def scale(self, z) -> np.ndarray:
        lo, hi = np.array(self.lower), np.array(self.upper)
        return (np.asarray(z, dtype=float) - lo) / (hi - lo)

    @classmethod
    def unit(cls, d: int) -> "InputBounds":
        return cls((0.0,) * d, (1.0,) * d)


def default_grid() -> TimeGrid:
    """101 equidistant time stamps on [0.5, 2.5] (spacing 0.02)."""
    return TimeGrid.linspace(0.5, 2.5, 101)


@dataclass(frozen=True)
class SimulatorSpec:
    """Everything needed to evaluate a simulator.

    ``exec_path`` and ``args`` form the command line of an external simulator;
    ``timeout`` is in seconds (``None`` waits forever).
    """

    kind: str = BUILTIN
    d: int = 2
    grid: TimeGrid = field(default_factory=default_grid)
    bounds: Optional[InputBounds] = None
    exec_path: Optional[str] = None
    args: tuple = ()
    parallelism: int = 1
    timeout: Optional[float] = None

    def __post_init__(self):
        if self.kind == BUILTIN:
            if self.d != 2:
                raise ValueError("the built-in test function has d = 2")
            if self.grid.asarray()[0] <= 0:
                raise ValueError("the built-in test function needs strictly positive times")
        elif self.kind == EXTERNAL:
            if not self.exec_path:
                raise ValueError("an external simulator needs exec_path")
            if self.bounds is None:
                object.__setattr__(self, "bounds", InputBounds.unit(self.d))
            if self.bounds.dim != self.d:
                raise ValueError("bounds dimension does not match d")
            if self.parallelism < 1:
                raise ValueError("parallelism must be at least 1")
        else:
            raise ValueError(f"unknown simulator kind {self.kind!r}")

    @property
    def names(self) -> tuple:
        if self.bounds is not None:
            return self.bounds.names
        return tuple(f"x{k + 1}" for k in range(self.d))


def _check_point(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (d,):
        raise ValueError(f"expected a point of dimension {d}, got shape {x.shape}")
    if np.any(x < 0) or np.any(x > 1) or not np.all(np.isfinite(x)):
        raise ValueError("design point coordinates must lie in [0, 1]")
    return x


def testfunc_values(x, t) -> np.ndarray:
    x1, x2 = x
    return np.sin(10 * np.pi * t) / ((2 * x1 + 1) * t) + np.abs(t - 1) ** (4 * x2 + 2)


def eval_testfunc(x, grid: TimeGrid) -> TimeSeries:
    """Two-input test simulator ``sin(10 pi t)/((2 x1 + 1) t) + |t - 1|^(4 x2 + 2)``."""
    x = _check_point(x, 2)
    t = grid.asarray()
    if np.any(t == 0):
        raise ValueError("time stamp 0 is not allowed (division by t)")
    return TimeSeries(grid, testfunc_values(x, t))


def _format_inputs(z) -> str:
    return ",".join(format(float(v), ".17g") for v in z)


def _parse_outputs(text: str, length: int, x) -> np.ndarray:
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if len(lines) != length:
        raise SimulatorError(
            f"simulator returned {len(lines)} values, expected {length}", x)
    try:
        values = np.array([float(s) for s in lines])
    except ValueError as exc:
        raise SimulatorError(f"non-numeric simulator output: {exc}", x) from None
    if not np.all(np.isfinite(values)):
        raise SimulatorError("simulator returned non-finite values", x)
    return values


def eval_external(x, spec: SimulatorSpec) -> TimeSeries:
    """Run the external simulator once.

    Writes the native-unit inputs as one comma-separated line on stdin and reads
    exactly ``L`` lines, one real each, from stdout.
    """
    if spec.kind != EXTERNAL:
        raise ValueError("eval_external needs an external-exec simulator")
    x = _check_point(x, spec.d)
    z = spec.bounds.descale(x)
    env = dict(os.environ, HM_RUN_ID=uuid.uuid4().hex)
    cmd = [spec.exec_path, *spec.args]
    try:
        proc = subprocess.run(cmd, input=_format_inputs(z) + "\n", capture_output=True,
                              text=True, timeout=spec.timeout, env=env)
    except subprocess.TimeoutExpired:
        raise SimulatorError(f"simulator timed out after {spec.timeout} s", x) from None
    except OSError as exc:
        raise SimulatorError(f"cannot start simulator {spec.exec_path!r}: {exc}", x) from None
    if proc.returncode != 0:
        tail = proc.stderr.strip().splitlines()[-1:] or [""]
        raise SimulatorError(
            f"simulator exited with status {proc.returncode}: {tail[0]}", x)
    return TimeSeries(spec.grid, _parse_outputs(proc.stdout, len(spec.grid), x))


def evaluate(x, spec: SimulatorSpec) -> TimeSeries:
    if spec.kind == BUILTIN:
        return eval_testfunc(x, spec.grid)
    return eval_external(x, spec)


def target_from_point(x0, spec: SimulatorSpec) -> TimeSeries:
    """Synthetic target: the simulator's own output at ``x0``."""
    return evaluate(x0, spec)


class CachedSimulator:
    """Batch evaluator that never runs the simulator twice on the same point.

    Keys are exact coordinate tuples. Batches run with up to ``spec.parallelism``
    concurrent calls (capped by ``jobs``) and come back in submission order.
    """

    def __init__(self, spec: SimulatorSpec, jobs: Optional[int] = None):
        self.spec = spec
        workers = spec.parallelism if spec.kind == EXTERNAL else 1
        self.workers = max(1, min(workers, jobs) if jobs else workers)
        self._cache: dict = {}
        self.n_runs = 0

    def __len__(self):
        return len(self._cache)

    def __contains__(self, x) -> bool:
        return tuple(map(float, x)) in self._cache

    def evaluate_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        keys = [tuple(map(float, row)) for row in X]
        todo = list(dict.fromkeys(k for k in keys if k not in self._cache))
        if todo:
            if self.spec.kind == BUILTIN:
                t = self.spec.grid.asarray()
                for k in todo:
                    _check_point(k, 2)
                    self._cache[k] = testfunc_values(k, t)
            elif self.workers == 1:
                for k in todo:
                    self._cache[k] = eval_external(k, self.spec).values
            else:
                with ThreadPoolExecutor(self.workers) as pool:
                    results = list(pool.map(lambda k: eval_external(k, self.spec), todo))
                for k, ts in zip(todo, results):
                    self._cache[k] = ts.values
            self.n_runs += len(todo)
        if not keys:
            return np.empty((0, len(self.spec.grid)))
        return np.array([self._cache[k] for k in keys])


def log_delta(delta: float) -> float:
    """Natural log of a discrepancy, floored so exact hits stay finite."""
    return math.log(max(delta, 1e-300))
