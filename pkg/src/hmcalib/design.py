"""Space-filling designs on the unit hypercube.

All generators take a :class:`numpy.random.Generator` and are pure functions of
their arguments and the generator state. Ties are broken by lowest index.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist


@dataclass(frozen=True)
class DesignSet:
    """An ``(n, d)`` array of points in ``[0, 1]^d`` with a role label."""

    points: np.ndarray
    label: str = "initial"

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.size and (np.any(pts < 0) or np.any(pts > 1)):
            raise ValueError("design points must lie in [0, 1]^d")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def to_csv(self, path, names: Optional[Sequence[str]] = None) -> None:
        names = list(names) if names else [f"x{k + 1}" for k in range(self.d)]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for row in self.points:
                w.writerow([repr(float(v)) for v in row])


def min_distance(points: np.ndarray) -> float:
    """Smallest pairwise Euclidean distance (``inf`` for fewer than 2 points)."""
    if len(points) < 2:
        return np.inf
    return float(pdist(points).min())


def latin_hypercube(n: int, d: int, rng: np.random.Generator,
                    jitter: bool = True) -> np.ndarray:
    """One random LHD: a random permutation of the ``n`` strata per coordinate."""
    perms = np.argsort(rng.random((d, n)), axis=1).T
    offset = rng.random((n, d)) if jitter else np.full((n, d), 0.5)
    return (perms + offset) / n


def lhd_maximin(n: int, d: int, rng: np.random.Generator, restarts: Optional[int] = None,
                jitter: bool = True) -> DesignSet:
    """Best of ``restarts`` random LHDs under the maximin distance criterion.

    ``restarts`` defaults to 100 for ``n <= 100`` and 1 otherwise.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    if restarts is None:
        restarts = 100 if n <= 100 else 1
    if restarts < 1:
        raise ValueError("restarts must be positive")
    best, best_score = None, -np.inf
    for _ in range(restarts):
        cand = latin_hypercube(n, d, rng, jitter)
        score = min_distance(cand)
        if best is None or score > best_score:
            best, best_score = cand, score
    return DesignSet(best, "initial")


def random_test_set(M: int, d: int, rng: np.random.Generator) -> DesignSet:
    if M < 1:
        raise ValueError("M must be positive")
    return DesignSet(latin_hypercube(M, d, rng), "test")


def maximin_subset(candidates, k: int) -> DesignSet:
    """Greedy maximin selection of ``k`` candidates.

    Starts from the farthest-apart pair, then repeatedly adds the candidate whose
    distance to the chosen set is largest. Output keeps selection order.
    """
    pts = candidates.points if isinstance(candidates, DesignSet) else np.atleast_2d(candidates)
    n = len(pts)
    if not 0 <= k <= n:
        raise ValueError(f"cannot pick {k} of {n} candidates")
    if k == n:
        return DesignSet(pts, "plausible-subset")
    if k == 0:
        return DesignSet(np.empty((0, pts.shape[1])), "plausible-subset")
    if k == 1:
        return DesignSet(pts[:1], "plausible-subset")
    # farthest pair, lowest (i, j) in row-major order on ties
    best_i, best_j, best_d = 0, 1, -1.0
    for i in range(n - 1):
        dist = np.linalg.norm(pts[i + 1:] - pts[i], axis=1)
        j = int(np.argmax(dist))
        if dist[j] > best_d:
            best_i, best_j, best_d = i, i + 1 + j, dist[j]
    chosen = [best_i, best_j]
    nearest = cdist(pts, pts[chosen]).min(axis=1)
    nearest[chosen] = -1.0
    while len(chosen) < k:
        nxt = int(np.argmax(nearest))
        chosen.append(nxt)
        nearest = np.minimum(nearest, np.linalg.norm(pts - pts[nxt], axis=1))
        nearest[chosen] = -1.0
    return DesignSet(pts[chosen], "plausible-subset")


def fixed_dps(T_k: int, L: int) -> list:
    """Equally spaced interior 1-based indices ``floor(j L / (T_k + 1))``."""
    if not 1 <= T_k <= L:
        raise ValueError(f"T_k must be in [1, {L}]")
    return [max(j * L // (T_k + 1), j) for j in range(1, T_k + 1)]


def variable_dps(T_k: int, L: int, rng: Optional[np.random.Generator]) -> list:
    """One uniform 1-based index from each of ``T_k`` consecutive blocks of ``1..L``.

    Block ``j`` is ``floor((j-1) L / T_k) + 1 .. floor(j L / T_k)``. Passing
    ``rng=None`` disables randomization and returns :func:`fixed_dps`.
    """
    if not 1 <= T_k <= L:
        raise ValueError(f"T_k must be in [1, {L}]")
    if rng is None:
        return fixed_dps(T_k, L)
    out = []
    for j in range(1, T_k + 1):
        lo = (j - 1) * L // T_k + 1
        hi = j * L // T_k
        out.append(int(rng.integers(lo, hi + 1)))
    return out
