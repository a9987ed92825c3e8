"""Correlation structure of all hypothesis-by-analysis test statistics.

Statistics are ordered analysis-major: ``Z[j, k]`` sits at position
``k * m + j``.  Analyses are counted from 1 in public arguments named
``through``/``k``; array axes are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .gaussian import check_correlation


@dataclass(frozen=True)
class EventTable:
    """Cumulative event counts and pairwise overlaps.

    Attributes:
        counts: ``(m, K)`` array, events for hypothesis ``i`` through analysis ``k``.
        overlap: ``(m, m, K, K)`` array, events shared by ``Z[i1, k1]`` and ``Z[i2, k2]``.
    """

    counts: np.ndarray
    overlap: np.ndarray

    def __post_init__(self):
        n = np.array(self.counts, dtype=float)
        ov = np.array(self.overlap, dtype=float)
        if n.ndim != 2 or n.size == 0:
            raise ValueError("counts must be an m x K table")
        m, K = n.shape
        if ov.shape != (m, m, K, K):
            raise ValueError(f"overlap must have shape {(m, m, K, K)}, got {ov.shape}")
        if not (np.all(np.isfinite(n)) and np.all(np.isfinite(ov))):
            raise ValueError("event counts must be finite")
        if np.any(n <= 0):
            i, k = np.argwhere(n <= 0)[0]
            raise ValueError(f"events.counts[{i}][{k}] must be positive")
        if K > 1 and np.any(np.diff(n, axis=1) <= 0):
            i = int(np.argwhere(np.diff(n, axis=1) <= 0)[0][0])
            raise ValueError(f"events.counts[{i}] must be strictly increasing across analyses")
        if np.any(ov < 0):
            raise ValueError("overlap counts must be non-negative")
        if not np.array_equal(ov, ov.transpose(1, 0, 3, 2)):
            raise ValueError("overlap counts must be symmetric in the hypothesis pair")
        cap = np.minimum(n[:, None, :, None], n[None, :, None, :])
        if np.any(ov > cap):
            i1, i2, k1, k2 = np.argwhere(ov > cap)[0]
            raise ValueError(
                f"overlap for hypotheses ({i1}, {i2}) at analyses ({k1 + 1}, {k2 + 1}) "
                f"is {ov[i1, i2, k1, k2]:g}, more than the smaller marginal count {cap[i1, i2, k1, k2]:g}"
            )
        kmin = np.minimum.outer(np.arange(K), np.arange(K))
        for i in range(m):
            if not np.array_equal(ov[i, i], n[i][kmin]):
                raise ValueError(f"self-overlap of hypothesis {i} must equal its earlier count")
        n.flags.writeable = False
        ov.flags.writeable = False
        object.__setattr__(self, "counts", n)
        object.__setattr__(self, "overlap", ov)

    @property
    def m(self) -> int:
        return self.counts.shape[0]

    @property
    def K(self) -> int:
        return self.counts.shape[1]

    @classmethod
    def from_pairwise(
        cls,
        counts: Sequence[Sequence[float]],
        pair_overlaps: Mapping[tuple[int, int], Sequence[float]],
    ) -> "EventTable":
        """Build from per-analysis pairwise overlaps.

        ``pair_overlaps[(i1, i2)][k]`` is the number of events shared by the
        two hypotheses through analysis ``k``; mixed analyses use the
        earlier of the two.  Every unordered pair must be given.
        """
        n = np.asarray(counts, dtype=float)
        if n.ndim != 2:
            raise ValueError("counts must be an m x K table")
        m, K = n.shape
        pairs = {}
        for (i1, i2), vals in pair_overlaps.items():
            if i1 == i2:
                raise ValueError(f"overlap pair ({i1}, {i2}) must name two hypotheses")
            key = (min(i1, i2), max(i1, i2))
            if not (0 <= key[0] and key[1] < m):
                raise ValueError(f"overlap pair {key} out of range for {m} hypotheses")
            if key in pairs:
                raise ValueError(f"overlap pair {key} given twice")
            v = np.asarray(vals, dtype=float)
            if v.shape != (K,):
                raise ValueError(f"overlap for pair {key} needs {K} values, got {v.shape}")
            pairs[key] = v
        kmin = np.minimum.outer(np.arange(K), np.arange(K))
        ov = np.empty((m, m, K, K))
        for i1 in range(m):
            ov[i1, i1] = n[i1][kmin]
            for i2 in range(i1 + 1, m):
                if (i1, i2) not in pairs:
                    raise ValueError(f"missing overlap counts for hypotheses ({i1}, {i2})")
                ov[i1, i2] = ov[i2, i1] = pairs[(i1, i2)][kmin]
        return cls(n, ov)


@dataclass(frozen=True)
class DesignSchedule:
    """Information fractions ``t[j, k]``, optionally with the source counts."""

    fractions: np.ndarray
    events: EventTable | None = None

    def __post_init__(self):
        t = np.array(self.fractions, dtype=float)
        if t.ndim != 2 or t.size == 0:
            raise ValueError("fractions must be an m x K table")
        if np.any(t <= 0) or np.any(t > 1):
            raise ValueError("information fractions must lie in (0, 1]")
        if np.any(t[:, -1] != 1.0):
            raise ValueError("the final information fraction of every hypothesis must be 1")
        if np.any(np.diff(t, axis=1) <= 0):
            raise ValueError("information fractions must increase strictly across analyses")
        t.flags.writeable = False
        object.__setattr__(self, "fractions", t)

    @property
    def m(self) -> int:
        return self.fractions.shape[0]

    @property
    def K(self) -> int:
        return self.fractions.shape[1]


def info_fractions(events: EventTable) -> DesignSchedule:
    n = events.counts
    return DesignSchedule(n / n[:, -1:], events)


def build_ccs(events: EventTable) -> np.ndarray:
    """Correlation of every pair of statistics from shared event counts.

    ``Corr(Z[i1,k1], Z[i2,k2]) = n_shared / sqrt(n[i1,k1] * n[i2,k2])``.
    The squared ratio is formed exactly, so proportional count tables give
    bit-identical matrices.
    """
    n = events.counts
    m, K = n.shape
    size = m * K
    corr = np.eye(size)
    exact = {}
    for a in range(size):
        k1, i1 = divmod(a, m)
        for b in range(a + 1, size):
            k2, i2 = divmod(b, m)
            shared = Fraction(float(events.overlap[i1, i2, k1, k2]))
            ratio = shared * shared / (Fraction(float(n[i1, k1])) * Fraction(float(n[i2, k2])))
            if ratio not in exact:
                exact[ratio] = math.sqrt(ratio)
            corr[a, b] = corr[b, a] = exact[ratio]
    return corr


def fractions_from_ccs(corr: np.ndarray, m: int, K: int) -> np.ndarray:
    """Information fractions implied by within-hypothesis correlations.

    Uses ``Corr(Z[j,k], Z[j,K]) = sqrt(t[j,k])``.
    """
    t = np.empty((m, K))
    for j in range(m):
        for k in range(K):
            t[j, k] = corr[k * m + j, (K - 1) * m + j] ** 2
    t[:, -1] = 1.0
    return t


@dataclass(frozen=True)
class CorrelationModel:
    """Validated complete correlation structure plus the design schedule."""

    matrix: np.ndarray
    schedule: DesignSchedule

    def __post_init__(self):
        m, K = self.schedule.m, self.schedule.K
        c = np.asarray(self.matrix, dtype=float)
        if c.shape != (m * K, m * K):
            raise ValueError(f"correlation must be {m * K}x{m * K} for m={m}, K={K}")
        c = check_correlation(c)
        c.flags.writeable = False
        object.__setattr__(self, "matrix", c)

    @property
    def m(self) -> int:
        return self.schedule.m

    @property
    def K(self) -> int:
        return self.schedule.K

    @classmethod
    def from_events(cls, events: EventTable) -> "CorrelationModel":
        return cls(build_ccs(events), info_fractions(events))

    @classmethod
    def from_matrix(cls, matrix, m: int, K: int, fractions=None) -> "CorrelationModel":
        c = check_correlation(matrix)
        if c.shape != (m * K, m * K):
            raise ValueError(f"correlation must be {m * K}x{m * K} for m={m}, K={K}")
        t = fractions_from_ccs(c, m, K) if fractions is None else fractions
        return cls(c, DesignSchedule(t))

    def positions(self, subset, through: int) -> np.ndarray:
        """Matrix positions of ``Z[j, k]`` for ``j in subset``, ``k <= through``."""
        if not 1 <= through <= self.K:
            raise ValueError(f"analysis {through} outside 1..{self.K}")
        sub = list(subset)
        if not sub or min(sub) < 0 or max(sub) >= self.m:
            raise ValueError(f"subset {subset} out of range for {self.m} hypotheses")
        return np.array([k * self.m + j for k in range(through) for j in sub], dtype=int)


def subset_ccs(ccs: CorrelationModel, subset, through: int) -> np.ndarray:
    """Principal sub-matrix for ``subset`` through analysis ``through`` (1-based)."""
    idx = ccs.positions(subset, through)
    return ccs.matrix[np.ix_(idx, idx)]
