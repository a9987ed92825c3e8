"""Alpha-spending functions.

Only the Hwang-Shih-DeCani family is provided; new families subclass
:class:`SpendingFunction` and register in :data:`FAMILIES`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class SpendingFunction:
    """Cumulative spend ``f(t; level)``, increasing in ``t`` and linear in ``level``."""

    family: str = ""

    def fraction(self, t: float) -> float:
        """Share of the level spent by information fraction ``t``."""
        raise NotImplementedError

    def cumulative(self, t: float, level: float) -> float:
        _check_fraction(t)
        if not 0.0 <= level <= 1.0:
            raise ValueError(f"level must be in [0, 1], got {level}")
        return level * self.fraction(t)


@dataclass(frozen=True)
class HSDSpending(SpendingFunction):
    """Hwang-Shih-DeCani: ``level * (1 - exp(-gamma t)) / (1 - exp(-gamma))``."""

    gamma: float
    family = "hsd"

    def __post_init__(self):
        if not math.isfinite(self.gamma) or self.gamma == 0:
            raise ValueError(f"HSD gamma must be finite and nonzero, got {self.gamma}")

    def fraction(self, t: float) -> float:
        if t == 1.0:
            return 1.0
        return math.expm1(-self.gamma * t) / math.expm1(-self.gamma)


FAMILIES = {"hsd": HSDSpending}


def make_spending(family: str, **params) -> SpendingFunction:
    try:
        cls = FAMILIES[family.lower()]
    except KeyError:
        raise ValueError(f"unknown spending family {family!r}; known: {sorted(FAMILIES)}") from None
    return cls(**params)


def _check_fraction(t: float) -> None:
    if not (0.0 < t <= 1.0):
        raise ValueError(f"information fraction must be in (0, 1], got {t}")


def cumulative_spend(spending: SpendingFunction, t: float, level: float) -> float:
    return spending.cumulative(t, level)


def check_fractions(fractions: Sequence[float]) -> np.ndarray:
    t = np.asarray(fractions, dtype=float)
    if t.ndim != 1 or len(t) == 0:
        raise ValueError("need at least one information fraction")
    for x in t:
        _check_fraction(x)
    if np.any(np.diff(t) <= 0):
        raise ValueError(f"information fractions must be strictly increasing: {t.tolist()}")
    if t[-1] != 1.0:
        raise ValueError(f"the last information fraction must be 1, got {t[-1]}")
    return t


def spend_increments(spending: SpendingFunction, fractions: Sequence[float], level: float) -> np.ndarray:
    """Per-analysis spend; the last increment closes the gap to ``level`` exactly."""
    t = check_fractions(fractions)
    cum = np.array([spending.cumulative(x, level) for x in t])
    inc = np.diff(cum, prepend=0.0)
    inc[-1] = level - cum[-2] if len(cum) > 1 else level
    return np.maximum(inc, 0.0)
