"""Hypothesis family, graphical weighting strategies and closure enumeration.

Hypotheses are indexed ``0..m-1`` internally.  A subset of hypotheses is a
sorted tuple of indices; tuples are hashable and serve as dictionary keys.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

DEFAULT_CLOSURE_CAP = 16
WEIGHT_TOL = 1e-12

Subset = tuple[int, ...]


@dataclass(frozen=True)
class HypothesisSet:
    labels: tuple[str, ...]
    closure_cap: int = DEFAULT_CLOSURE_CAP

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        if not labels:
            raise ValueError("at least one hypothesis is required")
        if any(not x.strip() for x in labels):
            raise ValueError("hypothesis labels must be non-empty")
        if len(set(labels)) != len(labels):
            raise ValueError(f"hypothesis labels must be unique: {labels}")
        if len(labels) > self.closure_cap:
            raise ValueError(
                f"{len(labels)} hypotheses exceed the closure cap of {self.closure_cap}"
            )

    @property
    def m(self) -> int:
        return len(self.labels)

    @classmethod
    def numbered(cls, m: int, **kwargs) -> "HypothesisSet":
        return cls(tuple(f"H{i + 1}" for i in range(m)), **kwargs)

    def subset_label(self, subset: Subset) -> str:
        return "{" + ",".join(self.labels[i] for i in subset) + "}"


def canonical_subset(members, m: int | None = None) -> Subset:
    """Sorted, duplicate-free tuple of indices; rejects empty or out-of-range sets."""
    s = tuple(sorted({int(i) for i in members}))
    if not s:
        raise ValueError("subset must be non-empty")
    if s[0] < 0 or (m is not None and s[-1] >= m):
        raise ValueError(f"subset {s} has indices outside 0..{m - 1 if m else '?'}")
    return s


def enumerate_closure(hyps: HypothesisSet | int, cap: int = DEFAULT_CLOSURE_CAP) -> list[Subset]:
    """All non-empty subsets, largest first and lexicographic within a size."""
    m = hyps.m if isinstance(hyps, HypothesisSet) else int(hyps)
    if m < 1:
        raise ValueError("need at least one hypothesis")
    if m > cap:
        raise ValueError(f"m={m} exceeds the closure cap of {cap}")
    return [c for r in range(m, 0, -1) for c in combinations(range(m), r)]


@dataclass(frozen=True)
class WeightingStrategy:
    """Initial weights, transition matrix and optional explicit subset weights.

    ``indices`` names the hypotheses (of the full family) that the weights
    and rows/columns refer to; it is ``0..m-1`` for a fresh strategy and
    shrinks as hypotheses are removed after rejection.
    """

    initial_weights: np.ndarray
    transition: np.ndarray
    explicit_subset_weights: Mapping[Subset, np.ndarray] | None = None
    indices: Subset | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.array(self.initial_weights, dtype=float)
        g = np.array(self.transition, dtype=float)
        w.flags.writeable = False
        g.flags.writeable = False
        object.__setattr__(self, "initial_weights", w)
        object.__setattr__(self, "transition", g)
        if self.indices is None:
            object.__setattr__(self, "indices", tuple(range(len(w))))

    @property
    def m(self) -> int:
        return len(self.initial_weights)


def validate_strategy(strategy: WeightingStrategy, hyps: HypothesisSet | None = None) -> WeightingStrategy:
    """Check every invariant of a weighting strategy.

    Returns a new strategy with explicit subset keys in canonical order.

    Raises:
        ValueError: on dimension mismatch, weights outside [0, 1], weight or
            row sums above one, a nonzero diagonal, or an incomplete explicit
            subset table.
    """
    w, g = strategy.initial_weights, strategy.transition
    m = len(w)
    if w.ndim != 1 or m == 0:
        raise ValueError("initial_weights must be a non-empty vector")
    if hyps is not None and m != hyps.m:
        raise ValueError(f"initial_weights has length {m}, expected {hyps.m}")
    if g.shape != (m, m):
        raise ValueError(f"transition matrix must be {m}x{m}, got {g.shape}")
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(g))):
        raise ValueError("weights and transition entries must be finite")
    if np.any(w < 0) or np.any(w > 1):
        raise ValueError(f"initial weights must lie in [0, 1]: {w.tolist()}")
    if w.sum() > 1 + WEIGHT_TOL:
        raise ValueError(f"initial weights sum to {w.sum():.15g} > 1")
    if np.any(g < 0) or np.any(g > 1):
        raise ValueError("transition entries must lie in [0, 1]")
    if np.any(np.diag(g) != 0):
        raise ValueError("transition matrix must have a zero diagonal")
    rows = g.sum(axis=1)
    if np.any(rows > 1 + WEIGHT_TOL):
        bad = int(np.argmax(rows))
        raise ValueError(f"transition row {bad + 1} sums to {rows[bad]:.15g} > 1")

    explicit = None
    if strategy.explicit_subset_weights is not None:
        explicit = {}
        for key, vec in strategy.explicit_subset_weights.items():
            sub = canonical_subset(key, m)
            v = np.array(vec, dtype=float)
            if v.shape != (len(sub),):
                raise ValueError(f"subset {sub} needs {len(sub)} weights, got {v.shape}")
            if np.any(v < 0) or np.any(v > 1) or v.sum() > 1 + WEIGHT_TOL:
                raise ValueError(f"invalid weights for subset {sub}: {v.tolist()}")
            if sub in explicit:
                raise ValueError(f"subset {sub} listed twice")
            v.flags.writeable = False
            explicit[sub] = v
        missing = [s for s in enumerate_closure(m, cap=max(m, DEFAULT_CLOSURE_CAP)) if s not in explicit]
        if missing:
            raise ValueError(f"explicit subset weights miss {len(missing)} subsets, e.g. {missing[0]}")
    return WeightingStrategy(w, g, explicit, strategy.indices)


MAX_DENOMINATOR = 10**6
EXACT_MAX_M = 12  # rational closure cost grows as 2^m m^2 fraction operations


def _simple_rational(x: float) -> Fraction | None:
    """Small-denominator rational that rounds back to ``x``, if any."""
    r = Fraction(float(x)).limit_denominator(MAX_DENOMINATOR)
    return r if float(r) == float(x) else None


def _inputs(w, g):
    """Exact rationals when every entry is a simple fraction, else floats.

    Exact arithmetic keeps weights such as singleton 1 exact and makes the
    result independent of removal order; arbitrary floats would blow up the
    denominators, so they use numpy instead.
    """
    m = len(np.ravel(w))
    flat = [] if m > EXACT_MAX_M else [_simple_rational(x) for x in np.concatenate([np.ravel(w), np.ravel(g)])]
    if m > EXACT_MAX_M or any(x is None for x in flat):
        return np.asarray(w, dtype=float), np.asarray(g, dtype=float)
    return flat[:m], [flat[m + i * m : m + (i + 1) * m] for i in range(m)]


def _remove(w, g, i: int):
    """Remove local hypothesis ``i``, passing its weight along the graph.

    ``g_lj <- (g_lj + g_li g_ij) / (1 - g_li g_il)``, or 0 when the loop
    product is 1.  Accepts numpy arrays or nested lists of fractions.
    """
    if isinstance(w, np.ndarray):
        w = w + w[i] * g[i]
        loop = g[:, i] * g[i, :]
        num = g + np.outer(g[:, i], g[i, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            new = np.where((loop < 1.0)[:, None], num / (1.0 - loop)[:, None], 0.0)
        np.fill_diagonal(new, 0.0)
        keep = [k for k in range(len(w)) if k != i]
        return w[keep], new[np.ix_(keep, keep)]
    keep = [k for k in range(len(w)) if k != i]
    new_w = [w[k] + w[i] * g[i][k] for k in keep]
    new_g = []
    for l in keep:
        loop = g[l][i] * g[i][l]
        new_g.append([
            Fraction(0) if j == l or loop >= 1 else (g[l][j] + g[l][i] * g[i][j]) / (1 - loop)
            for j in keep
        ])
    return new_w, new_g


def _as_float(w) -> np.ndarray:
    return np.array([float(x) for x in w])


def _state(strategy: WeightingStrategy, sub: Subset):
    """Graph over ``sub`` after removing the others in ascending order.

    Built from the state of ``sub`` plus its largest removed index, so the
    whole closure costs one removal per subset.
    """
    key = ("state", sub)
    if key in strategy._cache:
        return strategy._cache[key]
    if len(sub) == strategy.m:
        out = _inputs(strategy.initial_weights, strategy.transition)
    else:
        last = max(i for i in range(strategy.m) if i not in sub)
        parent = tuple(sorted(sub + (last,)))
        w, g = _state(strategy, parent)
        out = _remove(w, g, parent.index(last))
    strategy._cache[key] = out
    return out


def subset_weights(strategy: WeightingStrategy, subset) -> np.ndarray:
    """Weights ``w_j(J)`` for the hypotheses of ``subset`` (ascending order).

    Explicit table entries take precedence; otherwise hypotheses outside the
    subset are removed one at a time in ascending order.
    """
    sub = canonical_subset(subset, strategy.m)
    if strategy.explicit_subset_weights is not None and sub in strategy.explicit_subset_weights:
        return strategy.explicit_subset_weights[sub]
    cached = strategy._cache.get(sub)
    if cached is not None:
        return cached
    out = _as_float(_state(strategy, sub)[0])
    out.flags.writeable = False
    strategy._cache[sub] = out
    return out


def removal_weights(w, g, keep: Sequence[int], order: Sequence[int] | None = None) -> np.ndarray:
    """Apply the graph removal rule to drop every index not in ``keep``.

    ``order`` fixes the removal sequence (default ascending); used to check
    that the result does not depend on it.
    """
    w, g = _inputs(w, g)
    alive = list(range(len(w)))
    drop = [i for i in range(len(w)) if i not in set(keep)] if order is None else list(order)
    if sorted(drop) != sorted(set(range(len(w))) - set(keep)):
        raise ValueError("removal order must list exactly the dropped indices")
    for i in drop:
        pos = alive.index(i)
        w, g = _remove(w, g, pos)
        alive.pop(pos)
    return _as_float(w)


def update_after_rejection(strategy: WeightingStrategy, j: int) -> WeightingStrategy:
    """Strategy over the remaining hypotheses after rejecting ``j``.

    ``j`` is an index of the full family and must be present in
    ``strategy.indices``.
    """
    if j not in strategy.indices:
        raise ValueError(f"hypothesis {j} is not in the current set {strategy.indices}")
    if len(strategy.indices) < 2:
        raise ValueError("cannot remove the last remaining hypothesis")
    pos = strategy.indices.index(j)
    w, g = _remove(*_inputs(strategy.initial_weights, strategy.transition), pos)
    w = _as_float(w)
    g = np.array([[float(x) for x in row] for row in g]).reshape(len(w), len(w))
    remaining = tuple(i for i in strategy.indices if i != j)
    return WeightingStrategy(w, g, None, remaining)


def closure_weights(strategy: WeightingStrategy) -> dict[Subset, np.ndarray]:
    return {s: subset_weights(strategy, s) for s in enumerate_closure(strategy.m)}


def is_consonant(strategy: WeightingStrategy, tol: float = WEIGHT_TOL) -> bool:
    """Monotonicity check: ``w_j(J1) <= w_j(J2)`` whenever ``j in J2 ⊆ J1``.

    It suffices to compare each subset with the subsets obtained by dropping
    one element.
    """
    table = closure_weights(strategy)
    for sub, w in table.items():
        if len(sub) == 1:
            continue
        for drop in sub:
            smaller = tuple(i for i in sub if i != drop)
            ws = table[smaller]
            for pos, j in enumerate(smaller):
                if w[sub.index(j)] > ws[pos] + tol:
                    return False
    return True
