"""Sequential, adjusted-sequential and repeated p-values.

A sequential p-value is the smallest level ``mu`` at which the group
sequential test of an intersection hypothesis would have rejected by
analysis ``k``.  Bounds fall as ``mu`` grows, so it is the running minimum
over ``k' <= k`` of the first-crossing level at ``k'``: the smallest ``mu``
for which a statistic observed at ``k'`` reaches its bound there.

At analysis ``a`` the bounds are ``b_j = Phi^{-1}(1 - xi_a(mu) w_j)``, so the
observed data cross exactly when ``xi_a(mu) >= xi*_a = min_j p_{j,a} / w_j``.
For ``a = 0`` this gives ``mu* = P(cross at xi*) / f(t_0)`` in closed form.
For later analyses the search runs over the first-analysis factor ``xi_0``,
which fixes ``mu`` through the first-analysis spend; only the intermediate
analyses need an inner root solve.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .boundaries import (
    MAX_ITER,
    METHODS,
    Diagnostics,
    bonferroni_bounds,
    bound_from_level,
    min_fraction_spend,
    new_crossing,
    solve_analysis,
    staged,
    within_hypothesis_corr,
    wpgsd_bounds,
)
from .correlation import CorrelationModel, subset_ccs
from .gaussian import MVNSettings, NumericalError, normal_sf, z_from_p
from .graph import (
    HypothesisSet,
    Subset,
    WeightingStrategy,
    canonical_subset,
    enumerate_closure,
    is_consonant,
    subset_weights,
    update_after_rejection,
    validate_strategy,
)
from .spending import SpendingFunction

MU_MIN = 1e-10
MU_MAX = 1.0 - 1e-10
MU_XTOL = 1e-6


@dataclass(frozen=True)
class Design:
    """Everything fixed before data arrive."""

    hypotheses: HypothesisSet
    strategy: WeightingStrategy
    spending: SpendingFunction
    correlation: CorrelationModel
    mvn: MVNSettings = MVNSettings()

    def __post_init__(self):
        object.__setattr__(self, "strategy", validate_strategy(self.strategy, self.hypotheses))
        if self.correlation.m != self.hypotheses.m:
            raise ValueError(
                f"correlation covers {self.correlation.m} hypotheses, expected {self.hypotheses.m}"
            )
        if self.correlation.m * self.correlation.K > self.mvn.max_dim and self.hypotheses.m > 0:
            # only the largest subset reaches m*K; fail early rather than mid-analysis
            raise ValueError(
                f"m*K = {self.correlation.m * self.correlation.K} exceeds mvn.max_dim = {self.mvn.max_dim}"
            )

    @property
    def m(self) -> int:
        return self.hypotheses.m

    @property
    def K(self) -> int:
        return self.correlation.K

    @property
    def schedule(self):
        return self.correlation.schedule

    def weights(self, subset) -> np.ndarray:
        return subset_weights(self.strategy, subset)


@dataclass(frozen=True)
class ObservedStatistics:
    """Observed ``Z[j, k]`` (``m x K``); ``NaN`` marks a statistic not yet seen."""

    z: np.ndarray

    def __post_init__(self):
        z = np.array(self.z, dtype=float)
        if z.ndim != 2:
            raise ValueError("statistics must be an m x K table")
        if np.any(np.isinf(z)):
            raise ValueError("statistics must be finite")
        z.flags.writeable = False
        object.__setattr__(self, "z", z)

    @classmethod
    def from_p(cls, p) -> "ObservedStatistics":
        """Convert one-sided nominal p-values; ``NaN`` stays missing."""
        p = np.asarray(p, dtype=float)
        bad = ~np.isnan(p) & ((p <= 0) | (p >= 1))
        if np.any(bad):
            raise ValueError(f"nominal p-values must lie in (0, 1), got {p[bad][0]}")
        z = np.full(p.shape, np.nan)
        ok = ~np.isnan(p)
        z[ok] = z_from_p(p[ok])
        return cls(z)

    @property
    def available(self) -> np.ndarray:
        return ~np.isnan(self.z)

    def p(self) -> np.ndarray:
        return normal_sf(self.z)

    def require(self, subset, k: int) -> None:
        """Raise unless every ``Z[j, k']`` for ``j in subset``, ``k' <= k`` is present."""
        if not 1 <= k <= self.z.shape[1]:
            raise ValueError(f"analysis {k} outside 1..{self.z.shape[1]}")
        for j in subset:
            missing = np.flatnonzero(np.isnan(self.z[j, :k]))
            if len(missing):
                raise ValueError(f"statistic for hypothesis {j} at analysis {missing[0] + 1} is missing")


def first_crossing_level(
    weights,
    spend_fraction,
    corr: np.ndarray,
    z: np.ndarray,
    mvn: MVNSettings,
    diag: Diagnostics | None = None,
) -> float:
    """Smallest ``mu`` at which the last row of ``z`` reaches its bound.

    Args:
        weights: nominal-level weights of the ``L`` statistics per analysis.
        spend_fraction: ``f(t_k; 1)`` for analyses ``0..a``.
        corr: correlation of the ``(a + 1) * L`` statistics, analysis-major.
        z: ``(a + 1, L)`` observed statistics; only row ``a`` is used
            for the crossing itself.
        mvn: integration settings.

    Returns:
        The level in ``[1e-10, 1 - 1e-10]``, or ``1.0`` if none rejects.
    """
    diag = Diagnostics() if diag is None else diag
    w = np.asarray(weights, dtype=float)
    F = np.asarray(spend_fraction, dtype=float)
    z = np.asarray(z, dtype=float)
    a, L = len(F) - 1, len(w)
    live = w > 0
    if not np.any(live):
        return 1.0
    xi_star = float(np.min(normal_sf(z[a, live]) / w[live]))
    if np.any(xi_star * w >= 1.0):
        # a bound at -inf needs the whole unit level spent by analysis a
        return 1.0
    b_star = bound_from_level(np.minimum(xi_star * w, 1.0))
    # the argmin statistic sits exactly on its bound; ties reject
    b_star[live] = np.minimum(b_star[live], np.where(normal_sf(z[a, live]) / w[live] == xi_star, z[a, live], np.inf))

    if a == 0:
        p0 = new_crossing([], b_star, corr, mvn, diag).value
        mu = max(p0, mvn.tol * (1 + 1e-9), MU_MIN * F[0]) / F[0]
        return mu if mu <= MU_MAX else 1.0

    corr0 = corr[:L, :L]

    def first_look(xi0: float, settings: MVNSettings, sink: Diagnostics):
        """``(mu, bounds_0, achieved_0, error)`` for a first-analysis factor."""
        r = new_crossing([], bound_from_level(np.minimum(xi0 * w, 1.0)), corr0, settings, sink)
        mu = r.value / F[0]
        if r.value <= mvn.tol:
            return mu, np.full(L, np.inf), 0.0, r.error_bound
        return mu, bound_from_level(np.minimum(xi0 * w, 1.0)), r.value, r.error_bound

    def margin(xi0: float, tol: float):
        """Signed distance from crossing at analysis ``a``; ``>= 0`` rejects."""
        if xi0 == 0.0:
            return -mvn.tol, 0.0
        settings = replace(mvn, tol=tol)
        # coarse passes only steer the search; keep them out of the diagnostics
        sink = diag if tol <= mvn.tol else Diagnostics()
        mu, b0, achieved, err = first_look(xi0, settings, sink)
        bounds = [b0]
        for k in range(1, a):
            b, _, achieved = solve_analysis(
                w,
                np.concatenate(bounds),
                achieved,
                mu * F[k],
                mu * (F[k] - F[k - 1]),
                corr[: (k + 1) * L, : (k + 1) * L],
                settings,
                sink,
            )
            bounds.append(b)
        q = new_crossing(np.concatenate(bounds), b_star, corr[: (a + 1) * L, : (a + 1) * L], settings, sink)
        gap = mu * F[a] - achieved - q.value
        increment = mu * (F[a] - F[a - 1]) - mvn.tol
        # error of mu * F[a] plus inner targets plus the final increment
        err = err * F[a] / F[0] + a * tol + q.error_bound
        return min(gap, increment), err

    # first-analysis factor giving the top of the mu range
    _, xi_hi, _ = solve_analysis(w, np.empty(0), 0.0, MU_MAX * F[0], MU_MAX * F[0], corr0, mvn, diag)
    f = staged(margin, mvn)
    if f(xi_hi) < 0:
        return 1.0
    xtol = MU_XTOL * F[0] / max(w.sum(), 1e-300)
    root, info = brentq(f, 0.0, xi_hi, xtol=xtol, maxiter=MAX_ITER, full_output=True, disp=False)
    if not info.converged:
        raise NumericalError(f"level search did not converge ({info.flag})")
    diag.record_root(info.iterations)
    # Brent may stop just below the root; step to the rejecting side
    x = root if f(root) >= 0 else min(root + xtol, xi_hi)
    mu = first_look(x, mvn, diag)[0]
    return min(max(mu, MU_MIN), MU_MAX)


@dataclass
class InferenceReport:
    """Closed-test results at one analysis.

    Hypotheses and subsets are 0-based indices; ``labels`` maps them to
    names.
    """

    analysis: int
    method: str
    alpha: float
    labels: tuple[str, ...]
    subset_p: dict[Subset, float]
    adjusted: dict[int, float]
    argmax: dict[int, Subset]
    rejected: frozenset[int]
    rejected_at: dict[int, int]
    repeated: dict[int, float] | None = None
    weights: dict[Subset, np.ndarray] = field(default_factory=dict)
    diagnostics: Diagnostics = field(default_factory=Diagnostics)


class SequentialEngine:
    """Memoized first-crossing levels for one design, data set and method.

    Safe to share between threads: results are keyed by (subset, analysis)
    and recomputing a key gives the same deterministic value.
    """

    def __init__(self, design: Design, data: ObservedStatistics, method: str):
        if method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {method!r}")
        if data.z.shape != (design.m, design.K):
            raise ValueError(f"statistics table must be {design.m}x{design.K}, got {data.z.shape}")
        self.design = design
        self.data = data
        self.method = method
        self.diagnostics = Diagnostics()
        self._levels: dict[tuple, float] = {}
        self._lock = threading.Lock()

    def _record(self, diag: Diagnostics) -> None:
        with self._lock:
            self.diagnostics.merge(diag)

    def elementary_level(self, j: int, a: int) -> float:
        """Weight-1 first-crossing level of hypothesis ``j`` at analysis ``a`` (1-based)."""
        key = ("elem", j, a)
        if key not in self._levels:
            self.data.require((j,), a)
            t = self.design.schedule.fractions[j, :a]
            F = [self.design.spending.cumulative(x, 1.0) for x in t]
            diag = Diagnostics()
            level = first_crossing_level(
                np.ones(1), F, within_hypothesis_corr(t), self.data.z[j, :a, None], self.design.mvn, diag
            )
            self._record(diag)
            self._levels[key] = float(level)
        return self._levels[key]

    def crossing_level(self, subset, a: int) -> float:
        """First-crossing level of the intersection over ``subset`` at analysis ``a``."""
        sub = canonical_subset(subset, self.design.m)
        key = ("int", sub, a)
        if key not in self._levels:
            self.data.require(sub, a)
            w = self.design.weights(sub)
            if self.method == "bonferroni":
                vals = [self.elementary_level(j, a) / wj for j, wj in zip(sub, w) if wj > 0]
                level = min(vals, default=1.0)
                level = level if level <= MU_MAX else 1.0
            else:
                diag = Diagnostics()
                F = min_fraction_spend(sub, self.design.schedule, self.design.spending, a)
                corr = subset_ccs(self.design.correlation, sub, a)
                z = self.data.z[list(sub), :a].T
                level = first_crossing_level(w, F, corr, z, self.design.mvn, diag)
                self._record(diag)
            self._levels[key] = float(level)
        return self._levels[key]

    def sequential_p(self, subset, k: int) -> float:
        return min(self.crossing_level(subset, a) for a in range(1, k + 1))


def _engine(design, data, method, engine=None) -> SequentialEngine:
    if engine is not None:
        return engine
    return SequentialEngine(design, data, method)


def sequential_p_intersection(subset, k: int, data: ObservedStatistics, design: Design, method: str, *, engine=None) -> float:
    """Sequential p-value of the intersection over ``subset`` at analysis ``k``."""
    return _engine(design, data, method, engine).sequential_p(subset, k)


def sequential_p_elementary(j: int, k: int, data: ObservedStatistics, design: Design, method: str = "bonferroni", *, engine=None) -> float:
    """Sequential p-value of hypothesis ``j`` alone at full weight."""
    eng = _engine(design, data, method, engine)
    return min(eng.elementary_level(j, a) for a in range(1, k + 1))


def repeated_p_value(j: int, k: int, data: ObservedStatistics, design: Design, *, engine=None) -> float:
    """Smallest level at which ``Z[j, k]`` alone reaches its weight-1 bound."""
    return _engine(design, data, "bonferroni", engine).elementary_level(j, k)


def adjusted_sequential_p(j: int, k: int, data: ObservedStatistics, design: Design, method: str, *, engine=None) -> tuple[float, Subset]:
    """Maximum sequential p-value over the subsets containing ``j``.

    Ties go to the largest subset, then the lexicographically first.
    """
    eng = _engine(design, data, method, engine)
    best, arg = -1.0, None
    for sub in enumerate_closure(design.hypotheses, design.hypotheses.closure_cap):
        if j in sub:
            p = eng.sequential_p(sub, k)
            if p > best:
                best, arg = p, sub
    return best, arg


def rejects(subset, k: int, mu: float, data: ObservedStatistics, design: Design, method: str) -> bool:
    """Whether the intersection test at level ``mu`` rejects by analysis ``k``.

    Evaluated directly from the bounds; the sequential p-value is the
    infimum of the ``mu`` where this holds.
    """
    sub = canonical_subset(subset, design.m)
    data.require(sub, k)
    w = design.weights(sub)
    if method == "bonferroni":
        bs = bonferroni_bounds(sub, mu, w, design.schedule, design.spending, design.mvn, through=k)
    elif method == "wpgsd":
        bs = wpgsd_bounds(sub, mu, w, design.schedule, design.spending, design.correlation, design.mvn, through=k)
    else:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    z = data.z[list(sub), :k].T
    return bool(np.any(z >= bs.bounds))


def closed_test_report(
    k: int,
    alpha: float,
    data: ObservedStatistics,
    design: Design,
    method: str,
    *,
    threads: int = 1,
    repeated: bool = False,
    engine: SequentialEngine | None = None,
) -> InferenceReport:
    """Closed test at analysis ``k`` with rejections carried forward.

    Every subset's sequential p-value is computed once.  A hypothesis
    rejected at an earlier analysis stays rejected.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    eng = _engine(design, data, method, engine)
    subsets = enumerate_closure(design.hypotheses, design.hypotheses.closure_cap)
    data.require(range(design.m), k)
    jobs = [(s, a) for a in range(1, k + 1) for s in subsets]
    if method == "bonferroni":
        jobs = [(( j,), a) for a in range(1, k + 1) for j in range(design.m)]
        run = lambda job: eng.elementary_level(job[0][0], job[1])  # noqa: E731
    else:
        run = lambda job: eng.crossing_level(*job)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, jobs))
    else:
        for job in jobs:
            run(job)

    rejected_at: dict[int, int] = {}
    adjusted: dict[int, float] = {}
    argmax: dict[int, Subset] = {}
    for a in range(1, k + 1):
        for j in range(design.m):
            adjusted[j], argmax[j] = adjusted_sequential_p(j, a, data, design, method, engine=eng)
            if adjusted[j] <= alpha and j not in rejected_at:
                rejected_at[j] = a
    subset_p = {s: eng.sequential_p(s, k) for s in subsets}
    rep = {j: repeated_p_value(j, k, data, design) for j in range(design.m)} if repeated else None
    return InferenceReport(
        analysis=k,
        method=method,
        alpha=alpha,
        labels=design.hypotheses.labels,
        subset_p=subset_p,
        adjusted=adjusted,
        argmax=argmax,
        rejected=frozenset(rejected_at),
        rejected_at=rejected_at,
        repeated=rep,
        weights={s: design.weights(s) for s in subsets},
        diagnostics=eng.diagnostics,
    )


def bonferroni_shortcut(k: int, alpha: float, data: ObservedStatistics, design: Design) -> list[int]:
    """Graph-based Bonferroni testing: reject, pass the weight on, repeat.

    Returns the rejected hypotheses in the order they fell.  Uses
    ``p_seq_j / w_j <= alpha`` against the current graph weights, which
    matches the sequential p of the Bonferroni intersection test.

    Raises:
        ValueError: if the strategy is not consonant, in which case the
            shortcut can disagree with the closed test.
    """
    if not is_consonant(design.strategy):
        raise ValueError("the Bonferroni shortcut requires a consonant weighting strategy")
    eng = SequentialEngine(design, data, "bonferroni")
    strategy = design.strategy
    rejected: list[int] = []
    # earlier analyses first so carried-forward rejections match the report
    for a in range(1, k + 1):
        progress = True
        while progress and len(rejected) < design.m:
            progress = False
            for pos, j in enumerate(strategy.indices):
                wj = strategy.initial_weights[pos]
                if wj <= 0:
                    continue
                p = min(eng.elementary_level(j, b) for b in range(1, a + 1)) / wj
                if p <= alpha and p <= MU_MAX:
                    rejected.append(j)
                    if len(strategy.indices) > 1:
                        strategy = update_after_rejection(strategy, j)
                    progress = True
                    break
    return rejected
