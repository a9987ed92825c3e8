"""Group sequential efficacy bounds for an intersection hypothesis.

Both methods share one recursion.  At analysis ``k`` the nominal levels of
the statistics in play are ``x_j = xi_k * w_j`` (bounds
``b_j = Phi^{-1}(1 - x_j)``) and the scalar ``xi_k`` is chosen so that the
probability of crossing by analysis ``k`` meets the cumulative spend.
Weighted Bonferroni runs the recursion once per hypothesis, on that
hypothesis' own statistics at level ``w_j(J) * mu``.  WPGSD runs it once
for the whole subset at level ``mu`` with the spend evaluated at the
smallest information fraction in the subset, so the correlation between
hypotheses is used.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtri

from .correlation import CorrelationModel, DesignSchedule, subset_ccs
from .gaussian import MVNSettings, NumericalError, TailProbability, crossing_increment
from .graph import canonical_subset
from .spending import SpendingFunction

METHODS = ("bonferroni", "wpgsd")
XI_XTOL = 1e-8
MAX_ITER = 200
# An MVN error above this (or above the requested tolerance, if larger)
# can move a p-value by more than the level search resolves.
BREACH_TOL = 1e-6


@dataclass
class Diagnostics:
    """Running totals of numerical work; mutable and merged across calls."""

    mvn_calls: int = 0
    max_mvn_error: float = 0.0
    root_solves: int = 0
    root_iterations: int = 0

    def record_mvn(self, error: float) -> None:
        self.mvn_calls += 1
        if error > self.max_mvn_error:
            self.max_mvn_error = error

    def record_root(self, iterations: int) -> None:
        self.root_solves += 1
        self.root_iterations += iterations

    def merge(self, other: "Diagnostics") -> None:
        self.mvn_calls += other.mvn_calls
        self.max_mvn_error = max(self.max_mvn_error, other.max_mvn_error)
        self.root_solves += other.root_solves
        self.root_iterations += other.root_iterations

    def as_dict(self) -> dict:
        return {
            "mvn_calls": self.mvn_calls,
            "max_mvn_error": self.max_mvn_error,
            "root_solves": self.root_solves,
            "root_iterations": self.root_iterations,
        }


@dataclass(frozen=True)
class BoundarySet:
    """Bounds ``Z~[j, k](mu, J)``; rows are analyses, columns follow ``subset``.

    ``crossing`` holds the achieved cumulative crossing probability: one row
    per hypothesis for Bonferroni, a single row for WPGSD.
    """

    method: str
    subset: tuple[int, ...]
    mu: float
    weights: np.ndarray
    bounds: np.ndarray
    crossing: np.ndarray
    targets: np.ndarray
    xi: np.ndarray | None = None
    diagnostics: Diagnostics = field(default_factory=Diagnostics)


def bound_from_level(x):
    """``Phi^{-1}(1 - x)``; ``x = 0`` maps to ``+inf`` and ``x = 1`` to ``-inf``."""
    return -ndtri(np.asarray(x, dtype=float))


def within_hypothesis_corr(fractions) -> np.ndarray:
    """Correlation ``sqrt(t_a / t_b)`` of one hypothesis' statistics, ``a <= b``."""
    t = np.asarray(fractions, dtype=float)
    lo = np.minimum.outer(t, t)
    hi = np.maximum.outer(t, t)
    return np.sqrt(lo / hi)


COARSE_FACTOR = 100.0


def new_crossing(prior, new, corr, mvn: MVNSettings, diag: Diagnostics, tol: float | None = None) -> TailProbability:
    """``P(prior statistics stay below, some new statistic crosses)``."""
    prior = np.asarray(prior, dtype=float).ravel()
    new = np.asarray(new, dtype=float).ravel()
    size = len(prior) + len(new)
    res = crossing_increment(
        np.concatenate([prior, new]),
        corr[:size, :size],
        len(prior),
        mvn.tol if tol is None else tol,
        seed=mvn.seed,
        max_dim=mvn.max_dim,
        validate=False,
    )
    if tol is None or tol <= mvn.tol:
        diag.record_mvn(res.error_bound)
        limit = max(mvn.tol, BREACH_TOL)
        if res.error_bound > limit:
            raise NumericalError(f"MVN error {res.error_bound:.2e} exceeds the tolerance {limit:.2e}")
    return res


def staged(fn, mvn: MVNSettings):
    """Wrap ``fn(x, tol) -> (value, error)`` for root finding.

    A coarse evaluation is kept when its error cannot flip the sign;
    otherwise the point is recomputed at the requested tolerance.
    """
    memo: dict[float, float] = {}

    def f(x: float) -> float:
        if x not in memo:
            value, err = fn(x, mvn.tol * COARSE_FACTOR)
            if abs(value) <= 2.0 * err:
                value, err = fn(x, mvn.tol)
            memo[x] = value
        return memo[x]

    return f


def solve_analysis(
    weights: np.ndarray,
    prior: np.ndarray,
    achieved: float,
    target: float,
    increment: float,
    corr: np.ndarray,
    mvn: MVNSettings,
    diag: Diagnostics,
) -> tuple[np.ndarray, float, float]:
    """Bounds at one analysis given the earlier ones.

    Finds ``xi`` with ``achieved + P(first crossing now) = target``.

    Returns:
        ``(bounds, xi, new_achieved)``.  An increment at or below the MVN
        tolerance, or nothing left to spend, gives infinite bounds.
    """
    L = len(weights)
    wmax = float(np.max(weights)) if L else 0.0
    if increment <= mvn.tol or wmax <= 0.0 or target <= achieved:
        return np.full(L, np.inf), 0.0, achieved
    hi = 1.0 / wmax
    if target >= 1.0:
        raise NumericalError(f"cumulative spend {target:.6g} is unreachable at this analysis")

    def excess(xi, tol):
        if xi == 0.0:
            return achieved - target, 0.0
        if xi == hi:
            # one bound is -inf: everything not yet crossed crosses now
            return 1.0 - target, 0.0
        r = new_crossing(prior, bound_from_level(np.minimum(xi * weights, 1.0)), corr, mvn, diag, tol)
        return achieved + r.value - target, r.error_bound

    f = staged(excess, mvn)
    xi, info = brentq(f, 0.0, hi, xtol=XI_XTOL, maxiter=MAX_ITER, full_output=True, disp=False)
    if not info.converged:
        raise NumericalError(f"inflation-factor search did not converge ({info.flag})")
    diag.record_root(info.iterations)
    value, _ = excess(xi, mvn.tol)
    return bound_from_level(np.minimum(xi * weights, 1.0)), float(xi), value + target


def run_recursion(
    weights: np.ndarray,
    targets: np.ndarray,
    corr: np.ndarray,
    mvn: MVNSettings,
    diag: Diagnostics,
    *,
    start: int = 0,
    prior_bounds: np.ndarray | None = None,
    achieved: float = 0.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bounds for analyses ``start..len(targets)-1``.

    ``prior_bounds`` (``start x L``) fixes the earlier analyses and
    ``achieved`` is their crossing probability.

    Returns:
        ``(bounds, xi, crossing)`` covering every analysis from 0.
    """
    K, L = len(targets), len(weights)
    bounds = np.full((K, L), np.inf)
    xi = np.zeros(K)
    crossing = np.zeros(K)
    if start:
        bounds[:start] = prior_bounds
        crossing[:start] = achieved
    prev_target = targets[start - 1] if start else 0.0
    for k in range(start, K):
        b, xi[k], achieved = solve_analysis(
            weights,
            bounds[:k],
            achieved,
            targets[k],
            targets[k] - prev_target,
            corr[: (k + 1) * L, : (k + 1) * L],
            mvn,
            diag,
        )
        bounds[k] = b
        crossing[k] = achieved
        prev_target = targets[k]
    return bounds, xi, crossing


def _check_inputs(subset, mu, weights, schedule: DesignSchedule, through):
    sub = canonical_subset(subset, schedule.m)
    if not 0.0 < mu < 1.0:
        raise ValueError(f"mu must lie in (0, 1), got {mu}")
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(sub),):
        raise ValueError(f"need {len(sub)} weights for subset {sub}, got {w.shape}")
    if np.any(w < 0) or w.sum() > 1 + 1e-12:
        raise ValueError(f"invalid subset weights {w.tolist()}")
    K = schedule.K if through is None else through
    if not 1 <= K <= schedule.K:
        raise ValueError(f"analysis {through} outside 1..{schedule.K}")
    return sub, w, K


def bonferroni_bounds(
    subset,
    mu: float,
    weights,
    schedule: DesignSchedule,
    spending: SpendingFunction,
    mvn: MVNSettings = MVNSettings(),
    through: int | None = None,
) -> BoundarySet:
    """Weighted Bonferroni bounds: each hypothesis alone at level ``w_j(J) * mu``."""
    sub, w, K = _check_inputs(subset, mu, weights, schedule, through)
    diag = Diagnostics()
    bounds = np.full((K, len(sub)), np.inf)
    crossing = np.zeros((len(sub), K))
    targets = np.zeros((len(sub), K))
    for col, (j, wj) in enumerate(zip(sub, w)):
        t = schedule.fractions[j, :K]
        targets[col] = [spending.cumulative(x, wj * mu) for x in t]
        if wj <= 0:
            continue
        b, _, c = run_recursion(np.ones(1), targets[col], within_hypothesis_corr(t), mvn, diag)
        bounds[:, col] = b[:, 0]
        crossing[col] = c
    return BoundarySet("bonferroni", sub, mu, w, bounds, crossing, targets, None, diag)


def min_fraction_spend(subset, schedule: DesignSchedule, spending: SpendingFunction, K: int) -> np.ndarray:
    """Spend fractions ``f(min_j t[j, k]; 1)`` for analyses ``1..K``."""
    tmin = schedule.fractions[list(subset), :K].min(axis=0)
    return np.array([spending.cumulative(x, 1.0) for x in tmin])


def wpgsd_bounds(
    subset,
    mu: float,
    weights,
    schedule: DesignSchedule,
    spending: SpendingFunction,
    ccs: CorrelationModel,
    mvn: MVNSettings = MVNSettings(),
    through: int | None = None,
) -> BoundarySet:
    """WPGSD bounds with nominal levels proportional to the subset weights.

    The joint crossing probability by analysis ``k`` matches the spend at
    the minimum information fraction across the subset.
    """
    sub, w, K = _check_inputs(subset, mu, weights, schedule, through)
    diag = Diagnostics()
    targets = mu * min_fraction_spend(sub, schedule, spending, K)
    bounds, xi, crossing = run_recursion(w, targets, subset_ccs(ccs, sub, K), mvn, diag)
    return BoundarySet("wpgsd", sub, mu, w, bounds, crossing[None, :], targets[None, :], xi, diag)
