"""Monte Carlo check of familywise error and power.

Draws ``Z`` directly on the normal scale from the design correlation and
applies the closed test at level ``alpha`` at every analysis.  Bounds for
every subset are computed once at ``mu = alpha``: the intersection over ``J``
is rejected by analysis ``k`` iff a statistic crossed its bound, which is
the same event as ``p_seq(J, k) <= alpha``.  Hypothesis ``j`` is rejected
at the latest first-crossing time over the subsets that contain it, so
rejections carry forward automatically.

Replications are drawn in fixed-size chunks, chunk ``c`` seeded from
``SeedSequence([seed, c])``; results do not depend on the thread count, and
two methods run with the same seed see the same draws.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .boundaries import bonferroni_bounds, wpgsd_bounds, METHODS
from .graph import enumerate_closure
from .inference import Design

CHUNK = 10_000


@dataclass(frozen=True)
class SimulationPlan:
    design: Design
    n_reps: int
    seed: int = 0
    method: str = "wpgsd"
    alpha: float = 0.025
    effects: np.ndarray | None = None  # (m, K) mean of Z; None is the global null

    def __post_init__(self):
        if int(self.n_reps) != self.n_reps or self.n_reps < 1:
            raise ValueError(f"n_reps must be a positive integer, got {self.n_reps}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        m, K = self.design.m, self.design.K
        eff = np.zeros((m, K)) if self.effects is None else np.array(self.effects, dtype=float)
        if eff.shape != (m, K):
            raise ValueError(f"effects must be {m}x{K}, got {eff.shape}")
        if not np.all(np.isfinite(eff)):
            raise ValueError("effects must be finite")
        object.__setattr__(self, "effects", eff)


@dataclass(frozen=True)
class SimulationResult:
    fwer: float
    fwer_se: float
    power: np.ndarray  # per-hypothesis rejection rate by the final analysis
    power_se: np.ndarray
    n_reps: int
    seed: int
    method: str
    alpha: float

    def as_dict(self) -> dict:
        return {
            "fwer": self.fwer,
            "fwer_se": self.fwer_se,
            "power": self.power.tolist(),
            "power_se": self.power_se.tolist(),
            "n_reps": self.n_reps,
            "seed": self.seed,
            "method": self.method,
            "alpha": self.alpha,
        }


def closure_bounds(design: Design, alpha: float, method: str) -> dict[tuple, np.ndarray]:
    """``K x |J|`` bounds at level ``alpha`` for every subset."""
    out = {}
    for sub in enumerate_closure(design.hypotheses, design.hypotheses.closure_cap):
        w = design.weights(sub)
        if method == "bonferroni":
            bs = bonferroni_bounds(sub, alpha, w, design.schedule, design.spending, design.mvn)
        else:
            bs = wpgsd_bounds(sub, alpha, w, design.schedule, design.spending, design.correlation, design.mvn)
        out[sub] = bs.bounds
    return out


def correlated_normals(corr: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` draws of a standard normal vector with correlation ``corr``."""
    try:
        factor = np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        # singular but PSD: symmetric square root
        vals, vecs = np.linalg.eigh(corr)
        factor = vecs * np.sqrt(np.clip(vals, 0.0, None))
    return rng.standard_normal((n, corr.shape[0])) @ factor.T


def rejection_times(z: np.ndarray, bounds: dict[tuple, np.ndarray], m: int, K: int) -> np.ndarray:
    """Analysis (1-based) at which each hypothesis is rejected; ``K + 1`` if never.

    ``z`` has shape ``(n, K, m)``.
    """
    n = z.shape[0]
    times = np.ones((n, m), dtype=np.int64)
    for sub, b in bounds.items():
        crossed = np.any(z[:, :, list(sub)] >= b[None, :, :], axis=2)  # (n, K)
        first = np.where(crossed.any(axis=1), crossed.argmax(axis=1) + 1, K + 1)
        for j in sub:
            np.maximum(times[:, j], first, out=times[:, j])
    return times


def _run_chunk(plan: SimulationPlan, bounds, chunk: int, size: int):
    d = plan.design
    rng = np.random.default_rng(np.random.SeedSequence([plan.seed, chunk]))
    draws = correlated_normals(d.correlation.matrix, size, rng).reshape(size, d.K, d.m)
    z = draws + plan.effects.T[None, :, :]
    rejected = rejection_times(z, bounds, d.m, d.K) <= d.K
    true_null = np.all(plan.effects == 0, axis=1)
    false_any = np.any(rejected[:, true_null], axis=1) if true_null.any() else np.zeros(size, bool)
    return int(false_any.sum()), rejected.sum(axis=0)


def simulate(plan: SimulationPlan, threads: int = 1) -> SimulationResult:
    """Estimate FWER (over the hypotheses with zero effect) and per-hypothesis power.

    A hypothesis counts as a true null when its effect is zero at every
    analysis.
    """
    bounds = closure_bounds(plan.design, plan.alpha, plan.method)
    sizes = [min(CHUNK, plan.n_reps - start) for start in range(0, plan.n_reps, CHUNK)]
    work = lambda c: _run_chunk(plan, bounds, c, sizes[c])  # noqa: E731
    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    else:
        parts = [work(c) for c in range(len(sizes))]
    n = plan.n_reps
    fwer = sum(p[0] for p in parts) / n
    power = np.sum([p[1] for p in parts], axis=0) / n
    return SimulationResult(
        fwer=fwer,
        fwer_se=float(np.sqrt(fwer * (1 - fwer) / n)),
        power=power,
        power_se=np.sqrt(power * (1 - power) / n),
        n_reps=n,
        seed=plan.seed,
        method=plan.method,
        alpha=plan.alpha,
    )
