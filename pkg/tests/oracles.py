"""Independent reference computations used only by the tests."""

import numpy as np
from scipy.special import ndtri

from adjseq import (
    CorrelationModel,
    Design,
    EventTable,
    HSDSpending,
    HypothesisSet,
    MVNSettings,
    ObservedStatistics,
    WeightingStrategy,
    rejects,
)


def mc_union(bounds, corr, n_draws, rng, chunk=1_000_000):
    """Plain Monte Carlo ``P(some Z_i >= b_i)`` and its standard error."""
    bounds = np.asarray(bounds, dtype=float)
    factor = np.linalg.cholesky(corr)
    hits = 0
    done = 0
    while done < n_draws:
        n = min(chunk, n_draws - done)
        z = rng.standard_normal((n, len(bounds))) @ factor.T
        hits += int(np.any(z >= bounds, axis=1).sum())
        done += n
    p = hits / n_draws
    return p, np.sqrt(p * (1 - p) / n_draws)


def grid_sequential_p(subset, k, data, design, method, levels=(1e-2, 1e-3, 1e-4)):
    """Smallest grid point rejecting, refined level by level.

    Exact for a monotone indicator: each pass scans the cell the previous
    pass bracketed.  Returns 1.0 if nothing below 1 rejects.
    """
    lo, hi = 0.0, 1.0
    for step in levels:
        grid = np.arange(lo + step, hi + step / 2, step)
        grid = grid[grid < 1.0]
        hit = next((mu for mu in grid if rejects(subset, k, float(mu), data, design, method)), None)
        if hit is None:
            if hi >= 1.0:
                return 1.0
            hit = hi
        lo, hi = max(hit - step, 0.0), hit
    return hi


def random_correlation(dim, rng):
    """Random correlation matrix from a random factor model."""
    a = rng.normal(size=(dim, dim + 2))
    c = a @ a.T
    d = np.sqrt(np.diag(c))
    c = c / np.outer(d, d)
    np.fill_diagonal(c, 1.0)
    return c


def random_strategy(m, rng):
    w = rng.dirichlet(np.ones(m)) * rng.choice([1.0, 1.0, 0.9])
    g = np.zeros((m, m))
    for i in range(m):
        if m > 1:
            row = rng.dirichlet(np.ones(m - 1)) * rng.choice([1.0, 1.0, 0.5])
            g[i, [j for j in range(m) if j != i]] = row
    return w, g


def random_events(m, K, rng):
    """Counts built from disjoint subject cells, so the correlation is valid."""
    n_cells = 4
    cells = np.cumsum(rng.integers(20, 120, size=(n_cells, K)), axis=1)
    masks = set()
    while len(masks) < m:
        mask = tuple(int(x) for x in rng.integers(0, 2, n_cells))
        if any(mask):
            masks.add(mask)
    masks = [np.array(x, bool) for x in sorted(masks)]
    counts = [cells[mk].sum(axis=0).tolist() for mk in masks]
    overlaps = {
        (i1, i2): cells[masks[i1] & masks[i2]].sum(axis=0).tolist()
        for i1 in range(m)
        for i2 in range(i1 + 1, m)
    }
    return EventTable.from_pairwise(counts, overlaps)


def random_design(rng, m=None, K=None, mvn=MVNSettings()):
    m = m or int(rng.integers(1, 4))
    K = K or int(rng.integers(1, 3))
    w, g = random_strategy(m, rng)
    gamma = float(rng.choice([-4.0, -2.0, 1.0, 2.0]))
    events = random_events(m, K, rng)
    design = Design(
        HypothesisSet.numbered(m),
        WeightingStrategy(w, g),
        HSDSpending(gamma),
        CorrelationModel.from_events(events),
        mvn,
    )
    z = rng.normal(2.3, 0.6, size=(m, K))
    return design, ObservedStatistics(z)


def p_to_z(p):
    return -ndtri(np.asarray(p, dtype=float))
