"""Normal distribution helpers and multivariate normal crossing probabilities.

The multivariate part integrates the rectangle probability
``P(Z_1 < b_1, ..., Z_d < b_d)`` with the separation-of-variables transform
(variables reordered so the most constrained come first) and a randomly
shifted rank-1 lattice rule.  Generating vectors come from a fast
component-by-component search; a baker's transform periodizes the
integrand.  The spread of the shifted replicates gives the error estimate.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import fft, ifft
from scipy.special import ndtr, ndtri

DEFAULT_TOL = 1e-7
DEFAULT_SEED = 20231101
DEFAULT_MAX_DIM = 20

_N_SHIFTS = 10
# Prime lattice sizes, roughly doubling.
_LATTICE_SIZES = (1021, 2039, 4093, 8191, 16381, 32749, 65521, 131071)
_CBC_DECAY = 0.8
_PSD_REPAIR = 1e-9
_SYM_TOL = 1e-12
# Conditional variances below this are treated as exact linear dependence.
_DEGENERATE_VAR = 1e-14
_DEGENERATE_COEF = 1e-10
_ERROR_SCALE = 3.0


class NumericalError(RuntimeError):
    """Raised when a numerical routine cannot reach its tolerance."""


@dataclass(frozen=True)
class TailProbability:
    value: float
    error_bound: float


@dataclass(frozen=True)
class MVNSettings:
    tol: float = DEFAULT_TOL
    seed: int = DEFAULT_SEED
    max_dim: int = DEFAULT_MAX_DIM

    def __post_init__(self):
        if not (self.tol > 0):
            raise ValueError(f"mvn.tol must be positive, got {self.tol}")
        if self.max_dim < 1:
            raise ValueError(f"mvn.max_dim must be at least 1, got {self.max_dim}")


def normal_cdf(x):
    """Standard normal CDF; accepts scalars or arrays."""
    return ndtr(x)


def normal_sf(x):
    """Standard normal upper tail, accurate far into the tail."""
    return ndtr(-np.asarray(x, dtype=float))


def normal_quantile(p):
    """Inverse standard normal CDF.

    Raises:
        ValueError: if any ``p`` is outside the open interval (0, 1).
    """
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0.0) | ~(arr < 1.0)):
        raise ValueError(f"normal_quantile needs p in (0, 1), got {p!r}")
    out = ndtri(arr)
    return float(out) if out.ndim == 0 else out


def z_from_p(p):
    """One-sided nominal p-value to Z statistic, ``Z = Phi^{-1}(1 - p)``."""
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0.0) | ~(arr < 1.0)):
        raise ValueError(f"p-values must lie in (0, 1), got {p!r}")
    out = -ndtri(arr)
    return float(out) if out.ndim == 0 else out


def p_from_z(z):
    out = normal_sf(z)
    return float(out) if np.ndim(out) == 0 else out


def check_correlation(corr, *, name: str = "correlation") -> np.ndarray:
    """Validate a correlation matrix and repair tiny negative eigenvalues.

    Eigenvalues in ``(-1e-9, 0)`` are clipped to zero and the diagonal is
    rescaled back to one; anything more negative is rejected.
    """
    c = np.array(corr, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError(f"{name} has non-finite entries")
    if np.max(np.abs(c - c.T), initial=0.0) > _SYM_TOL:
        raise ValueError(f"{name} is not symmetric")
    if np.max(np.abs(np.diag(c) - 1.0), initial=0.0) > _SYM_TOL:
        raise ValueError(f"{name} must have a unit diagonal")
    if np.any(np.abs(c) > 1.0 + _SYM_TOL):
        raise ValueError(f"{name} has entries outside [-1, 1]")
    c = 0.5 * (c + c.T)
    np.fill_diagonal(c, 1.0)
    c = np.clip(c, -1.0, 1.0)
    if c.shape[0] == 0:
        return c
    vals, vecs = np.linalg.eigh(c)
    lo = vals.min()
    if lo < -_PSD_REPAIR:
        raise ValueError(
            f"{name} is not positive semidefinite (smallest eigenvalue {lo:.3g})"
        )
    if lo < 0.0:
        vals = np.clip(vals, 0.0, None)
        c = (vecs * vals) @ vecs.T
        d = np.sqrt(np.diag(c))
        c = c / np.outer(d, d)
        c = 0.5 * (c + c.T)
        np.fill_diagonal(c, 1.0)
    return c


def _ordered_cholesky(lower: np.ndarray, upper: np.ndarray, corr: np.ndarray):
    """Cholesky factor with the Gibson-Glasbey-Elston variable ordering.

    At each step the variable with the narrowest conditional interval goes
    next.  Returns permuted limits and the lower-triangular factor; pivots
    that collapse to zero (singular input) keep a zero diagonal.
    """
    d = len(upper)
    a = lower.copy()
    b = upper.copy()
    c = corr.copy()
    L = np.zeros((d, d))
    y = np.zeros(d)
    for i in range(d):
        best, best_j = np.inf, i
        for j in range(i, d):
            s = np.sqrt(max(c[j, j] - L[j, :i] @ L[j, :i], 0.0))
            m = L[j, :i] @ y[:i]
            width = ndtr((b[j] - m) / s) - ndtr((a[j] - m) / s) if s * s > _DEGENERATE_VAR else 1.0
            if width < best:
                best, best_j = width, j
        if best_j != i:
            for arr in (a, b):
                arr[[i, best_j]] = arr[[best_j, i]]
            c[[i, best_j]] = c[[best_j, i]]
            c[:, [i, best_j]] = c[:, [best_j, i]]
            L[[i, best_j]] = L[[best_j, i]]
        s2 = c[i, i] - L[i, :i] @ L[i, :i]
        if s2 <= _DEGENERATE_VAR:
            continue
        L[i, i] = np.sqrt(s2)
        for j in range(i + 1, d):
            L[j, i] = (c[j, i] - L[j, :i] @ L[i, :i]) / L[i, i]
        # Conditional mean of the truncated variable drives the next choice.
        m = L[i, :i] @ y[:i]
        lo, hi = (a[i] - m) / L[i, i], (b[i] - m) / L[i, i]
        mass = ndtr(hi) - ndtr(lo)
        if mass > 1e-300:
            y[i] = (_pdf(lo) - _pdf(hi)) / mass
        else:
            y[i] = lo if np.isfinite(lo) else hi
    return a, b, L


def _pdf(x):
    return np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi) if np.isfinite(x) else 0.0


def _primitive_root(n: int) -> int:
    phi = n - 1
    factors, rest, p = [], phi, 2
    while p * p <= rest:
        if rest % p == 0:
            factors.append(p)
            while rest % p == 0:
                rest //= p
        p += 1
    if rest > 1:
        factors.append(rest)
    g = 2
    while any(pow(g, phi // f, n) == 1 for f in factors):
        g += 1
    return g


def _korobov_kernel(x):
    return 2.0 * np.pi**2 * (x * x - x + 1.0 / 6.0)


@lru_cache(maxsize=None)
def lattice_generator(n: int, dim: int = DEFAULT_MAX_DIM) -> np.ndarray:
    """Generating vector of a rank-1 lattice with prime size ``n``.

    Fast component-by-component construction for the weighted Korobov space
    of smoothness 2 with product weights ``0.8**j``.  The search over each
    component is a circular convolution over the multiplicative group mod
    ``n`` and runs through the FFT.
    """
    g = _primitive_root(n)
    g_inv = pow(g, n - 2, n)
    perm = np.empty(n - 1, dtype=np.int64)      # g^j mod n
    inv_perm = np.empty(n - 1, dtype=np.int64)  # g^-j mod n
    perm[0] = inv_perm[0] = 1
    for j in range(1, n - 1):
        perm[j] = perm[j - 1] * g % n
        inv_perm[j] = inv_perm[j - 1] * g_inv % n
    fft_omega = fft(_korobov_kernel(perm / n))

    k = np.arange(n)
    z = np.ones(dim, dtype=np.int64)
    prod = 1.0 + _korobov_kernel(k / n)
    for s in range(1, dim):
        # err[i] is the criterion for candidate z = g^i
        err = ifft(fft_omega * fft(prod[inv_perm])).real
        z[s] = perm[int(np.argmin(err))]
        prod *= 1.0 + _CBC_DECAY**s * _korobov_kernel((k * z[s] % n) / n)
    return z


def _degenerate_rows(L: np.ndarray) -> list[list[tuple[int, float]]]:
    """Rows with no own pivot, grouped by their last pivot column.

    Such a statistic is an exact linear function of earlier whitened
    variables; its limits are folded into that column's interval so the
    integrand stays continuous.
    """
    d = len(L)
    pivots = L.diagonal() > 0
    extra = [[] for _ in range(d)]
    for r in np.flatnonzero(~pivots):
        cols = [k for k in range(r) if pivots[k] and abs(L[r, k]) > _DEGENERATE_COEF]
        if cols:
            extra[cols[-1]].append((int(r), float(L[r, cols[-1]])))
    return extra


def _limits(k, a, b, L, y, extra, npts):
    """Lower and upper cdf values of whitened variable ``k`` given ``y[:, :k]``."""
    rows = [(k, L[k, k])] + extra[k]
    lo = np.full(npts, -np.inf)
    hi = np.full(npts, np.inf)
    for r, coef in rows:
        m = y[:, :k] @ L[r, :k] if k else np.zeros(npts)
        s, t = (a[r] - m) / coef, (b[r] - m) / coef
        if coef < 0:
            s, t = t, s
        np.maximum(lo, s, out=lo)
        np.minimum(hi, t, out=hi)
    hi = np.maximum(hi, lo)
    # infinite limits skip a normal cdf evaluation
    clo = ndtr(lo) if np.any(lo > -np.inf) else np.zeros(npts)
    chi = ndtr(hi) if np.any(hi < np.inf) else np.ones(npts)
    return clo, chi - clo


def _rectangle_estimates(a, b, L, n_points: int, shifts: np.ndarray) -> np.ndarray:
    """Per-shift lattice estimates of ``P(a < Z < b)`` for a factored problem."""
    n_shifts = len(shifts)
    extra = _degenerate_rows(L)
    cols = [k for k in range(len(b)) if L[k, k] > 0]
    if len(cols) == 1:
        lo, e = _limits(0, a, b, L, np.zeros((1, 0)), extra, 1)
        return np.full(n_shifts, e[0])
    dim = len(cols) - 1
    z = lattice_generator(n_points)[:dim]
    base = (np.arange(n_points)[:, None] * z[None, :] % n_points) / n_points
    x = np.mod(base[None, :, :] + shifts[:, None, :dim], 1.0).reshape(-1, dim)
    x = np.abs(2.0 * x - 1.0)
    npts = x.shape[0]
    y = np.zeros((npts, len(b)))
    lo, e = _limits(0, a, b, L, y, extra, npts)
    f = e.copy()
    for step, k in enumerate(cols[1:]):
        u = np.clip(lo + x[:, step] * e, 1e-300, 1.0 - 1e-16)
        y[:, cols[step]] = ndtri(u)
        lo, e = _limits(k, a, b, L, y, extra, npts)
        f *= e
    return f.reshape(n_shifts, n_points).mean(axis=1)


@lru_cache(maxsize=64)
def _shifts(seed: int) -> np.ndarray:
    shifts = np.random.default_rng(seed).random((_N_SHIFTS, DEFAULT_MAX_DIM))
    shifts.flags.writeable = False
    return shifts


def crossing_increment(
    bounds,
    corr,
    n_prior: int,
    tol: float = DEFAULT_TOL,
    *,
    seed: int = DEFAULT_SEED,
    max_dim: int = DEFAULT_MAX_DIM,
    validate: bool = True,
) -> TailProbability:
    """Probability of a first crossing among the statistics after ``n_prior``.

    Returns ``P(Z_i < b_i for i < n_prior, Z_i >= b_i for some i >= n_prior)``.
    The event is split by which new statistic crosses first, so every piece
    is a rectangle containing one upper tail; the absolute error of each
    piece then scales with its (small) probability.  With ``n_prior = 0``
    this is the plain union crossing probability.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = np.asarray(bounds, dtype=float).ravel()
    c = check_correlation(corr) if validate else np.asarray(corr, dtype=float)
    if c.shape != (len(b), len(b)):
        raise ValueError(f"bounds length {len(b)} does not match correlation {c.shape}")
    if np.any(np.isnan(b)):
        raise ValueError("bounds contain NaN")
    if not 0 <= n_prior <= len(b):
        raise ValueError("n_prior out of range")
    prior = b[:n_prior]
    if np.any(prior == -np.inf):
        return TailProbability(0.0, 0.0)
    # Infinite bounds constrain nothing and can never be crossed.
    keep = np.flatnonzero(np.isfinite(b) | (np.arange(len(b)) >= n_prior) & (b == -np.inf))
    n_prior = int(np.sum(keep < n_prior))
    b, c = b[keep], c[np.ix_(keep, keep)]
    d = len(b)
    if d == n_prior:
        return TailProbability(0.0, 0.0)
    if d > max_dim:
        raise ValueError(f"dimension {d} exceeds the configured maximum {max_dim}")

    def rect(lo, hi):
        k = len(hi)
        if k == 1:
            return lo, hi, np.ones((1, 1))
        return _ordered_cholesky(lo, hi, c[:k, :k])

    def first_crossings(start, stop):
        # P(all before i below, Z_i crosses) for i in start..stop-1
        out = []
        for i in range(start, stop):
            if i > start and b[i - 1] == -np.inf:
                break  # an earlier statistic crosses surely
            lo = np.full(i + 1, -np.inf)
            hi = b[: i + 1].copy()
            lo[i], hi[i] = b[i], np.inf
            out.append(rect(lo, hi))
        return out

    # Two exact representations of the same probability:
    #   direct:     sum of first crossings among the new statistics;
    #   complement: 1 - P(some prior crossing) - P(nothing crosses).
    # Absolute error scales with the pieces, so the pilot keeps whichever
    # has the smaller pieces.
    direct = (0.0, [(1.0, t) for t in first_crossings(n_prior, d)])
    complement = [(-1.0, t) for t in first_crossings(0, n_prior)]
    if not np.any(b[n_prior:] == -np.inf):
        complement.append((-1.0, rect(np.full(d, -np.inf), b.copy())))
    candidates = [direct, (1.0, complement)]

    shifts = _shifts(seed)
    best = None
    for const, terms in candidates:
        state = _Refinement(const, terms, shifts)
        if state.exact:
            return TailProbability(float(np.clip(state.value, 0.0, 1.0)), 0.0)
        if best is None or state.error < best.error:
            best = state
    best.refine(tol)
    return TailProbability(float(np.clip(best.value, 0.0, 1.0)), float(best.error))


class _Refinement:
    """Signed sum of rectangle probabilities with per-term lattice sizes.

    Each step refines whichever term currently dominates the error, so
    small terms settle on small lattices.
    """

    def __init__(self, const, terms, shifts):
        self.const = const
        self.signs = np.array([sgn for sgn, _ in terms])
        self.terms = [t for _, t in terms]
        self.shifts = shifts
        self.level = [0] * len(self.terms)
        self.means = np.zeros(len(self.terms))
        self.errs = np.zeros(len(self.terms))
        self.exact = all(len(t[0]) == 1 for t in self.terms)
        for i in range(len(self.terms)):
            self._evaluate(i)

    def _evaluate(self, i):
        lo, hi, L = self.terms[i]
        est = _rectangle_estimates(lo, hi, L, _LATTICE_SIZES[self.level[i]], self.shifts)
        self.means[i] = est.mean()
        self.errs[i] = 0.0 if len(lo) == 1 else _ERROR_SCALE * est.std(ddof=1) / np.sqrt(len(est))

    @property
    def value(self) -> float:
        return self.const + float(self.signs @ self.means)

    @property
    def error(self) -> float:
        return float(np.sqrt(np.sum(self.errs**2)))

    def refine(self, tol):
        while self.error > tol:
            open_ = [i for i in range(len(self.terms)) if self.level[i] + 1 < len(_LATTICE_SIZES)]
            if not open_:
                return
            i = max(open_, key=lambda t: self.errs[t])
            if self.errs[i] == 0.0:
                return
            self.level[i] += 1
            self._evaluate(i)


def union_crossing_probability(
    bounds,
    corr,
    tol: float = DEFAULT_TOL,
    *,
    seed: int = DEFAULT_SEED,
    max_dim: int = DEFAULT_MAX_DIM,
    validate: bool = True,
) -> TailProbability:
    """Probability that at least one standard normal statistic crosses its bound.

    Computes ``P(Z_1 >= b_1 or ... or Z_d >= b_d)`` for jointly standard
    normal ``Z`` with correlation ``corr``.  Infinite bounds are dropped.

    Args:
        bounds: Upper bounds, one per statistic; ``+inf`` allowed.
        corr: Correlation matrix of the statistics.
        tol: Target absolute error.
        seed: Seed for the random lattice shifts.
        max_dim: Largest dimension accepted after dropping infinite bounds.
        validate: Skip the symmetry/PSD check when the caller already did it.

    Returns:
        TailProbability with the estimate and its error bound.
    """
    return crossing_increment(
        bounds, corr, 0, tol, seed=seed, max_dim=max_dim, validate=validate
    )
