"""Seedable samplers for every distribution the Gibbs sweeps draw from.

All samplers take an :class:`RngStream` (or a bare ``numpy.random.Generator``)
and are vectorised where the sweeps need it. Discrete samplers route through
:mod:`hsepm.kernels` with pre-drawn uniforms, so numba and numpy backends
agree draw for draw.
"""
from __future__ import annotations

import numpy as np
from scipy import special

from hsepm import kernels

TINY = np.finfo(np.float64).tiny
PROB_FLOOR = 1e-15
CRT_EXACT_MAX = 1_000_000
PARTITION_EXACT_MAX = 100_000
POISSON_NORMAL_MIN = 1e7
# counts are capped so that sums of a few of them stay inside int64
COUNT_MAX = 10**15


class DomainError(ValueError):
    """A distribution parameter is outside its support."""


class DegeneratePriorError(DomainError):
    """All concentration parameters of a Dirichlet are zero."""


class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    Streams with the same seed and different ids are statistically
    independent (they come from distinct ``SeedSequence`` spawn keys).
    """

    def __init__(self, seed: int = 0, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._key = (self.stream_id,)
        ss = np.random.SeedSequence(self.seed, spawn_key=self._key)
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def substream(self, *keys: int) -> "RngStream":
        child = RngStream.__new__(RngStream)
        child.seed = self.seed
        child.stream_id = self.stream_id
        child._key = self._key + tuple(int(k) for k in keys)
        ss = np.random.SeedSequence(self.seed, spawn_key=child._key)
        child.gen = np.random.Generator(np.random.PCG64(ss))
        return child

    def __repr__(self):
        return f"RngStream(seed={self.seed}, key={self._key})"


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.gen
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or Generator, got {type(rng).__name__}")


def clamp_prob(p):
    return np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)


# ---------------------------------------------------------------------------
# continuous
# ---------------------------------------------------------------------------


def sample_gamma(shape, rate, rng):
    """Gamma(shape, scale=1/rate), floored at the smallest positive normal."""
    shape = np.asarray(shape, dtype=np.float64)
    rate = np.asarray(rate, dtype=np.float64)
    if np.any(~(shape > 0)) or np.any(~(rate > 0)):
        raise DomainError("gamma shape and rate must be positive")
    draw = as_generator(rng).standard_gamma(shape) / rate
    draw = np.maximum(draw, TINY)
    return draw if draw.ndim else float(draw)


def sample_beta(a, b, rng):
    """Beta draw clamped into [1e-15, 1 - 1e-15] so log(1 - q) stays finite."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.any(~(a > 0)) or np.any(~(b > 0)):
        raise DomainError("beta parameters must be positive")
    draw = clamp_prob(as_generator(rng).beta(a, b))
    return draw if draw.ndim else float(draw)


def sample_log_gamma(shape, rng):
    """``log`` of a Gamma(shape, 1) draw, accurate for shapes far below one.

    Uses ``G(a) = G(a + 1) U^(1/a)`` so the log never underflows; the result
    is bounded below by ``-1e300``.
    """
    shape = np.asarray(shape, dtype=np.float64)
    if not shape.min(initial=1.0) > 0:
        raise DomainError("gamma shape must be positive")
    gen = as_generator(rng)
    small = shape < 1.0
    any_small = small.any()
    out = np.log(gen.standard_gamma(np.where(small, shape + 1.0, shape) if any_small else shape))
    if any_small:
        a = np.where(small, shape, 1.0)
        # clamp log(u) so the quotient stays above -1e300 without overflowing
        logu = np.maximum(np.log(gen.random(shape.shape)), -1e300 * a)
        out = np.where(small, out + logu / a, out)
    return out


def sample_neg_log1m_beta(a, b, rng):
    """``-log(1 - q)`` for ``q ~ Beta(a, b)``, computed without forming ``q``.

    When ``b`` is tiny ``q`` rounds to one in double precision while
    ``-log(1 - q)`` is still finite and large.
    """
    la = sample_log_gamma(a, rng)
    lb = sample_log_gamma(b, rng)
    return np.minimum(np.logaddexp(0.0, la - lb), 1e300)


def sample_dirichlet(concentrations, rng):
    """Dirichlet draw supporting zero concentrations (those entries are 0).

    Entries may be exactly zero after underflow when concentrations are tiny.
    """
    alpha = np.asarray(concentrations, dtype=np.float64)
    if alpha.ndim != 1:
        raise DomainError("concentrations must be a vector")
    if np.any(alpha < 0) or not np.all(np.isfinite(alpha)):
        raise DomainError("concentrations must be finite and nonnegative")
    live = alpha > 0
    if not live.any():
        raise DegeneratePriorError("all Dirichlet concentrations are zero")
    out = np.zeros_like(alpha)
    if live.sum() == 1:
        out[live] = 1.0
        return out
    # normalise in log space so tiny concentrations still pick a vertex
    lg = sample_log_gamma(alpha[live], rng)
    g = np.exp(lg - lg.max())
    out[live] = g / g.sum()
    return out


def sample_dirichlet_columns(concentrations, rng) -> np.ndarray:
    """One Dirichlet draw per column of a nonnegative concentration matrix."""
    alpha = np.asarray(concentrations, dtype=np.float64)
    if alpha.ndim != 2:
        raise DomainError("concentrations must be a matrix")
    if np.any(alpha < 0) or not np.all(np.isfinite(alpha)):
        raise DomainError("concentrations must be finite and nonnegative")
    live = alpha > 0
    if not live.any(axis=0).all():
        raise DegeneratePriorError("a column has all Dirichlet concentrations zero")
    lg = np.where(live, sample_log_gamma(np.where(live, alpha, 1.0), rng), -np.inf)
    g = np.exp(lg - lg.max(axis=0))
    return g / g.sum(axis=0)


# ---------------------------------------------------------------------------
# discrete
# ---------------------------------------------------------------------------


def truncated_poisson_many(lam, rng):
    """Vector of zero-truncated Poisson draws, one per rate.

    Rates above ``POISSON_NORMAL_MIN`` use a normal approximation and are
    capped at ``COUNT_MAX``.
    """
    gen = as_generator(rng)
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise DomainError("Poisson rate must be finite and nonnegative")
    u = gen.random(lam.shape[0])
    big = lam > kernels.ZTP_INVERSION_MAX
    if not big.any():
        return kernels.ztp_inverse(lam, u)
    small_lam = np.where(big, 0.0, lam)
    out = kernels.ztp_inverse(small_lam, u)
    idx = np.flatnonzero(big & (lam <= POISSON_NORMAL_MIN))
    draws = gen.poisson(lam[idx])
    zero = draws == 0
    while zero.any():
        draws[zero] = gen.poisson(lam[idx[zero]])
        zero = draws == 0
    out[idx] = draws
    huge = np.flatnonzero(lam > POISSON_NORMAL_MIN)
    if huge.shape[0]:
        # zero truncation is immaterial here and the normal approximation is tight
        lh = np.minimum(lam[huge], float(COUNT_MAX))
        out[huge] = np.clip(np.rint(gen.normal(lh, np.sqrt(lh))), 1, COUNT_MAX).astype(np.int64)
    return out


def sample_truncated_poisson(lam, rng):
    """Poisson(lam) conditioned on being >= 1; returns 1 for lam < 1e-10."""
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    out = truncated_poisson_many(lam_arr.ravel(), rng).reshape(lam_arr.shape)
    return int(out[0]) if np.ndim(lam) == 0 else out


def crt_many(counts, concentrations, rng):
    """Vector of CRT(count, concentration) table counts."""
    gen = as_generator(rng)
    counts = np.ascontiguousarray(counts, dtype=np.int64).ravel()
    shapes = np.ascontiguousarray(np.broadcast_to(concentrations, counts.shape), dtype=np.float64)
    if counts.min(initial=0) < 0:
        raise DomainError("CRT count must be nonnegative")
    if np.where(counts > 0, shapes, 1.0).min(initial=1.0) <= 0:
        raise DomainError("CRT concentration must be positive")
    huge = counts > CRT_EXACT_MAX
    any_huge = huge.any()
    exact_counts = np.where(huge, 0, counts) if any_huge else counts
    out = kernels.crt(exact_counts, shapes, gen.random(int(exact_counts.sum())))
    if any_huge:
        idx = np.flatnonzero(huge)
        out[idx] = _crt_normal(counts[idx], shapes[idx], gen)
    return out


def _crt_normal(n, a, gen):
    mean = a * (special.digamma(a + n) - special.digamma(a))
    var = mean - a * a * (special.polygamma(1, a) - special.polygamma(1, a + n))
    draw = np.rint(gen.normal(mean, np.sqrt(np.maximum(var, 0.0))))
    return np.clip(draw, 1, n).astype(np.int64)


def sample_crt(count, concentration, rng):
    """Number of occupied tables after ``count`` customers at concentration ``a``."""
    if np.ndim(count) == 0:
        if count < 0:
            raise DomainError("CRT count must be nonnegative")
        if count == 0:
            return 0
        return int(crt_many(np.array([count]), np.array([concentration], dtype=float), rng)[0])
    shape = np.shape(count)
    return crt_many(count, concentration, rng).reshape(shape)


def partition_many(totals, weights, rng):
    """Row-wise multinomial partition of integer totals by nonnegative weights.

    Rows whose weights are all zero but whose total is positive place each unit
    uniformly at random (the all-tied argmax). Rows above
    ``PARTITION_EXACT_MAX`` units use a single multinomial draw.
    """
    gen = as_generator(rng)
    totals = np.ascontiguousarray(totals, dtype=np.int64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    huge = totals > PARTITION_EXACT_MAX
    if not huge.any():
        return kernels.partition(weights, totals, gen.random(int(totals.sum())))
    small = np.where(huge, 0, totals)
    out = kernels.partition(weights, small, gen.random(int(small.sum())))
    for e in np.flatnonzero(huge):
        w = weights[e]
        p = w / w.sum() if w.sum() > 0 else np.full(w.shape[0], 1.0 / w.shape[0])
        out[e] = gen.multinomial(totals[e], p)
    return out


def sample_multinomial_partition(total, weights, rng):
    w = np.asarray(weights, dtype=np.float64)
    if total < 0:
        raise DomainError("total must be nonnegative")
    if np.any(w < 0):
        raise DomainError("weights must be nonnegative")
    if total > 0 and not w.sum() > 0:
        raise DomainError("positive total with all-zero weights")
    return partition_many(np.array([total]), w[None, :], rng)[0]


def sample_sumlog(tables, p, rng):
    """Sum of ``tables`` iid logarithmic(p) draws (each >= 1)."""
    if not 0.0 < p < 1.0:
        raise DomainError("logarithmic parameter must lie in (0, 1)")
    if tables < 1:
        raise DomainError("tables must be >= 1")
    gen = as_generator(rng)
    if p < 1e-12:
        return int(tables)
    return int(gen.logseries(p, size=int(tables)).sum())


def sample_bernoulli(p, rng):
    return as_generator(rng).random(np.shape(p)) < p


def slice_sample(logpdf, x0: float, rng, width: float = 1.0, max_steps: int = 50) -> float:
    """One univariate slice-sampling update with stepping out and shrinkage."""
    gen = as_generator(rng)
    y = logpdf(x0) - gen.exponential()
    left = x0 - width * gen.random()
    right = left + width
    j = int(gen.random() * max_steps)
    k = max_steps - 1 - j
    while j > 0 and logpdf(left) > y:
        left -= width
        j -= 1
    while k > 0 and logpdf(right) > y:
        right += width
        k -= 1
    while True:
        x1 = left + (right - left) * gen.random()
        if logpdf(x1) > y:
            return float(x1)
        if x1 < x0:
            left = x1
        else:
            right = x1
