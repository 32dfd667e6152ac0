"""Two-level crossing key generation with a censoring guard band.

Each coherence-block observation is unfolded into two real samples.  A
sample index contributes a key bit only if both parties' samples fall
outside the guard band ``(q_minus, q_plus)``; the bit is 1 above the band
and 0 below it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gammaln, owens_t
from scipy.stats import binom, norm

from .channel import check_los, nlos_variance
from .pmf import Pmf

QUAD_TOL = 1e-10
W_TOL = 1e-4


@dataclass(frozen=True)
class GuardBand:
    q_minus: float
    q_plus: float

    def __post_init__(self):
        if not self.q_minus <= self.q_plus:
            raise ValueError("guard band needs q_minus <= q_plus")

    @classmethod
    def symmetric(cls, centre: float, half_width: float) -> "GuardBand":
        return cls(centre - half_width, centre + half_width)


@dataclass(frozen=True)
class BitKey:
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8).ravel()
        if bits.size and bits.max() > 1:
            raise ValueError("bits must be 0/1")
        object.__setattr__(self, "bits", bits)

    @property
    def length(self) -> int:
        return int(self.bits.size)

    def __len__(self):
        return self.length

    def __eq__(self, other):
        return isinstance(other, BitKey) and np.array_equal(self.bits, other.bits)

    __hash__ = None

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "BitKey":
        return cls(rng.integers(0, 2, size=int(n), dtype=np.uint8))

    @classmethod
    def empty(cls) -> "BitKey":
        return cls(np.zeros(0, dtype=np.uint8))


@dataclass(frozen=True)
class SampleStats:
    """Bivariate Gaussian law of a pair of reciprocal real samples (equal marginals)."""

    mean: float
    var: float
    cov: float

    @property
    def sd(self) -> float:
        return math.sqrt(self.var)

    @property
    def corr(self) -> float:
        return self.cov / self.var


def sample_stats(c, rho, beta, nlos_scale: float = 1.0) -> SampleStats:
    """Joint law of one unfolded real sample at the two ends of a link (unit noise power)."""
    c = check_los(c)
    power = beta * rho / 3.0
    s = nlos_variance(c, nlos_scale) * power
    return SampleStats(mean=math.sqrt(power) * math.sqrt(c / 2.0), var=s + 0.5, cov=s)


# --------------------------------------------------------------------------- quantiser


def quantize_and_reconcile(obs_a, obs_b, gb: GuardBand):
    """Quantise both parties' real samples and keep the indices both retained.

    Returns ``(key_a, key_b, mismatch_count)``.
    """
    a = np.asarray(obs_a, dtype=float).ravel()
    b = np.asarray(obs_b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError("observation sequences differ in length")
    keep_a = (a <= gb.q_minus) | (a >= gb.q_plus)
    keep_b = (b <= gb.q_minus) | (b >= gb.q_plus)
    # public discussion: each side announces its surviving indices
    common = np.flatnonzero(keep_a & keep_b)
    bits_a = (a[common] >= gb.q_plus).astype(np.uint8)
    bits_b = (b[common] >= gb.q_plus).astype(np.uint8)
    return BitKey(bits_a), BitKey(bits_b), int(np.count_nonzero(bits_a != bits_b))


# --------------------------------------------------------------------------- analytics


def _std_band(stats: SampleStats, gb: GuardBand):
    return (gb.q_minus - stats.mean) / stats.sd, (gb.q_plus - stats.mean) / stats.sd


def _quad(f, lo, hi):
    val, err = integrate.quad(f, lo, hi, epsabs=QUAD_TOL * 1e-3, epsrel=QUAD_TOL, limit=200)
    if err > 1e-8:
        raise ArithmeticError(f"quadrature tolerance not met (error estimate {err:.2e})")
    return val


def _owens_t(h, a):
    """Owen's T with the infinite-``a`` limit ``T(h, +-inf) = +-Phi(-|h|) / 2``."""
    finite = np.isfinite(a)
    limit = np.sign(a) * 0.5 * norm.cdf(-np.abs(h))
    return np.where(finite, owens_t(h, np.where(finite, a, 0.0)), limit)


def bvn_cdf(h, k, r):
    """``P(X <= h, Y <= k)`` for standard normals with correlation ``r`` (Owen's T form)."""
    # + 0.0 folds -0.0 into +0.0 so the Owen's T limits and the corner term agree
    h = np.asarray(h, dtype=float) + 0.0
    k = np.asarray(k, dtype=float) + 0.0
    s = math.sqrt(1.0 - r * r)
    both_zero = (h == 0) & (k == 0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        a_h = np.where(both_zero, 0.0, (k - r * h) / (h * s))
        a_k = np.where(both_zero, 0.0, (h - r * k) / (k * s))
    sh, sk = np.sign(h), np.sign(k)
    corner = np.where((sh * sk < 0) | ((sh * sk == 0) & (h + k < 0)), 0.5, 0.0)
    val = 0.5 * (norm.cdf(h) + norm.cdf(k)) - _owens_t(h, a_h) - _owens_t(k, a_k) - corner
    val = np.where(both_zero, 0.25 + math.asin(r) / (2 * math.pi), val)
    val = np.clip(val, 0.0, 1.0)
    return float(val) if val.ndim == 0 else val


def consensus_probability(stats: SampleStats, gb: GuardBand) -> float:
    """P(both samples lie outside the open band)."""
    lo, hi = _std_band(stats, gb)
    if lo == hi:
        return 1.0
    r = stats.corr
    p_in = norm.cdf(hi) - norm.cdf(lo)
    both_in = bvn_cdf(hi, hi, r) - 2.0 * bvn_cdf(lo, hi, r) + bvn_cdf(lo, lo, r)
    return float(min(max(1.0 - 2.0 * p_in + both_in, 0.0), 1.0))


def mismatch_probability(stats: SampleStats, gb: GuardBand) -> float:
    """P(both samples survive but fall on opposite sides of the band)."""
    lo, hi = _std_band(stats, gb)
    # P(X <= lo, Y >= hi), doubled by exchangeability
    one_side = norm.cdf(lo) - bvn_cdf(lo, hi, stats.corr)
    return float(max(2.0 * one_side, 0.0))


def consensus_probability_quad(stats: SampleStats, gb: GuardBand) -> float:
    """Quadrature route to :func:`consensus_probability` (used as a cross-check)."""
    lo, hi = _std_band(stats, gb)
    if lo == hi:
        return 1.0
    r = stats.corr
    s = math.sqrt(1.0 - r * r)
    p_in = norm.cdf(hi) - norm.cdf(lo)
    both_in = _quad(lambda x: norm.pdf(x) * (norm.cdf((hi - r * x) / s) - norm.cdf((lo - r * x) / s)),
                    max(lo, -40.0), min(hi, 40.0)) if hi > -40 and lo < 40 else 0.0
    return float(min(max(1.0 - 2.0 * p_in + both_in, 0.0), 1.0))


def mismatch_probability_quad(stats: SampleStats, gb: GuardBand) -> float:
    """Quadrature route to :func:`mismatch_probability`."""
    lo, hi = _std_band(stats, gb)
    r = stats.corr
    s = math.sqrt(1.0 - r * r)
    above_below = _quad(lambda x: norm.pdf(x) * norm.cdf((lo - r * x) / s), hi, np.inf) if hi < 40 else 0.0
    below_above = _quad(lambda x: norm.pdf(x) * norm.sf((hi - r * x) / s), -np.inf, lo) if lo > -40 else 0.0
    return above_below + below_above


def p_epsilon(c, rho, beta, gb: GuardBand, nlos_scale: float = 1.0) -> float:
    """Consensus probability of one real sample pair for the link (c, rho, beta)."""
    return consensus_probability(sample_stats(c, rho, beta, nlos_scale), gb)


def mismatch_rate(stats: SampleStats, w: float) -> float:
    """Per-surviving-bit mismatch probability for the band ``mean +- w * sd``."""
    gb = GuardBand.symmetric(stats.mean, w * stats.sd)
    pe = consensus_probability(stats, gb)
    return mismatch_probability(stats, gb) / pe if pe > 0 else 0.0


def select_guard_band_width(stats: SampleStats, epsilon: float) -> float:
    """Smallest ``w`` (to 1e-4) with mismatch rate ``<= epsilon`` for the band ``mean +- w sd``."""
    if not 0 < epsilon < 0.5:
        raise ValueError("epsilon must lie in (0, 0.5)")
    if mismatch_rate(stats, 0.0) <= epsilon:
        return 0.0
    lo, hi = 0.0, 1.0
    while mismatch_rate(stats, hi) > epsilon:
        lo, hi = hi, 2.0 * hi
        if hi > 64:
            raise ArithmeticError("guard band cannot meet the mismatch target")
    while hi - lo > W_TOL:
        mid = 0.5 * (lo + hi)
        if mismatch_rate(stats, mid) > epsilon:
            lo = mid
        else:
            hi = mid
    return hi


def select_guard_band(c, rho, beta, epsilon, nlos_scale: float = 1.0) -> GuardBand:
    """Symmetric band around the sample mean meeting the per-bit mismatch target ``epsilon``."""
    stats = sample_stats(c, rho, beta, nlos_scale)
    w = select_guard_band_width(stats, epsilon)
    return GuardBand.symmetric(stats.mean, w * stats.sd)


def consensus_for_target(c, rho, beta, epsilon, nlos_scale: float = 1.0) -> float:
    """``p_epsilon`` after choosing the guard band for mismatch target ``epsilon``."""
    return p_epsilon(c, rho, beta, select_guard_band(c, rho, beta, epsilon, nlos_scale), nlos_scale)


# --------------------------------------------------------------------------- key-length laws


def key_length_pmf(L: int, p_eps: float, levels_factor: float = 1.0) -> Pmf:
    """Binomial(2L, p_eps) law of a pairwise key length.

    ``levels_factor`` is kept for multi-level quantisers, which only scale the
    mean key length; it must be 1 for the integer-valued law returned here.
    """
    if L < 1 or int(L) != L:
        raise ValueError("L must be a positive integer")
    if not 0.0 <= p_eps <= 1.0:
        raise ValueError("p_eps must lie in [0, 1]")
    if levels_factor != 1.0:
        raise ValueError("multi-level quantisers only rescale the mean; use mean_key_length")
    n = 2 * int(L)
    k = np.arange(n + 1)
    try:
        masses = binom.pmf(k, n, p_eps)
    except OverflowError:
        # scipy's beta-function route overflows for subnormal p; use the log form
        with np.errstate(divide="ignore"):
            logm = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1) + k * np.log(p_eps) + (n - k) * np.log1p(-p_eps)
        masses = np.exp(logm)
    return Pmf(0, masses)


def mean_key_length(L: int, p_eps: float, levels_factor: float = 1.0) -> float:
    """``f * 2 L p_eps`` where ``2**f`` is the number of quantiser levels."""
    return levels_factor * 2 * L * p_eps


def difference_pmf(L: int, p_eps: float) -> Pmf:
    """Law of ``D = N_AR - N_BR`` for independent Binomial(2L, p_eps) key lengths.

    Evaluated term by term from the two-branch sum over the common count.
    """
    n = 2 * int(L)
    pk = key_length_pmf(L, p_eps).masses
    masses = np.empty(2 * n + 1)
    for d in range(-n, n + 1):
        if d < 0:
            t = np.arange(0, n + d + 1)
            terms = pk[t] * pk[t - d]
        else:
            t = np.arange(0, n - d + 1)
            terms = pk[t + d] * pk[t]
        masses[d + n] = math.fsum(terms)
    return Pmf(-n, masses)
