"""Closed-form key rate, broadcast outage and throughput under optimal key generation.

All functions take the linear SNR ``rho`` and broadcast over ``beta`` (and most
other arguments) with numpy semantics.  ``nlos_scale`` multiplies the
per-dimension scatter variance ``(1 - c) / 2``; see
:func:`relaykey.channel.nlos_variance`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc, gammaincc, gammaln, i0e

from .channel import nlos_variance

LN2 = math.log(2.0)
LOG2E = 1.0 / LN2
# Poisson-tail truncation bound of the Marcum-Q series
SERIES_TAIL = 1e-12
# Lower-bound unimodality needs (nlos variance) * rho above this
UNIMODAL_THRESHOLD = 1.862
# additive offset on Q1, settable only by the validation canary
_Q1_OFFSET = 0.0


def _scalar_or_array(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def _check_common(c, rho, beta, beta_max_inclusive=True):
    c = np.asarray(c, dtype=float)
    rho = np.asarray(rho, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if np.any((c < 0) | (c > 1)) or np.any(np.isnan(c)):
        raise ValueError("LOS fraction c must lie in [0, 1]")
    if np.any(~(rho > 0)) or np.any(~np.isfinite(rho)):
        raise ValueError("rho must be positive and finite")
    upper_ok = beta <= 1 if beta_max_inclusive else beta < 1
    if np.any(~((beta >= 0) & upper_ok)):
        raise ValueError("beta outside its domain")
    return c, rho, beta


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


# --------------------------------------------------------------------------- Marcum-Q


def _poisson_weights(mu: np.ndarray):
    """Poisson(mu) masses for j = 0..J, with J large enough that the tail is < SERIES_TAIL."""
    mu_max = float(np.max(mu)) if mu.size else 0.0
    J = int(math.ceil(mu_max + 10.0 * math.sqrt(mu_max) + 25.0))
    while True:
        j = np.arange(J + 1, dtype=float)[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            logw = -mu[None, :] + j * np.log(mu[None, :]) - gammaln(j + 1.0)
        logw = np.where(mu[None, :] == 0, np.where(j == 0, 0.0, -np.inf), logw)
        w = np.exp(logw)
        # geometric bound on the omitted terms j > J
        ratio = mu / (J + 2.0)
        tail = w[-1] * (mu / (J + 1.0)) / np.maximum(1.0 - ratio, 1e-300)
        if np.all(tail < SERIES_TAIL) and np.all(ratio < 1):
            return j, w
        J *= 2


def _marcum_parts(alpha, lam):
    alpha = np.asarray(alpha, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any(alpha < 0) or np.any(lam < 0) or np.any(~np.isfinite(alpha)) or np.any(np.isnan(lam)):
        raise ValueError("Marcum-Q arguments must be finite and non-negative")
    a, b = np.broadcast_arrays(alpha, lam)
    shape = a.shape
    mu = (a.ravel() ** 2) / 2.0
    x = (b.ravel() ** 2) / 2.0
    j, w = _poisson_weights(mu)
    with np.errstate(invalid="ignore"):
        lower = gammainc(j + 1.0, x[None, :])
    lower = np.where(np.isinf(x)[None, :], 1.0, lower)
    s_lower = (w * lower).sum(axis=0)
    with np.errstate(invalid="ignore"):
        upper = gammaincc(j + 1.0, x[None, :])
    upper = np.where(np.isinf(x)[None, :], 0.0, upper)
    s_upper = (w * upper).sum(axis=0)
    missing = np.clip(1.0 - w.sum(axis=0), 0.0, None)
    return s_lower.reshape(shape), s_upper.reshape(shape), missing.reshape(shape)


def marcum_q1(alpha, lam):
    """First-order Marcum Q-function ``Q1(alpha, lam)``.

    Evaluated as a Poisson mixture of regularised upper incomplete gamma
    functions (the noncentral chi-square tail with two degrees of freedom),
    truncated once the remaining Poisson mass is below 1e-12.
    """
    s_lower, s_upper, missing = _marcum_parts(alpha, lam)
    # pick the better-conditioned side; omitted terms all sit in the upper tail
    q = np.where(s_lower <= 0.5, 1.0 - s_lower, s_upper + missing) + _Q1_OFFSET
    return _scalar_or_array(np.clip(q, 0.0, 1.0))


def marcum_q1_complement(alpha, lam):
    """``1 - Q1(alpha, lam)`` computed without cancellation when it is small."""
    s_lower, s_upper, missing = _marcum_parts(alpha, lam)
    q = np.where(s_lower <= 0.5, s_lower, 1.0 - s_upper - missing) - _Q1_OFFSET
    return _scalar_or_array(np.clip(q, 0.0, 1.0))


def rician_power_cdf(x, c, nlos_scale: float = 1.0):
    """``P(|h|^2 <= x)`` for the Ricean channel with LOS fraction ``c``."""
    x = np.asarray(x, dtype=float)
    if c == 1.0:
        return _scalar_or_array(np.where(x >= 1.0, 1.0, 0.0))
    k = nlos_variance(c, nlos_scale)
    return marcum_q1_complement(math.sqrt(c / k), np.sqrt(np.maximum(x, 0.0) / k))


def rician_power_pdf(x, c, nlos_scale: float = 1.0):
    """Density of ``|h|^2``: a noncentral chi-square(2) variable scaled by the scatter variance."""
    if c == 1.0:
        raise ValueError("|h|^2 is deterministic when c = 1; no density")
    k = nlos_variance(c, nlos_scale)
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    z = np.sqrt(c * x) / k
    return _scalar_or_array(np.exp(-(x + c) / (2 * k) + z) * i0e(z) / (2 * k))


# --------------------------------------------------------------------------- rates


def _snr_ratio(c, rho, beta, nlos_scale):
    """``kappa^2 beta^2 rho^2 / (9 + 6 kappa beta rho)``, i.e. ``2**M - 1``."""
    k = nlos_scale * (1.0 - c) / 2.0
    kbr = k * beta * rho
    return kbr * kbr / (9.0 + 6.0 * kbr)


def key_rate_M(c, rho, beta, nlos_scale: float = 1.0):
    """Secret-key rate (bits per channel use) of the optimal pairwise key generator."""
    c, rho, beta = _check_common(c, rho, beta)
    return _scalar_or_array(np.log1p(_snr_ratio(c, rho, beta, nlos_scale)) * LOG2E)


mi_vs_los = key_rate_M


def key_rate_derivative(c, rho, beta, nlos_scale: float = 1.0):
    """``dM/dbeta`` in closed form."""
    c, rho, beta = _check_common(c, rho, beta)
    k = nlos_scale * (1.0 - c) / 2.0
    d = 9.0 + 6.0 * k * beta * rho
    num = 18.0 * k**2 * beta * rho**2 + 6.0 * k**3 * beta**2 * rho**3
    x = _snr_ratio(c, rho, beta, nlos_scale)
    return _scalar_or_array(LOG2E * num / (d * d) / (1.0 + x))


def outage_threshold_h(c, rho, beta, nlos_scale: float = 1.0):
    """Channel-power threshold ``(2**M - 1) / ((1 - beta) rho)`` below which the broadcast fails."""
    c, rho, beta = _check_common(c, rho, beta, beta_max_inclusive=False)
    return _scalar_or_array(_snr_ratio(c, rho, beta, nlos_scale) / ((1.0 - beta) * rho))


def outage_probability(c, rho, beta, nlos_scale: float = 1.0):
    """Probability that the relay-to-B link cannot carry rate ``M`` (asymptotic blocklength)."""
    c, rho, beta = _check_common(c, rho, beta)
    if np.any(beta == 1):
        # threshold diverges: certain outage (M > 0) or certain success (M == 0)
        out = np.where(beta == 1, np.where(_snr_ratio(c, rho, beta, nlos_scale) > 0, 1.0, 0.0), np.nan)
        rest = beta != 1
        if np.any(rest):
            cb, rb, bb = np.broadcast_arrays(c, rho, beta)
            out = np.asarray(out, dtype=float)
            out[rest] = outage_probability(cb[rest], rb[rest], bb[rest], nlos_scale)
        return _scalar_or_array(out)
    h = _snr_ratio(c, rho, beta, nlos_scale) / ((1.0 - beta) * rho)
    if np.ndim(c) == 0:
        return rician_power_cdf(h, float(c), nlos_scale)
    cb, hb = np.broadcast_arrays(c, h)
    out = np.empty(cb.shape)
    for cv in np.unique(cb):
        sel = cb == cv
        out[sel] = rician_power_cdf(hb[sel], float(cv), nlos_scale)
    return _scalar_or_array(out)


def outage_derivative(c, rho, beta, nlos_scale: float = 1.0):
    """``dP_out/dbeta``: Ricean power density at the threshold times ``dh/dbeta``."""
    c, rho, beta = _check_common(c, rho, beta, beta_max_inclusive=False)
    if np.any(c == 1):
        raise ValueError("outage is a step function of beta when c = 1")
    k = nlos_scale * (1.0 - c) / 2.0
    d = 9.0 + 6.0 * k * beta * rho
    x = _snr_ratio(c, rho, beta, nlos_scale)
    dx = k**2 * rho**2 * beta * (18.0 + 6.0 * k * beta * rho) / (d * d)
    dh = (dx * (1.0 - beta) + x) / ((1.0 - beta) ** 2 * rho)
    h = x / ((1.0 - beta) * rho)
    if np.ndim(c) == 0:
        dens = rician_power_pdf(h, float(c), nlos_scale)
    else:
        cb, hb = np.broadcast_arrays(c, h)
        dens = np.array([rician_power_pdf(hv, float(cv), nlos_scale) for cv, hv in zip(cb.ravel(), hb.ravel())]).reshape(cb.shape)
    return _scalar_or_array(dens * dh)


# --------------------------------------------------------------------------- throughput


@dataclass(frozen=True)
class RateReport:
    M: float
    h_threshold: float
    p_out: float
    theta: float
    theta_lb: float


def throughput_value(c, rho, beta, nlos_scale: float = 1.0):
    """``Theta = M (1 - P_out)``, vectorised over beta.  Zero at beta = 0 and beta = 1."""
    M = np.asarray(key_rate_M(c, rho, beta, nlos_scale))
    p = np.asarray(outage_probability(c, rho, beta, nlos_scale))
    return _scalar_or_array(M * (1.0 - p))


def throughput(c, rho, beta, nlos_scale: float = 1.0) -> RateReport:
    """Full report at one operating point; ``theta_lb`` is NaN where the bound is undefined."""
    M = key_rate_M(c, rho, beta, nlos_scale)
    h = outage_threshold_h(c, rho, beta, nlos_scale)
    p = outage_probability(c, rho, beta, nlos_scale)
    if c < 1 and 0 < beta < 1:
        lb = throughput_lower_bound(c, rho, beta, nlos_scale)
    else:
        lb = float("nan")
    return RateReport(M=M, h_threshold=h, p_out=p, theta=M * (1.0 - p), theta_lb=lb)


def beta_min(c, rho, nlos_scale: float = 1.0) -> float:
    """Branch point ``9 / (6 kappa rho)`` of the piecewise lower bound."""
    k = nlos_variance(c, nlos_scale)
    if k == 0:
        return math.inf
    return 9.0 / (6.0 * k * rho)


def lb_is_unimodal(c, rho, nlos_scale: float = 1.0) -> bool:
    """Sufficient condition ``kappa * rho > 1.862`` for a single peak of the lower bound."""
    return nlos_variance(c, nlos_scale) * rho > UNIMODAL_THRESHOLD


def throughput_lower_bound(c, rho, beta, nlos_scale: float = 1.0):
    """Piecewise closed-form lower bound on the throughput, for ``0 <= c < 1`` and ``0 < beta < 1``."""
    c = float(c)
    if not 0.0 <= c < 1.0:
        raise ValueError("lower bound needs 0 <= c < 1")
    if not rho > 0:
        raise ValueError("rho must be positive")
    beta = np.asarray(beta, dtype=float)
    if np.any(~((beta > 0) & (beta < 1))):
        raise ValueError("beta must lie in (0, 1)")
    k = nlos_variance(c, nlos_scale)
    bmin = 9.0 / (6.0 * k * rho)
    low = np.log1p((k * beta * rho) ** 2 / 18.0)
    high = np.log1p(k * beta * rho / 12.0)
    f = np.where(beta <= bmin, low, high) * LOG2E
    out = f * math.exp(-c / (2.0 * k)) * np.exp(-beta / (12.0 * (1.0 - beta)))
    return _scalar_or_array(out)
