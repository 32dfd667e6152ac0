"""Finite-blocklength outage of the relay broadcast under the normal approximation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.stats import ncx2, norm

from . import rate
from .channel import check_los, nlos_variance

LOG2E = math.log2(math.e)
TAIL_MASS = 1e-10
ABS_TOL = 1e-7
# breakpoints around the capacity threshold, in units of the transition width
_SPREAD = (-12.0, -6.0, -3.0, -1.0, 0.0, 1.0, 3.0, 6.0, 12.0)
_LOW_SNR_MULTIPLES = (0.25, 1.0, 4.0, 16.0, 64.0)


class QuadratureError(ArithmeticError):
    """The outage integral did not reach its absolute tolerance."""


@dataclass(frozen=True)
class FblParams:
    L: int
    rate: float
    c: float
    rho: float
    beta: float
    nlos_scale: float = 1.0

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise ValueError("L must be a positive integer")
        if not self.rate >= 0:
            raise ValueError("rate must be non-negative")
        check_los(self.c)
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must lie in [0, 1)")

    @property
    def payload_bits(self) -> float:
        return self.rate * self.L

    @property
    def snr_scale(self) -> float:
        """``Gamma = |h_BR|^2 * snr_scale``."""
        return (1.0 - self.beta) * self.rho


def channel_dispersion(gamma_snr):
    """``V(Gamma) = (Gamma/2)(Gamma+2)/(Gamma+1)^2 * log2(e)^2`` in bits^2."""
    g = np.asarray(gamma_snr, dtype=float)
    if np.any(g < 0):
        raise ValueError("SNR must be non-negative")
    v = 0.5 * g * (g + 2.0) / (g + 1.0) ** 2 * LOG2E ** 2
    return float(v) if v.ndim == 0 else v


def gaussian_q(x):
    """Standard Gaussian tail ``Q(x) = P(N(0,1) > x)``."""
    return norm.sf(x)


def error_probability(gamma_snr, rate_bits: float, L: int):
    """Block error probability ``Q(sqrt(L/V) (C - R))`` at a fixed SNR, with the step limit at ``V = 0``."""
    g = np.asarray(gamma_snr, dtype=float)
    cap = np.log2(1.0 + g)
    v = channel_dispersion(g)
    gap = cap - rate_bits
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = np.sqrt(L / np.asarray(v)) * gap
    step = np.where(gap < 0, 1.0, np.where(gap > 0, 0.0, 0.5))
    out = np.where(np.asarray(v) > 0, gaussian_q(arg), step)
    return float(out) if out.ndim == 0 else out


def _power_tail_point(c: float, nlos_scale: float) -> float:
    """``x`` with ``P(|h|^2 > x) < TAIL_MASS``."""
    k = nlos_variance(c, nlos_scale)
    return float(ncx2.isf(TAIL_MASS, 2, c / k) * k) if c > 0 else -2.0 * k * math.log(TAIL_MASS)


def fbl_outage_probability(p: FblParams) -> float:
    """Average block error probability over the Ricean fading of the B-R link."""
    scale = p.snr_scale
    if p.c == 1.0:
        return float(error_probability(scale, p.rate, p.L))
    x_max = _power_tail_point(p.c, p.nlos_scale)

    def integrand(x):
        return float(error_probability(x * scale, p.rate, p.L)) * float(rate.rician_power_pdf(x, p.c, p.nlos_scale))

    g_th = 2.0 ** p.rate - 1.0
    width = (1.0 + g_th) * math.log(2.0) * math.sqrt(max(channel_dispersion(g_th), 1e-300) / p.L)
    gammas = [g_th + s * width for s in _SPREAD]
    # near Gamma = 0 the dispersion vanishes and the transition scales like 1/L
    gammas += [k / p.L for k in _LOW_SNR_MULTIPLES]
    pts = sorted({min(max(g / scale, 0.0), x_max) for g in gammas} | {0.0, x_max})
    total, err = 0.0, 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        if b <= a:
            continue
        val, e = integrate.quad(integrand, a, b, epsabs=ABS_TOL / 20, epsrel=1e-9, limit=200)
        total += val
        err += e
    if err > ABS_TOL:
        raise QuadratureError(f"FBL outage integral error estimate {err:.2e} exceeds {ABS_TOL}")
    # mass beyond x_max is certainly below TAIL_MASS; outage there is at most that
    return float(min(max(total, 0.0), 1.0))


def fbl_outage(c, rho, beta, rate_bits, L, nlos_scale: float = 1.0) -> float:
    return fbl_outage_probability(FblParams(int(L), float(rate_bits), float(c), float(rho), float(beta), nlos_scale))
