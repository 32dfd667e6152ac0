"""Reciprocal Ricean channels and the three-slot probing schedule.

Noise is normalised to unit variance (``gamma = 1``) so every power is
expressed through the linear SNR ``rho = P / gamma``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOS_PHASE = (1 + 1j) / np.sqrt(2)


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator (Philox) from an int, a sequence of ints, or a SeedSequence.

    An existing ``Generator`` is passed through unchanged.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def check_los(c: float) -> float:
    c = float(c)
    if not 0.0 <= c <= 1.0:
        raise ValueError(f"LOS fraction must lie in [0, 1], got {c}")
    return c


def k_factor(c: float) -> float:
    """Ricean K-factor ``c / (1 - c)``."""
    c = check_los(c)
    return np.inf if c == 1.0 else c / (1.0 - c)


def nlos_variance(c: float, nlos_scale: float = 1.0) -> float:
    """Per-real-dimension variance of the scattered component, ``nlos_scale * (1 - c) / 2``.

    ``nlos_scale = 1`` is a unit-power channel (``g ~ CN(0, 1)``); ``nlos_scale = 2``
    gives unit-variance real and imaginary scatter, the convention under which
    the published power-allocation table is reproduced.
    """
    if nlos_scale <= 0:
        raise ValueError("nlos_scale must be positive")
    return nlos_scale * (1.0 - check_los(c)) / 2.0


@dataclass(frozen=True)
class LinkParams:
    c_R: float
    rho: float
    L: int
    beta: float

    def __post_init__(self):
        check_los(self.c_R)
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if int(self.L) != self.L or self.L < 1:
            raise ValueError("L must be a positive integer")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")

    @property
    def probe_power(self) -> float:
        """Per-slot probe power ``beta * rho / 3``."""
        return self.beta * self.rho / 3.0


@dataclass(frozen=True)
class ProbeObservations:
    y_R_fromA: np.ndarray
    y_R_fromB: np.ndarray
    y_A: np.ndarray
    y_B: np.ndarray
    h_AR: np.ndarray
    h_BR: np.ndarray

    def __post_init__(self):
        n = {len(self.y_R_fromA), len(self.y_R_fromB), len(self.y_A), len(self.y_B)}
        if len(n) != 1:
            raise ValueError("probe sequences must share one length")


def sample_channel(c: float, rng_seed=None, size=None, nlos_scale: float = 1.0):
    """Draw ``sqrt(c) (1+i)/sqrt(2) + NLOS`` with NLOS variance ``nlos_scale (1-c)/2`` per dimension.

    Returns a complex scalar when ``size`` is None, otherwise an array.
    """
    c = check_los(c)
    rng = make_rng(rng_seed)
    sd = np.sqrt(nlos_variance(c, nlos_scale))
    shape = () if size is None else size
    g = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    h = np.sqrt(c) * LOS_PHASE + sd * g
    return complex(h) if size is None else h


def complex_noise(rng: np.random.Generator, size, variance: float = 1.0) -> np.ndarray:
    sd = np.sqrt(variance / 2.0)
    return sd * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def run_probe_phase(p: LinkParams, rng_seed=None, nlos_scale: float = 1.0,
                    c_BR: float | None = None) -> ProbeObservations:
    """Simulate slots 1-3 of every key-generation coherence block.

    ``c_BR`` overrides the LOS fraction of the B-R link (asymmetric mode).
    """
    rng = make_rng(rng_seed)
    L = int(p.L)
    c_br = p.c_R if c_BR is None else c_BR
    h_ar = sample_channel(p.c_R, rng, L, nlos_scale)
    h_br = sample_channel(c_br, rng, L, nlos_scale)
    amp = np.sqrt(p.probe_power)
    return ProbeObservations(
        y_R_fromA=amp * h_ar + complex_noise(rng, L),
        y_R_fromB=amp * h_br + complex_noise(rng, L),
        y_A=amp * h_ar + complex_noise(rng, L),
        y_B=amp * h_br + complex_noise(rng, L),
        h_AR=h_ar,
        h_BR=h_br,
    )


def unfold(z: np.ndarray) -> np.ndarray:
    """Interleave real and imaginary parts: ``[Re z0, Im z0, Re z1, ...]``."""
    z = np.asarray(z)
    return np.column_stack([z.real, z.imag]).ravel()
