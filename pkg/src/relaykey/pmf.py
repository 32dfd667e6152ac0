"""Finite probability mass functions on a contiguous integer support."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SUM_TOL = 1e-9


@dataclass(frozen=True)
class Pmf:
    """PMF over the integers ``support_offset, support_offset + 1, ...``.

    ``masses[i]`` is the probability of the value ``support_offset + i``.
    """

    support_offset: int
    masses: np.ndarray

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=float)
        if masses.ndim != 1 or masses.size == 0:
            raise ValueError("masses must be a non-empty 1-D sequence")
        if np.any(masses < 0) or not np.all(np.isfinite(masses)):
            raise ValueError("masses must be finite and non-negative")
        if abs(math.fsum(masses) - 1.0) > SUM_TOL:
            raise ValueError(f"masses sum to {math.fsum(masses)!r}, not 1")
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "support_offset", int(self.support_offset))

    @classmethod
    def point(cls, value: int) -> "Pmf":
        return cls(value, np.ones(1))

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.support_offset, self.support_offset + self.masses.size)

    @property
    def max_value(self) -> int:
        return self.support_offset + self.masses.size - 1

    def prob(self, value) -> np.ndarray | float:
        """P(X = value); zero outside the support.  Vectorised over ``value``."""
        v = np.asarray(value) - self.support_offset
        inside = (v >= 0) & (v < self.masses.size)
        out = np.where(inside, self.masses[np.clip(v, 0, self.masses.size - 1)], 0.0)
        return float(out) if out.ndim == 0 else out

    def mean(self) -> float:
        return math.fsum(self.support * self.masses)

    def var(self) -> float:
        mu = self.mean()
        return math.fsum((self.support - mu) ** 2 * self.masses)

    def total(self) -> float:
        return math.fsum(self.masses)

    def tv_distance(self, other: "Pmf") -> float:
        lo = min(self.support_offset, other.support_offset)
        hi = max(self.max_value, other.max_value)
        grid = np.arange(lo, hi + 1)
        return 0.5 * math.fsum(np.abs(self.prob(grid) - other.prob(grid)))

    @classmethod
    def from_samples(cls, samples) -> "Pmf":
        samples = np.asarray(samples, dtype=np.int64)
        lo = int(samples.min())
        counts = np.bincount(samples - lo)
        return cls(lo, counts / counts.sum())


def trim(offset: int, masses: np.ndarray, floor: float = 0.0) -> tuple[int, np.ndarray]:
    """Drop leading/trailing masses that are ``<= floor``."""
    nz = np.flatnonzero(masses > floor)
    if nz.size == 0:
        return offset, masses[:1]
    return offset + int(nz[0]), masses[nz[0]: nz[-1] + 1]
