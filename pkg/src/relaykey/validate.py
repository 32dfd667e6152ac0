"""Cross-oracle release checks: every closed form against an independent numerical route."""

from __future__ import annotations

import itertools
import math
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import i0e

from . import rate
from .buffer import buffer_pmf_recursion, expected_nxor
from .channel import make_rng, sample_channel
from .fbl import error_probability, fbl_outage
from .keygen import (GuardBand, consensus_probability, consensus_probability_quad, difference_pmf,
                     key_length_pmf, mismatch_probability, mismatch_probability_quad, sample_stats)
from .optimize import keyrate_grid_scan, optimize_keyrate_constrained

TIME_BUDGET_S = 600.0


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


@contextmanager
def perturbed_marcum(offset: float):
    """Temporarily shift Q1 by ``offset`` (sensitivity canary for the suite itself)."""
    old = rate._Q1_OFFSET
    rate._Q1_OFFSET = float(offset)
    try:
        yield
    finally:
        rate._Q1_OFFSET = old


def marcum_by_quadrature(alpha: float, lam: float) -> float:
    """``Q1(a, b) = int_b^inf x exp(-(x^2 + a^2)/2) I0(a x) dx``, integrated directly."""
    f = lambda x: x * math.exp(-0.5 * (x - alpha) ** 2) * i0e(alpha * x)
    if lam > alpha + 40:
        return 0.0
    # the integrand is concentrated near x = alpha; split there
    pts = sorted({lam, max(lam, alpha), max(lam, alpha + 10), max(lam, alpha + 40)})
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        if b > a:
            total += integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-12, limit=400)[0]
    return total


def check_marcum() -> CheckResult:
    worst = 0.0
    for a in (0.0, 0.3, 1.0, 2.5, 5.0, 9.0):
        for b in (0.0, 0.1, 0.7, 1.5, 3.0, 6.0, 10.0):
            worst = max(worst, abs(rate.marcum_q1(a, b) - marcum_by_quadrature(a, b)))
    return CheckResult("marcum_q1 vs direct quadrature", worst <= 1e-8, f"max abs diff {worst:.2e} (tol 1e-8)")


def check_difference_pmf() -> CheckResult:
    worst = 0.0
    for L in (1, 7, 50, 100):
        for p in (0.05, 0.5, 0.83):
            k = key_length_pmf(L, p).masses
            conv = np.convolve(k, k[::-1])
            worst = max(worst, float(np.max(np.abs(difference_pmf(L, p).masses - conv))))
    return CheckResult("difference PMF vs convolution", worst <= 1e-12, f"max abs diff {worst:.2e} (tol 1e-12)")


def enumerate_buffer_laws(L: int, p: float, rounds: int, b0: int = 0) -> list[dict]:
    """Exact buffer laws by walking every ``(N_AR, N_BR)`` trajectory."""
    k = key_length_pmf(L, p).masses
    n = k.size
    laws = [defaultdict(float) for _ in range(rounds)]
    for path in itertools.product(range(n * n), repeat=rounds):
        pairs = [divmod(cell, n) for cell in path]
        prob = math.prod(k[a] * k[c] for a, c in pairs)
        b = b0
        for r, (a, c) in enumerate(pairs):
            if a - c <= b:
                b -= a - c
            laws[r][b] += prob
    return laws


def check_buffer_recursion() -> CheckResult:
    worst = 0.0
    for p in (0.3, 0.5):
        laws = enumerate_buffer_laws(1, p, 5)
        rec = buffer_pmf_recursion(difference_pmf(1, p), 0, 5)
        for pmf, law in zip(rec, laws):
            grid = np.arange(0, max(max(law), pmf.max_value) + 1)
            exact = np.array([law.get(int(b), 0.0) for b in grid])
            worst = max(worst, float(np.max(np.abs(pmf.prob(grid) - exact))))
    return CheckResult("buffer PMF recursion vs enumeration", worst <= 1e-12,
                       f"max abs diff {worst:.2e} (tol 1e-12)")


OUTAGE_POINTS = ((0.0, 10.0, 0.75), (0.3, 20.0, 0.6), (0.6, 30.0, 0.5), (0.0, 100.0, 0.9))


def check_outage_mc(samples: int = 4_000_000, seed: int = 20240611) -> CheckResult:
    lines, ok = [], True
    for i, (c, rho, beta) in enumerate(OUTAGE_POINTS):
        h = rate.outage_threshold_h(c, rho, beta)
        g = np.abs(sample_channel(c, make_rng([seed, i]), samples)) ** 2
        emp = float(np.mean(g < h))
        se = math.sqrt(max(emp * (1 - emp), 1e-12) / samples)
        ana = rate.outage_probability(c, rho, beta)
        z = (emp - ana) / se
        ok &= abs(z) <= 3.0
        lines.append(f"({c},{rho},{beta}) z={z:+.2f}")
    return CheckResult("analytic outage vs Monte Carlo", ok, "; ".join(lines))


def check_consensus() -> CheckResult:
    worst = 0.0
    for c, rho, beta, w in ((0.2, 100.0, 0.6, 0.5), (0.0, 31.6, 0.9, 1.2), (0.5, 10.0, 0.3, 0.1)):
        st = sample_stats(c, rho, beta)
        gb = GuardBand.symmetric(st.mean, w * st.sd)
        worst = max(worst, abs(consensus_probability(st, gb) - consensus_probability_quad(st, gb)),
                    abs(mismatch_probability(st, gb) - mismatch_probability_quad(st, gb)))
    return CheckResult("consensus/mismatch closed form vs quadrature", worst <= 1e-9,
                       f"max abs diff {worst:.2e} (tol 1e-9)")


def check_fbl_mc(samples: int = 1_000_000, seed: int = 77) -> CheckResult:
    c, rho, beta, L, R = 0.0, float(rate.db_to_linear(15.0)), 0.9, 100, 1.0
    g = np.abs(sample_channel(c, make_rng(seed), samples)) ** 2 * (1 - beta) * rho
    e = error_probability(g, R, L)
    se = float(e.std(ddof=1) / math.sqrt(samples))
    z = (float(e.mean()) - fbl_outage(c, rho, beta, R, L)) / se
    return CheckResult("FBL outage integral vs Monte Carlo", abs(z) <= 3.0, f"z={z:+.2f}")


def check_expected_nxor_mc(trials: int = 1_000_000, seed: int = 5) -> CheckResult:
    L, p = 1, 0.5
    rng = make_rng(seed)
    a1, b1 = rng.binomial(2 * L, p, trials), rng.binomial(2 * L, p, trials)
    d1 = a1 - b1
    buf = np.where(d1 <= 0, -d1, 0)
    a2, b2 = rng.binomial(2 * L, p, trials), rng.binomial(2 * L, p, trials)
    nxor = np.where(a2 - b2 <= buf, a2, b2)
    b1_law = buffer_pmf_recursion(difference_pmf(L, p), 0, 1)[0]
    ana = expected_nxor(key_length_pmf(L, p), b1_law)
    z = (nxor.mean() - ana) / (nxor.std(ddof=1) / math.sqrt(trials))
    return CheckResult("E[N_XOR] mixture vs Monte Carlo", abs(z) <= 3.0, f"z={z:+.2f}")


def check_constrained_rate() -> CheckResult:
    worst_res, worst_gap = 0.0, 0.0
    for eta in (1e-3, 1e-2, 1e-1):
        for c, rho in ((0.0, 10.0), (0.4, 100.0)):
            res = optimize_keyrate_constrained(c, rho, eta)
            worst_res = max(worst_res, abs(rate.outage_probability(c, rho, res.beta_star) - eta))
            worst_gap = max(worst_gap, abs(res.beta_star - keyrate_grid_scan(c, rho, eta)))
    ok = worst_res <= 1e-8 and worst_gap <= 0.002
    return CheckResult("constrained key rate: Newton vs grid", ok,
                       f"max |P_out-eta| {worst_res:.1e}, max |beta gap| {worst_gap:.4f}")


CHECKS = (check_marcum, check_difference_pmf, check_buffer_recursion, check_consensus,
          check_outage_mc, check_fbl_mc, check_expected_nxor_mc, check_constrained_rate)


def run_validation(marcum_offset: float = 0.0) -> list[CheckResult]:
    results = []
    start = time.perf_counter()
    with perturbed_marcum(marcum_offset):
        for check in CHECKS:
            t0 = time.perf_counter()
            try:
                res = check()
            except Exception as exc:  # a crashing check is a failing check
                res = CheckResult(check.__name__, False, f"{type(exc).__name__}: {exc}")
            results.append(CheckResult(res.name, res.passed, res.detail, time.perf_counter() - t0))
    total = time.perf_counter() - start
    results.append(CheckResult("runtime budget", total <= TIME_BUDGET_S,
                               f"{total:.1f} s (budget {TIME_BUDGET_S:.0f} s)", total))
    return results
