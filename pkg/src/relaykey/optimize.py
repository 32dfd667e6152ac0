"""Power-split optimisation: exact grid search, lower-bound ascent, outage-constrained key rate."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import rate

GRID = np.arange(1, 1000) / 1000.0
STEP = 1e-3
FD_H = 1e-6
BRACKET = (1e-6, 1.0 - 1e-6)


class Method(enum.Enum):
    GRID_EXACT = "GridExact"
    GRADIENT_LB = "GradientLB"
    NEWTON_CONSTRAINT = "NewtonConstraint"


class UnimodalityWarning(UserWarning):
    """The lower bound is not guaranteed unimodal; a grid search was used instead."""


class NoRootError(ValueError):
    """The outage target is not bracketed by the outage curve on (0, 1)."""


@dataclass(frozen=True)
class OptResult:
    beta_star: float
    objective_value: float
    iterations: int
    method: Method
    converged: bool
    note: str = ""


def grid_argmax(values: np.ndarray, grid: np.ndarray = GRID) -> tuple[float, float]:
    """Largest value on the grid; ties go to the smaller beta."""
    i = int(np.argmax(values))
    return float(grid[i]), float(values[i])


def optimize_throughput_grid(c, rho, nlos_scale: float = 1.0) -> OptResult:
    """Brute-force maximiser of the exact throughput over beta = 0.001, ..., 0.999."""
    if not 0 <= c < 1:
        raise ValueError("c must lie in [0, 1)")
    theta = rate.throughput_value(c, rho, GRID, nlos_scale)
    b, v = grid_argmax(theta)
    return OptResult(b, v, GRID.size, Method.GRID_EXACT, True)


def _lb(c, rho, beta, nlos_scale):
    return rate.throughput_lower_bound(c, rho, beta, nlos_scale)


def optimize_throughput_lb(c, rho, nlos_scale: float = 1.0, start: float = 0.5,
                           max_iter: int = 5000) -> OptResult:
    """Fixed-step (0.001) ascent of the throughput lower bound.

    The step direction comes from a central finite difference.  The walk
    stops at the first gradient sign flip (or once a move is below 1e-6),
    and the better of the last two iterates is returned.  When the
    unimodality condition fails a grid search on the bound is used and a
    :class:`UnimodalityWarning` is issued.
    """
    if not rate.lb_is_unimodal(c, rho, nlos_scale):
        warnings.warn(f"lower bound not guaranteed unimodal at c={c}, rho={rho}", UnimodalityWarning,
                      stacklevel=2)
        b, v = grid_argmax(_lb(c, rho, GRID, nlos_scale))
        return OptResult(b, v, GRID.size, Method.GRADIENT_LB, True, note="grid fallback")

    def grad(b):
        return (_lb(c, rho, b + FD_H, nlos_scale) - _lb(c, rho, b - FD_H, nlos_scale)) / (2 * FD_H)

    beta = start
    g = grad(beta)
    direction = math.copysign(1.0, g)
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        nxt = min(max(beta + direction * STEP, STEP), 1.0 - STEP)
        if abs(nxt - beta) < 1e-6:
            converged = True
            break
        g_next = grad(nxt)
        if math.copysign(1.0, g_next) != direction:
            if _lb(c, rho, nxt, nlos_scale) > _lb(c, rho, beta, nlos_scale):
                beta = nxt
            converged = True
            break
        beta = nxt
    beta = round(beta, 6)
    return OptResult(beta, float(_lb(c, rho, beta, nlos_scale)), it, Method.GRADIENT_LB, converged)


def newton_bisect(f, df, lo, hi, xtol=1e-14, ftol=1e-13, maxit=200):
    """Safeguarded Newton iteration for an increasing ``f`` bracketed by ``[lo, hi]``.

    Falls back to bisection whenever the Newton step leaves the bracket or the
    derivative is not positive.  Returns ``(root, iterations)``.
    """
    flo, fhi = f(lo), f(hi)
    if not flo < 0 < fhi:
        raise NoRootError(f"root not bracketed: f({lo})={flo}, f({hi})={fhi}")
    x = 0.5 * (lo + hi)
    for it in range(1, maxit + 1):
        fx = f(x)
        if abs(fx) <= ftol:
            return x, it
        if fx < 0:
            lo = x
        else:
            hi = x
        d = df(x)
        x_new = x - fx / d if d > 0 and np.isfinite(d) else np.nan
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= xtol:
            return x_new, it
        x = x_new
    return x, maxit


def optimize_keyrate_constrained(c, rho, eta, nlos_scale: float = 1.0) -> OptResult:
    """Largest key rate subject to ``P_out <= eta``.

    Both the key rate and the outage grow with beta, so the optimum sits on
    ``P_out(beta) = eta``; that root is found by safeguarded Newton-Raphson
    with the closed-form outage derivative.
    """
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    if not 0 <= c < 1:
        raise ValueError("c must lie in [0, 1)")
    lo, hi = BRACKET
    f = lambda b: rate.outage_probability(c, rho, b, nlos_scale) - eta
    df = lambda b: rate.outage_derivative(c, rho, b, nlos_scale)
    try:
        root, it = newton_bisect(f, df, lo, hi)
    except NoRootError as exc:
        raise NoRootError(f"no beta in (0, 1) reaches outage {eta} at c={c}, rho={rho}") from exc
    converged = abs(f(root)) <= 1e-8
    return OptResult(float(root), float(rate.key_rate_M(c, rho, root, nlos_scale)), it,
                     Method.NEWTON_CONSTRAINT, converged)


def keyrate_grid_scan(c, rho, eta, nlos_scale: float = 1.0) -> float:
    """Grid version of the inequality-constrained problem: largest grid beta with ``P_out <= eta``."""
    p = rate.outage_probability(c, rho, GRID, nlos_scale)
    ok = np.flatnonzero(p <= eta)
    if ok.size == 0:
        raise NoRootError("constraint infeasible on the grid")
    m = rate.key_rate_M(c, rho, GRID[ok], nlos_scale)
    return float(GRID[ok][int(np.argmax(m))])


TABLE_C = tuple(round(0.1 * i, 1) for i in range(10))
TABLE_RHO_DB = (5, 10, 15, 20, 25, 30)


def table1(nlos_scale: float = 2.0, c_values=TABLE_C, rho_db=TABLE_RHO_DB):
    """Rows ``(c, rho_dB, beta_opt, beta_star)`` over the LOS x SNR grid."""
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnimodalityWarning)
        for c in c_values:
            for r in rho_db:
                rho = float(rate.db_to_linear(r))
                opt = optimize_throughput_grid(c, rho, nlos_scale)
                lb = optimize_throughput_lb(c, rho, nlos_scale)
                rows.append((c, r, opt.beta_star, lb.beta_star))
    return rows
