"""Monte Carlo protocol trajectories and the practical (finite-blocklength) design objective."""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import rate
from .buffer import (BufferState, Kind, RoundOutcome, SchemeKind, build_xor_message,
                     expected_nxor_series, recover_at_node_b)
from .channel import LinkParams, check_los, make_rng, run_probe_phase, sample_channel, unfold
from .fbl import error_probability, fbl_outage
from .keygen import BitKey, consensus_for_target, key_length_pmf, quantize_and_reconcile, select_guard_band
from .optimize import optimize_throughput_grid

MIN_BATCHES = 30
BETA_COARSE = np.round(np.arange(0.01, 1.0, 0.01), 2)

# channel convention and mismatch target used by the finite-blocklength study
DEFAULT_NLOS_SCALE = 2.0
DEFAULT_EPSILON = 3e-6


class OutageModel(enum.Enum):
    ASYMPTOTIC = "AsymptoticMarcumQ"
    FBL = "FiniteBlocklength"

    @classmethod
    def parse(cls, text) -> "OutageModel":
        for m in cls:
            if str(text).lower() in (m.value.lower(), m.name.lower()):
                return m
        raise ValueError(f"unknown outage model {text!r}")


class KeySource(enum.Enum):
    PRACTICAL = "practical"
    FLUID = "fluid"


@dataclass(frozen=True)
class ExperimentConfig:
    c_ar: float = 0.0
    c_br: float | None = None
    rho_db: float = 20.0
    beta: float | str = 0.6
    L: int = 100
    rounds: int = 100
    trials: int = 1000
    scheme: SchemeKind = field(default_factory=SchemeKind.optimal)
    epsilon: float = DEFAULT_EPSILON
    outage_model: OutageModel = OutageModel.FBL
    seed: int = 0
    key_source: KeySource = KeySource.PRACTICAL
    nlos_scale: float = DEFAULT_NLOS_SCALE

    def __post_init__(self):
        check_los(self.c_ar)
        if self.c_br is None:
            object.__setattr__(self, "c_br", self.c_ar)
        check_los(self.c_br)
        if self.trials < 1 or self.rounds < 1:
            raise ValueError("trials and rounds must be at least 1")
        if int(self.L) != self.L or self.L < 1:
            raise ValueError("L must be a positive integer")
        if isinstance(self.beta, str):
            if self.beta != "optimize":
                raise ValueError("beta must be a number in (0, 1) or 'optimize'")
        elif not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError("epsilon must lie in (0, 0.5)")

    @property
    def rho(self) -> float:
        return float(rate.db_to_linear(self.rho_db))

    @property
    def asymmetric(self) -> bool:
        return self.c_ar != self.c_br


@dataclass
class ExperimentReport:
    mean_nxor_per_round: np.ndarray
    nxor_stderr_per_round: np.ndarray
    throughput_per_round: np.ndarray
    throughput_estimate: float
    throughput_stderr: float
    outage_rate: float
    outage_stderr: float
    beta_used: float
    mean_nar: float
    mean_nbr: float
    mismatch_rate: float
    recovery_failures: int
    analytic_reference: rate.RateReport | None = None
    trajectory: list[RoundOutcome] = field(default_factory=list)

    def same_as(self, other: "ExperimentReport") -> bool:
        arrays = ("mean_nxor_per_round", "nxor_stderr_per_round", "throughput_per_round")
        scalars = ("throughput_estimate", "throughput_stderr", "outage_rate", "outage_stderr",
                   "beta_used", "mean_nar", "mean_nbr", "mismatch_rate", "recovery_failures")
        return (all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)
                and all(getattr(self, s) == getattr(other, s) for s in scalars)
                and self.trajectory == other.trajectory)


# --------------------------------------------------------------------------- analytic objective


def practical_point(cfg: ExperimentConfig, beta: float) -> tuple[float, float, float]:
    """``(E[N_XOR], P_out, E[N_XOR] (1 - P_out))`` at ``beta`` from the analytic key-length laws.

    The buffer law is taken at the last configured round.  Outage is evaluated
    on the B-R link at rate ``E[N_XOR] / L``.
    """
    if beta <= 0.0:
        return 0.0, 0.0, 0.0
    ns = cfg.nlos_scale
    p_eps = consensus_for_target(cfg.c_br, cfg.rho, beta, cfg.epsilon, ns)
    scheme = SchemeKind.min() if cfg.asymmetric else cfg.scheme
    if cfg.asymmetric:
        # min of two independent lengths with different consensus probabilities
        p_ar = consensus_for_target(cfg.c_ar, cfg.rho, beta, cfg.epsilon, ns)
        a = key_length_pmf(cfg.L, p_ar).masses
        b = key_length_pmf(cfg.L, p_eps).masses
        n = np.arange(a.size)
        sf_a = np.concatenate([np.cumsum(a[::-1])[::-1], [0.0]])
        sf_b = np.concatenate([np.cumsum(b[::-1])[::-1], [0.0]])
        e = math.fsum(sf_a[n[1:]] * sf_b[n[1:]])
    else:
        e = float(expected_nxor_series(cfg.L, p_eps, scheme, cfg.rounds)[-1])
    r = e / cfg.L
    if cfg.outage_model is OutageModel.FBL:
        p_out = fbl_outage(cfg.c_br, cfg.rho, beta, r, cfg.L, ns)
    else:
        p_out = float(rate.rician_power_cdf((2.0 ** r - 1.0) / ((1.0 - beta) * cfg.rho), cfg.c_br, ns))
    return e, p_out, e * (1.0 - p_out)


def practical_throughput_objective(cfg: ExperimentConfig, beta: float) -> float:
    """``E[N_XOR] (1 - P_out)`` in bits per round at power split ``beta``."""
    return practical_point(cfg, beta)[2]


def optimize_practical_beta(cfg: ExperimentConfig, refine: bool = True) -> tuple[float, float]:
    """Grid maximiser of the practical objective: 0.01 steps, then 0.001 steps around the best."""
    vals = np.array([practical_throughput_objective(cfg, b) for b in BETA_COARSE])
    best = float(BETA_COARSE[int(np.argmax(vals))])
    if not refine:
        return best, float(vals.max())
    fine = np.round(np.arange(max(best - 0.01, 0.001), min(best + 0.01, 0.999) + 1e-12, 0.001), 3)
    fv = np.array([practical_throughput_objective(cfg, b) for b in fine])
    i = int(np.argmax(fv))
    return float(fine[i]), float(fv[i])


def keyrate_outage_sweep(cfg: ExperimentConfig, betas) -> np.ndarray:
    """Rows ``(beta, E[N_XOR], P_out)`` over ``betas``."""
    return np.array([(b, *practical_point(cfg, b)[:2]) for b in betas])


def interpolate_crossing(rows: np.ndarray, eta: float) -> tuple[float, float]:
    """First upward crossing of ``P_out = eta`` by linear interpolation: ``(beta, E[N_XOR])``."""
    p = rows[:, 2]
    above = np.flatnonzero(p >= eta)
    if above.size == 0 or above[0] == 0:
        raise ValueError(f"outage target {eta} is not crossed inside the sweep")
    k = int(above[0])
    t = (eta - p[k - 1]) / (p[k] - p[k - 1])
    lerp = lambda col: float(rows[k - 1, col] + t * (rows[k, col] - rows[k - 1, col]))
    return lerp(0), lerp(1)


# --------------------------------------------------------------------------- Monte Carlo


def resolve_beta(cfg: ExperimentConfig) -> float:
    if cfg.beta != "optimize":
        return float(cfg.beta)
    if cfg.key_source is KeySource.FLUID or cfg.outage_model is OutageModel.ASYMPTOTIC:
        return optimize_throughput_grid(cfg.c_br, cfg.rho, cfg.nlos_scale).beta_star
    return optimize_practical_beta(cfg)[0]


@dataclass(frozen=True)
class _Plan:
    cfg: ExperimentConfig
    beta: float
    scheme: SchemeKind
    gb_ar: object
    gb_br: object
    fluid_bits: int


def _plan(cfg: ExperimentConfig, beta: float) -> _Plan:
    scheme = SchemeKind.min() if cfg.asymmetric else cfg.scheme
    gb_ar = gb_br = None
    fluid = 0
    if cfg.key_source is KeySource.PRACTICAL:
        gb_ar = select_guard_band(cfg.c_ar, cfg.rho, beta, cfg.epsilon, cfg.nlos_scale)
        gb_br = select_guard_band(cfg.c_br, cfg.rho, beta, cfg.epsilon, cfg.nlos_scale)
    else:
        fluid = int(math.floor(cfg.L * float(rate.key_rate_M(cfg.c_br, cfg.rho, beta, cfg.nlos_scale))))
    return _Plan(cfg, beta, scheme, gb_ar, gb_br, fluid)


def _pad_seed(seed: int) -> int:
    return int(np.random.SeedSequence([seed, 0x9AD]).generate_state(1)[0])


def _run_trial(plan: _Plan, trial: int):
    """One trajectory; returns per-round arrays and key-agreement counters."""
    cfg = plan.cfg
    rng = make_rng(np.random.SeedSequence([cfg.seed, trial]))
    buf_r = BufferState(plan.scheme, pad_seed=_pad_seed(cfg.seed))
    buf_b = buf_r
    R = cfg.rounds
    n_ar = np.zeros(R, dtype=np.int64)
    n_br = np.zeros(R, dtype=np.int64)
    n_xor = np.zeros(R, dtype=np.int64)
    b_after = np.zeros(R, dtype=np.int64)
    outage = np.zeros(R, dtype=bool)
    mismatches = 0
    bits = 0
    failures = 0
    link = LinkParams(cfg.c_ar, cfg.rho, cfg.L, plan.beta)
    gain = (1.0 - plan.beta) * cfg.rho
    for m in range(R):
        if cfg.key_source is KeySource.PRACTICAL:
            obs = run_probe_phase(link, rng, cfg.nlos_scale, c_BR=cfg.c_br)
            k_ar, k_a, mis_a = quantize_and_reconcile(unfold(obs.y_R_fromA), unfold(obs.y_A), plan.gb_ar)
            k_br, k_b, mis_b = quantize_and_reconcile(unfold(obs.y_R_fromB), unfold(obs.y_B), plan.gb_br)
            mismatches += mis_a + mis_b
            bits += k_ar.length + k_br.length
        else:
            k_ar = BitKey.random(plan.fluid_bits, rng)
            k_br = BitKey.random(plan.fluid_bits, rng)
        k_xor, buf_r = build_xor_message(k_ar, k_br, buf_r)
        # broadcast over a fresh B-R fading block at rate N_XOR / L
        g = abs(sample_channel(cfg.c_br, rng, None, cfg.nlos_scale)) ** 2 * gain
        r = k_xor.length / cfg.L
        if cfg.outage_model is OutageModel.FBL:
            out = bool(rng.random() < error_probability(g, r, cfg.L))
        else:
            out = bool(math.log2(1.0 + g) < r)
        k_hat, buf_b = recover_at_node_b(k_xor, k_br, buf_b, reference=buf_r)
        if not out and not np.array_equal(k_hat.bits, k_ar.bits[: k_xor.length]):
            failures += 1
        n_ar[m], n_br[m], n_xor[m], b_after[m], outage[m] = k_ar.length, k_br.length, k_xor.length, buf_r.size, out
    return n_ar, n_br, n_xor, b_after, outage, mismatches, bits, failures


def _run_chunk(args):
    plan, trials = args
    return [_run_trial(plan, t) for t in trials]


def _batch_stderr(per_trial: np.ndarray) -> float:
    n = per_trial.size
    if n < 2:
        return float("nan")
    k = min(MIN_BATCHES, n) if n >= MIN_BATCHES else n
    means = np.array([b.mean() for b in np.array_split(per_trial, k)])
    return float(means.std(ddof=1) / math.sqrt(k))


def default_workers() -> int:
    raw = os.environ.get("RELAYKEY_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"RELAYKEY_THREADS must be an integer, got {raw!r}") from None


def run_experiment(cfg: ExperimentConfig, workers: int | None = None,
                   keep_trajectory: bool = False) -> ExperimentReport:
    """Run ``cfg.trials`` independent trajectories of ``cfg.rounds`` protocol rounds.

    Trial ``t`` draws from its own counter-based stream keyed by ``(seed, t)``,
    so results do not depend on ``workers``.
    """
    if cfg.asymmetric and cfg.scheme.kind is not Kind.MIN:
        cfg = replace(cfg, scheme=SchemeKind.min())
    beta = resolve_beta(cfg)
    plan = _plan(cfg, beta)
    workers = default_workers() if workers is None else max(1, int(workers))
    trials = list(range(cfg.trials))
    if workers == 1:
        results = _run_chunk((plan, trials))
    else:
        chunks = [(plan, c.tolist()) for c in np.array_split(np.array(trials), workers) if c.size]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = [r for part in pool.map(_run_chunk, chunks) for r in part]
    n_ar = np.stack([r[0] for r in results])
    n_br = np.stack([r[1] for r in results])
    n_xor = np.stack([r[2] for r in results])
    b_after = np.stack([r[3] for r in results])
    out = np.stack([r[4] for r in results])
    delivered = n_xor * ~out
    per_trial_tp = delivered.mean(axis=1) / cfg.L
    per_trial_out = out.mean(axis=1)
    bits = sum(r[6] for r in results)
    mism = sum(r[5] for r in results)
    trajectory = []
    if keep_trajectory:
        prev = np.concatenate([[0], b_after[0, :-1]])
        trajectory = [RoundOutcome(m + 1, int(n_ar[0, m]), int(n_br[0, m]), int(n_xor[0, m]), int(prev[m]),
                                   int(b_after[0, m]), bool(out[0, m]), int(delivered[0, m]))
                      for m in range(cfg.rounds)]
    reference = None
    if beta < 1.0:
        reference = rate.throughput(cfg.c_br, cfg.rho, beta, cfg.nlos_scale)
    return ExperimentReport(
        mean_nxor_per_round=n_xor.mean(axis=0),
        nxor_stderr_per_round=n_xor.std(axis=0, ddof=1) / math.sqrt(cfg.trials) if cfg.trials > 1
        else np.full(cfg.rounds, np.nan),
        throughput_per_round=delivered.mean(axis=0) / cfg.L,
        throughput_estimate=float(per_trial_tp.mean()),
        throughput_stderr=_batch_stderr(per_trial_tp),
        outage_rate=float(per_trial_out.mean()),
        outage_stderr=_batch_stderr(per_trial_out),
        beta_used=beta,
        mean_nar=float(n_ar.mean()),
        mean_nbr=float(n_br.mean()),
        mismatch_rate=mism / bits if bits else 0.0,
        recovery_failures=int(sum(r[7] for r in results)),
        analytic_reference=reference,
        trajectory=trajectory,
    )


def asymmetric_mode(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    """Unequal LOS on the two links: the buffer is disabled and the shorter key sets the broadcast length."""
    if not cfg.c_ar < cfg.c_br and cfg.c_ar != cfg.c_br:
        # mirrored case: swap the roles of the two end nodes
        cfg = replace(cfg, c_ar=cfg.c_br, c_br=cfg.c_ar)
    return run_experiment(replace(cfg, scheme=SchemeKind.min()), workers)


def asymmetric_beta_opt(c_ar, c_br, rho, nlos_scale: float = 1.0) -> float:
    """Power split for the asymmetric links: the symmetric optimum evaluated at the B-R LOS fraction."""
    check_los(c_ar)
    return optimize_throughput_grid(c_br, rho, nlos_scale).beta_star


def simulate_buffer_lengths(L: int, p_eps: float, rounds: int, trials: int, seed=0,
                            b0: int = 0) -> np.ndarray:
    """Buffer sizes ``B(1..rounds)`` of the spend-enabled rule for Binomial key lengths.

    Vectorised over trials; returns an array of shape ``(trials, rounds)``.
    """
    rng = make_rng(seed)
    b = np.full(trials, b0, dtype=np.int64)
    out = np.empty((trials, rounds), dtype=np.int64)
    for m in range(rounds):
        d = rng.binomial(2 * L, p_eps, trials) - rng.binomial(2 * L, p_eps, trials)
        b = np.where(d <= b, b - d, b)
        out[:, m] = b
    return out
