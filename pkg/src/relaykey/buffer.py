"""Buffer-aided XOR broadcast: message construction, recovery and buffer analytics.

The relay and Node-B each hold a LIFO stack of surplus ``k_BR`` bits.  The
top of the stack is the end of the array; surplus bits are pushed in key
order and popped from the top.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .keygen import BitKey, difference_pmf, key_length_pmf
from .pmf import Pmf, trim

# buffer masses below this are dropped from PMF supports
PMF_FLOOR = 1e-300
_PAD_BLOCK = 4096


class Kind(enum.Enum):
    OPTIMAL = "optimal"
    MIN = "min"
    INTERMEDIATE = "intermediate"


@dataclass(frozen=True)
class SchemeKind:
    kind: Kind
    switch_on_round: int = 0

    def __post_init__(self):
        if self.switch_on_round < 0:
            raise ValueError("switch_on_round must be non-negative")

    @classmethod
    def optimal(cls):
        return cls(Kind.OPTIMAL)

    @classmethod
    def min(cls):
        return cls(Kind.MIN)

    @classmethod
    def intermediate(cls, switch_on_round: int):
        return cls(Kind.INTERMEDIATE, int(switch_on_round))

    @classmethod
    def parse(cls, text: str) -> "SchemeKind":
        """``"optimal"``, ``"min"`` or ``"intermediate:<switch-on round>"``."""
        name, _, arg = str(text).partition(":")
        name = name.strip().lower()
        if name == "optimal":
            return cls.optimal()
        if name == "min":
            return cls.min()
        if name == "intermediate":
            return cls.intermediate(int(arg or 0))
        raise ValueError(f"unknown scheme {text!r}")

    def __str__(self):
        if self.kind is Kind.INTERMEDIATE:
            return f"intermediate:{self.switch_on_round}"
        return self.kind.value

    @property
    def stores(self) -> bool:
        return self.kind is not Kind.MIN

    def may_spend(self, m: int) -> bool:
        if self.kind is Kind.OPTIMAL:
            return True
        if self.kind is Kind.MIN:
            return False
        return m > self.switch_on_round


class ReplicaDivergenceError(RuntimeError):
    """Relay and Node-B buffers no longer agree."""


def _synthetic_pad(seed: int, start: int, count: int) -> np.ndarray:
    """Bits ``start .. start+count-1`` of the shared synthetic pad stream."""
    if count == 0:
        return np.zeros(0, dtype=np.uint8)
    first, last = start // _PAD_BLOCK, (start + count - 1) // _PAD_BLOCK
    blocks = [np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, b])))
              .integers(0, 2, _PAD_BLOCK, dtype=np.uint8) for b in range(first, last + 1)]
    stream = np.concatenate(blocks)
    off = start - first * _PAD_BLOCK
    return stream[off: off + count]


@dataclass(frozen=True)
class BufferState:
    """One replica of the shared buffer after round ``round``.

    For the optimal scheme the stack is backed by an inexhaustible pad of
    synthetic pre-shared bits, generated from ``pad_seed``.
    """

    scheme: SchemeKind
    stack: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8))
    round: int = 0
    pad_seed: int = 0
    pad_used: int = 0

    def __post_init__(self):
        object.__setattr__(self, "stack", np.asarray(self.stack, dtype=np.uint8).ravel())

    @property
    def size(self) -> int:
        return int(self.stack.size)

    def spendable(self, m: int | None = None) -> float:
        m = self.round + 1 if m is None else m
        if not self.scheme.may_spend(m):
            return 0
        return math.inf if self.scheme.kind is Kind.OPTIMAL else self.size

    def push(self, bits: np.ndarray) -> "BufferState":
        if not self.scheme.stores or len(bits) == 0:
            return self
        return replace(self, stack=np.concatenate([self.stack, np.asarray(bits, dtype=np.uint8)]))

    def pop(self, k: int) -> tuple[np.ndarray, "BufferState"]:
        """Pop ``k`` bits, most recent first."""
        if k == 0:
            return np.zeros(0, dtype=np.uint8), self
        from_stack = min(k, self.size)
        taken = self.stack[self.size - from_stack:][::-1]
        state = replace(self, stack=self.stack[: self.size - from_stack])
        short = k - from_stack
        if short:
            if self.scheme.kind is not Kind.OPTIMAL:
                raise ReplicaDivergenceError(f"pop of {k} bits from a buffer of {self.size}")
            taken = np.concatenate([taken, _synthetic_pad(self.pad_seed, self.pad_used, short)])
            state = replace(state, pad_used=self.pad_used + short)
        return taken, state

    def same_as(self, other: "BufferState") -> bool:
        return (self.round == other.round and self.pad_used == other.pad_used
                and np.array_equal(self.stack, other.stack))


@dataclass(frozen=True)
class RoundOutcome:
    m: int
    n_ar: int
    n_br: int
    n_xor: int
    buffer_before: int
    buffer_after: int
    outage: bool
    delivered_bits: int


def _xor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.bitwise_xor(a, b)


def build_xor_message(k_ar: BitKey, k_br: BitKey, buf: BufferState,
                      scheme: SchemeKind | None = None) -> tuple[BitKey, BufferState]:
    """Relay side of the broadcast: form ``k_XOR`` and update the buffer."""
    if scheme is not None and scheme != buf.scheme:
        buf = replace(buf, scheme=scheme)
    m = buf.round + 1
    n_ar, n_br = k_ar.length, k_br.length
    a, b = k_ar.bits, k_br.bits
    if n_ar == n_br:
        msg, new = _xor(a, b), buf
    elif n_ar < n_br:
        msg = _xor(a, b[:n_ar])
        new = buf.push(b[n_ar:])
    elif n_ar - n_br > buf.spendable(m):
        msg, new = _xor(a[:n_br], b), buf
    else:
        extra, new = buf.pop(n_ar - n_br)
        msg = _xor(a, np.concatenate([b, extra]))
    return BitKey(msg), replace(new, round=m)


def recover_at_node_b(k_xor_hat: BitKey, k_br: BitKey, buf_b: BufferState,
                      reference: BufferState | None = None) -> tuple[BitKey, BufferState]:
    """Node-B side: strip the pad from the received message and mirror the buffer update.

    ``reference`` (the relay's updated buffer) turns on the replica check.
    """
    m = buf_b.round + 1
    n_xor, n_br = k_xor_hat.length, k_br.length
    x, b = k_xor_hat.bits, k_br.bits
    if n_xor == n_br:
        key, new = _xor(x, b), buf_b
    elif n_xor < n_br:
        key = _xor(x, b[:n_xor])
        new = buf_b.push(b[n_xor:])
    else:
        u, new = buf_b.pop(n_xor - n_br)
        key = _xor(x, np.concatenate([b, u]))
    new = replace(new, round=m)
    if reference is not None and not new.same_as(reference):
        raise ReplicaDivergenceError(f"buffers diverged at round {m}")
    return BitKey(key), new


# --------------------------------------------------------------------------- analytics


def _as_pmf(b0) -> Pmf:
    return b0 if isinstance(b0, Pmf) else Pmf.point(int(b0))


def _survival(d_pmf: Pmf, values: np.ndarray) -> np.ndarray:
    """``P(D > v)`` for each integer ``v``."""
    tail = np.concatenate([np.cumsum(d_pmf.masses[::-1])[::-1][1:], [0.0]])
    idx = values - d_pmf.support_offset
    return np.where(idx < 0, 1.0, tail[np.clip(idx, 0, tail.size - 1)])


def _spend_step(prev: Pmf, d_pmf: Pmf) -> Pmf:
    """One round of ``B <- B - D if D <= B else B``."""
    pb, lo = prev.masses, prev.support_offset
    if lo < 0:
        raise ValueError("buffer support must be non-negative")
    # Y = B - D over its full support
    y = np.convolve(pb, d_pmf.masses[::-1])
    y_lo = lo - d_pmf.max_value
    out_lo = 0
    out_hi = max(prev.max_value, y_lo + y.size - 1)
    out = np.zeros(out_hi - out_lo + 1)
    start = max(0, -y_lo)
    out[y_lo + start:] += y[start:]
    # D > b keeps the buffer unchanged
    b_vals = prev.support
    out[b_vals] += pb * _survival(d_pmf, b_vals)
    off, masses = trim(out_lo, out, PMF_FLOOR)
    return Pmf(off, masses)


def _grow_step(prev: Pmf, d_pmf: Pmf) -> Pmf:
    """One round of pure accumulation ``B <- B + max(0, -D)`` (spending disabled)."""
    n = max(0, -d_pmf.support_offset)
    surplus = np.asarray(d_pmf.prob(-np.arange(n + 1)), dtype=float)
    surplus[0] = d_pmf.masses[d_pmf.support >= 0].sum()
    out = np.convolve(prev.masses, surplus)
    off, masses = trim(prev.support_offset, out, PMF_FLOOR)
    return Pmf(off, masses)


def buffer_pmf_recursion(d_pmf: Pmf, b0, rounds: int) -> list[Pmf]:
    """Laws of ``B(m'+1), ..., B(m'+rounds)`` when spending starts at ``B(m') = b0``.

    ``b0`` may be an integer or a :class:`Pmf`.
    """
    if rounds < 1:
        raise ValueError("rounds must be positive")
    cur = _as_pmf(b0)
    out = []
    for _ in range(rounds):
        cur = _spend_step(cur, d_pmf)
        out.append(cur)
    return out


def buffer_pmf_accumulate(d_pmf: Pmf, b0, rounds: int) -> list[Pmf]:
    """Buffer laws while surplus is stored but never spent."""
    cur = _as_pmf(b0)
    out = []
    for _ in range(rounds):
        cur = _grow_step(cur, d_pmf)
        out.append(cur)
    return out


def _conditional_table(key_pmf: Pmf) -> np.ndarray:
    """``E[N_XOR | B = b]`` for ``b = 0 .. n`` (constant beyond ``n``)."""
    if key_pmf.support_offset != 0:
        raise ValueError("key-length PMF must start at 0")
    p = key_pmf.masses
    n = p.size - 1
    z = np.arange(n + 1)
    s1 = np.cumsum(z * p)  # sum_{z1 <= k} z1 P(z1)
    s2 = s1  # identical laws for both key lengths
    table = np.empty(n + 1)
    for b in range(n + 1):
        # N_AR - N_BR > b: the broadcast shrinks to N_BR
        z1 = np.arange(b + 1, n + 1)
        first = math.fsum(p[z1] * s2[z1 - b - 1]) if z1.size else 0.0
        # N_AR - N_BR <= b: all of k_AR goes out
        second = math.fsum(p * s1[np.minimum(n, b + z)])
        table[b] = first + second
    return table


def expected_nxor_given_buffer(key_pmf: Pmf, b: int) -> float:
    """Mean broadcast length when ``b`` buffer bits may be spent."""
    n = key_pmf.max_value
    if b < 0:
        raise ValueError("buffer size must be non-negative")
    if b >= n:
        return key_pmf.mean()
    return float(_conditional_table(key_pmf)[b])


def expected_nxor(key_pmf: Pmf, buffer_pmf: Pmf, table: np.ndarray | None = None) -> float:
    """Mixture of the conditional mean over the buffer law."""
    if table is None:
        table = _conditional_table(key_pmf)
    n = table.size - 1
    b = buffer_pmf.support
    vals = np.where(b >= n, table[n], table[np.minimum(b, n)])
    return math.fsum(buffer_pmf.masses * vals)


def expected_nxor_min(key_pmf: Pmf) -> float:
    return expected_nxor_given_buffer(key_pmf, 0)


def expected_nxor_series(L: int, p_eps: float, scheme: SchemeKind, rounds: int) -> np.ndarray:
    """``E[N_XOR(m)]`` for ``m = 1 .. rounds`` under the given buffer scheme."""
    key = key_length_pmf(L, p_eps)
    if scheme.kind is Kind.OPTIMAL:
        return np.full(rounds, key.mean())
    table = _conditional_table(key)
    if scheme.kind is Kind.MIN:
        return np.full(rounds, table[0])
    d = difference_pmf(L, p_eps)
    out = np.empty(rounds)
    buf = Pmf.point(0)
    for m in range(1, rounds + 1):
        if scheme.may_spend(m):
            out[m - 1] = expected_nxor(key, buf, table)
            buf = _spend_step(buf, d)
        else:
            out[m - 1] = table[0]
            buf = _grow_step(buf, d)
    return out
