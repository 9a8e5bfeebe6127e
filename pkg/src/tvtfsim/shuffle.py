"""Capacitor-shuffling randomness: two-level LFSR chain, schedule generation,
and the charging-overlap leakage probability (closed form and Monte Carlo)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .circuit import ROLE_CHARGE, ROLE_DRIVE, Schedule

# Tap masks under the convention: bit (w - k) of the mask carries the x^k term
# of the feedback polynomial, so feedback = parity(state & taps) reproduces the
# recurrence s[t+w] = sum of tapped history bits.
#   3-bit 0x03: x^3 + x^2 + 1
#   4-bit 0x03: x^4 + x^3 + 1
#   8-bit 0x1D: x^8 + x^6 + x^5 + x^4 + 1
#  16-bit 0x2D: x^16 + x^14 + x^13 + x^11 + 1
#  32-bit 0xC0000400: x^32 + x^22 + x^2 + x + 1
DEFAULT_TAPS = {3: 0x3, 4: 0x3, 8: 0x1D, 16: 0x2D, 32: 0xC0000400}

# Maximality cannot be enumerated cheaply above 16 bits; these masks come from
# standard primitive-polynomial tables.
TRUSTED_MAXIMAL_TAPS = {32: frozenset({0xC0000400})}

DEFAULT_PRIMARY_WIDTH = 8
DEFAULT_SELECTOR_WIDTH = 4
DEFAULT_PRIMARY_SEED = 1
DEFAULT_SELECTOR_SEED = 3


def lfsr_step(state: int, taps: int, width: int) -> int:
    """One Fibonacci right-shift: feedback = parity(state & taps) into the top bit."""
    if state == 0:
        raise ValueError("LFSR state must be nonzero")
    if not 0 < state < (1 << width):
        raise ValueError(f"state {state:#x} out of range for width {width}")
    feedback = bin(state & taps).count("1") & 1
    return (state >> 1) | (feedback << (width - 1))


@lru_cache(maxsize=None)
def _is_maximal(taps: int, width: int) -> bool:
    """Exhaustive cycle enumeration from state 1; cached per (taps, width)."""
    target = (1 << width) - 1
    state = 1
    for count in range(1, target + 1):
        state = lfsr_step(state, taps, width)
        if state == 1:
            return count == target
    return False


def verify_maximal_taps(taps: int, width: int) -> None:
    """Raise unless the tap mask is maximal-length for the width.

    Enumerates the full cycle for width <= 16; wider registers must appear in
    the trusted table.
    """
    if width <= 16:
        if not _is_maximal(taps, width):
            raise ValueError(
                f"taps {taps:#x} are not maximal-length for width {width} "
                f"(period != 2^{width} - 1)"
            )
    else:
        if taps not in TRUSTED_MAXIMAL_TAPS.get(width, frozenset()):
            raise ValueError(
                f"width {width} is too wide to enumerate; taps {taps:#x} not in the trusted table"
            )


@dataclass
class LfsrChain:
    """Two-level pseudo-random generator: a selector LFSR stochastically
    sub-samples a field of the primary LFSR's state.

    Both registers step once per output; the selector's low bit picks the high
    or low selector_width-bit field of the primary state. State is never
    re-seeded: the value left after one schedule seeds the next.
    """

    primary_width: int = DEFAULT_PRIMARY_WIDTH
    primary_taps: int | None = None
    primary_state: int = DEFAULT_PRIMARY_SEED
    selector_width: int = DEFAULT_SELECTOR_WIDTH
    selector_taps: int | None = None
    selector_state: int = DEFAULT_SELECTOR_SEED

    def __post_init__(self):
        if self.primary_taps is None:
            self.primary_taps = DEFAULT_TAPS.get(self.primary_width)
            if self.primary_taps is None:
                raise ValueError(f"no default taps for primary width {self.primary_width}")
        if self.selector_taps is None:
            self.selector_taps = DEFAULT_TAPS.get(self.selector_width)
            if self.selector_taps is None:
                raise ValueError(f"no default taps for selector width {self.selector_width}")
        if not 2 <= self.selector_width <= self.primary_width:
            raise ValueError("selector_width must be in [2, primary_width]")
        for name, state, width in (
            ("primary", self.primary_state, self.primary_width),
            ("selector", self.selector_state, self.selector_width),
        ):
            if not 0 < state < (1 << width):
                raise ValueError(f"{name} state must be a nonzero {width}-bit value, got {state}")
        verify_maximal_taps(self.primary_taps, self.primary_width)
        verify_maximal_taps(self.selector_taps, self.selector_width)

    @property
    def period(self) -> int:
        """Period of the joint (primary, selector) state sequence."""
        return math.lcm((1 << self.primary_width) - 1, (1 << self.selector_width) - 1)

    def next_value(self) -> int:
        """Step both registers and return the selected selector_width-bit field."""
        self.primary_state = lfsr_step(self.primary_state, self.primary_taps, self.primary_width)
        self.selector_state = lfsr_step(self.selector_state, self.selector_taps, self.selector_width)
        mask = (1 << self.selector_width) - 1
        if self.selector_state & 1:
            return (self.primary_state >> (self.primary_width - self.selector_width)) & mask
        return self.primary_state & mask

    def draw_index(self, pool_size: int) -> int:
        """Rejection-sample an index in [0, pool_size) from the output stream."""
        if pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        if pool_size > (1 << self.selector_width):
            raise ValueError(
                f"pool_size {pool_size} exceeds the {self.selector_width}-bit output range"
            )
        for _ in range(self.period):
            value = self.next_value()
            if value < pool_size:
                return value
        raise RuntimeError(
            f"no output below {pool_size} within one full period; degenerate chain configuration"
        )

    def output_values(self, count: int) -> np.ndarray:
        """The next `count` outputs as an array, advancing the chain state.

        For chains whose joint period fits in memory the full period is
        enumerated once and tiled, which keeps long schedule generation cheap.
        """
        if count < 0:
            raise ValueError("count must be >= 0")
        period = self.period
        if period <= (1 << 16):
            table = np.empty(period, dtype=np.int64)
            p_state, s_state = self.primary_state, self.selector_state
            for i in range(period):
                table[i] = self.next_value()
            reps = -(-count // period) if count else 0
            out = np.tile(table, max(reps, 1))[:count]
            # Rewind to the true post-consumption state: the enumeration above
            # advanced one full period (a no-op), so step forward count % period.
            self.primary_state, self.selector_state = p_state, s_state
            for _ in range(count % period):
                self.next_value()
            return out
        out = np.empty(count, dtype=np.int64)
        for i in range(count):
            out[i] = self.next_value()
        return out


def measure_output_period(chain: LfsrChain) -> int:
    """Smallest period of the chain's output sequence, found by enumeration."""
    state_period = chain.period
    probe = LfsrChain(
        chain.primary_width, chain.primary_taps, chain.primary_state,
        chain.selector_width, chain.selector_taps, chain.selector_state,
    )
    seq = [probe.next_value() for _ in range(2 * state_period)]
    for d in sorted(d for d in range(1, state_period + 1) if state_period % d == 0):
        if all(seq[i] == seq[i + d] for i in range(state_period)):
            return d
    raise AssertionError("sequence period must divide the state period")


@dataclass
class ShuffleParams:
    """Pool sizes and span of one schedule-generation run."""

    n: int = 10
    m: int = 1
    phases_per_cycle: int = 10
    n_cycles: int = 16

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.n < 2 * self.m + 1:
            raise ValueError(
                f"need n >= 2m + 1 for a non-overlapping draw, got n={self.n}, m={self.m}"
            )
        if self.phases_per_cycle < 1 or self.n_cycles < 1:
            raise ValueError("phases_per_cycle and n_cycles must be >= 1")

    @property
    def n_phases_total(self) -> int:
        return self.phases_per_cycle * self.n_cycles


def tvtf_schedule(params: ShuffleParams, chain: LfsrChain) -> Schedule:
    """Pseudo-randomly assign chargers and drivers for every phase.

    Two pools are kept: caps waiting to charge (initially the even indices)
    and caps ready to drive the AES (the odd indices). Each phase draws m
    distinct caps from each pool; afterwards the drawn caps swap pools. A cap
    can never hold both roles in a phase, so the AES is never connected to
    the supply.
    """
    to_be_charged = list(range(0, params.n, 2))
    to_supply_aes = list(range(1, params.n, 2))
    m = params.m
    if m > len(to_be_charged) or m > len(to_supply_aes):
        raise ValueError(f"m={m} exhausts a pool of {min(len(to_be_charged), len(to_supply_aes))}")
    n_phases = params.n_phases_total
    roles = np.zeros((n_phases, params.n), dtype=np.int8)
    period = chain.period

    # Small-period chains (every standard configuration) are consumed from a
    # pre-tiled output stream for speed; the chain state is reconciled to the
    # exact consumed count afterwards. Wide chains step one output at a time.
    fast = period <= (1 << 16)
    if fast:
        out_range = 1 << chain.selector_width
        min_threshold = min(len(to_be_charged), len(to_supply_aes)) - m + 1
        block = int(n_phases * 2 * m * (out_range / min_threshold) * 1.3) + 64
        start_state = (chain.primary_state, chain.selector_state)
        stream = chain.output_values(block)
        consumed = 0

    def draw(pool_size: int) -> int:
        nonlocal consumed, stream
        rejected = 0
        while True:
            if fast:
                if consumed >= len(stream):
                    stream = np.concatenate([stream, chain.output_values(block)])
                value = int(stream[consumed])
                consumed += 1
            else:
                value = chain.next_value()
            if value < pool_size:
                return value
            rejected += 1
            if rejected > period:
                raise RuntimeError(
                    f"no output below {pool_size} within one full period; "
                    "degenerate chain configuration"
                )

    for p in range(n_phases):
        chargers = [to_be_charged.pop(draw(len(to_be_charged))) for _ in range(m)]
        drivers = [to_supply_aes.pop(draw(len(to_supply_aes))) for _ in range(m)]
        roles[p, chargers] = ROLE_CHARGE
        roles[p, drivers] = ROLE_DRIVE
        to_supply_aes.extend(chargers)
        to_be_charged.extend(drivers)

    if fast:
        # Land the chain exactly where sequential next_value() calls would have.
        chain.primary_state, chain.selector_state = start_state
        for _ in range(consumed % period):
            chain.next_value()
    return Schedule(roles)


def _comb(a: int, b: int) -> int:
    if a < 0 or b < 0 or a < b:
        return 0
    return math.comb(a, b)


def p_leak_fraction(n: int, m: int) -> Fraction:
    """Exact probability that a charging set overlaps the reference set."""
    if not n >= m >= 1:
        raise ValueError(f"need n >= m >= 1, got n={n}, m={m}")
    denom = _comb(n - m, m)
    if denom == 0:
        return Fraction(1)
    return 1 - Fraction(_comb(n - 2 * m, m), denom)


def p_leak(n: int, m: int) -> float:
    """Probability that at least one of the m charging capacitors repeats.

    1 - C(n-2m, m) / C(n-m, m), with C(a, b) = 0 for a < b. Computed through
    rationals so small cases are exact in floating point.
    """
    return float(p_leak_fraction(n, m))


def p_leak_monte_carlo(n: int, m: int, trials: int, seed: int = 0) -> float:
    """Monte-Carlo estimate of p_leak by direct set sampling.

    Per trial: with a reference charging set of m caps fixed among the n - m
    caps not driving, draw a fresh m-subset of those n - m caps and count a
    leak when the two intersect.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not n >= m >= 1:
        raise ValueError(f"need n >= m >= 1, got n={n}, m={m}")
    pool = n - m
    if pool < m:
        return 1.0
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed,))))
    # Positions 0..m-1 of the pool are the reference set; a uniform m-subset
    # is the m smallest ranks of iid uniforms.
    u = rng.random((trials, pool))
    chosen = np.argpartition(u, m - 1, axis=1)[:, :m]
    leak = (chosen < m).any(axis=1)
    return float(leak.mean())
