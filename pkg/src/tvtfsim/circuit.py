"""Switched-capacitor network simulation between the supply and the AES load.

The AES current demand is replayed as a current source (voltage-independent);
capacitors in the driving role are discharged by it, capacitors in the
charging role draw an exponential RC current from the supply, and reset-role
capacitors are forced to a bias voltage on a separate rail that the attacker
cannot observe. The attacker-visible output is the total supply current
resampled onto the input trace's sample grid.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .traces import TraceSet

ROLE_IDLE = 0
ROLE_CHARGE = 1
ROLE_DRIVE = 2
ROLE_RESET = 3

ROLE_NAMES = {ROLE_IDLE: "idle", ROLE_CHARGE: "charge", ROLE_DRIVE: "drive", ROLE_RESET: "reset"}


class UnpoweredPhaseError(ValueError):
    """A phase within the simulated span has no capacitor driving the AES."""


@dataclass
class CircuitConfig:
    """Electrical parameters of the switched-capacitor network."""

    v_dd: float = 1.2
    capacitances: tuple = tuple([20e-12] * 10)
    switch_resistance: float = 10.0
    phases_per_cycle: int = 10
    clock_frequency: float = 125e6
    integration_substeps: int = 16
    reset_voltage: float | None = None  # None -> v_dd / 2

    def __post_init__(self):
        self.capacitances = tuple(float(c) for c in self.capacitances)
        if len(self.capacitances) < 1:
            raise ValueError("need at least one capacitor")
        if any(c <= 0 for c in self.capacitances):
            raise ValueError("all capacitances must be positive")
        if self.switch_resistance <= 0:
            raise ValueError("switch_resistance must be positive")
        if self.phases_per_cycle < 1:
            raise ValueError("phases_per_cycle must be >= 1")
        if self.clock_frequency <= 0:
            raise ValueError("clock_frequency must be positive")
        if self.integration_substeps < 1:
            raise ValueError("integration_substeps must be >= 1")
        if self.v_dd <= 0:
            raise ValueError("v_dd must be positive")
        if self.reset_voltage is None:
            self.reset_voltage = self.v_dd / 2
        if not 0 <= self.reset_voltage <= self.v_dd:
            raise ValueError("reset_voltage must lie in [0, v_dd]")

    @property
    def n_capacitors(self) -> int:
        return len(self.capacitances)

    @property
    def phase_duration(self) -> float:
        return 1.0 / (self.clock_frequency * self.phases_per_cycle)


@dataclass
class CapacitorArrayState:
    """Snapshot of per-capacitor voltages at a phase boundary."""

    voltages: np.ndarray
    phase_index: int
    v_dd: float = 1.2

    def __post_init__(self):
        self.voltages = np.asarray(self.voltages, dtype=np.float64)
        if np.any(self.voltages < 0) or np.any(self.voltages > self.v_dd):
            raise ValueError("capacitor voltages must lie in [0, v_dd]")


@dataclass
class Schedule:
    """Per-phase role assignment of every capacitor for a whole simulation.

    Encoded as an (n_phases_total, n_capacitors) int8 matrix of ROLE_* values;
    one role per capacitor per phase, so a capacitor can never bridge the
    supply and the AES within a phase.
    """

    roles: np.ndarray

    def __post_init__(self):
        self.roles = np.ascontiguousarray(self.roles, dtype=np.int8)
        if self.roles.ndim != 2:
            raise ValueError("roles must be a 2-D matrix")
        if self.roles.size and (self.roles.min() < ROLE_IDLE or self.roles.max() > ROLE_RESET):
            raise ValueError("roles must contain only ROLE_IDLE/CHARGE/DRIVE/RESET values")

    @classmethod
    def from_role_sets(cls, n_capacitors: int, phases: Iterable[tuple]) -> "Schedule":
        """Build a schedule from per-phase (charging, driving, reset) index sets.

        Raises if any sets overlap or an index is out of range.
        """
        rows = []
        for p, (charging, driving, reset) in enumerate(phases):
            charging, driving, reset = set(charging), set(driving), set(reset)
            if charging & driving or charging & reset or driving & reset:
                raise ValueError(f"phase {p}: a capacitor appears in more than one role")
            row = np.zeros(n_capacitors, dtype=np.int8)
            for idx_set, role in ((charging, ROLE_CHARGE), (driving, ROLE_DRIVE), (reset, ROLE_RESET)):
                for i in idx_set:
                    if not 0 <= i < n_capacitors:
                        raise ValueError(f"phase {p}: capacitor index {i} out of range")
                    row[i] = role
            rows.append(row)
        return cls(np.array(rows, dtype=np.int8))

    @property
    def n_phases_total(self) -> int:
        return self.roles.shape[0]

    @property
    def n_capacitors(self) -> int:
        return self.roles.shape[1]

    def charging(self, phase: int) -> list:
        return np.flatnonzero(self.roles[phase] == ROLE_CHARGE).tolist()

    def driving(self, phase: int) -> list:
        return np.flatnonzero(self.roles[phase] == ROLE_DRIVE).tolist()

    def resetting(self, phase: int) -> list:
        return np.flatnonzero(self.roles[phase] == ROLE_RESET).tolist()

    def export_csv(self, path) -> None:
        """Audit export: one row per phase with the charging/driving/reset sets."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["phase", "charging", "driving", "reset"])
            for p in range(self.n_phases_total):
                writer.writerow([
                    p,
                    " ".join(map(str, self.charging(p))),
                    " ".join(map(str, self.driving(p))),
                    " ".join(map(str, self.resetting(p))),
                ])


@dataclass
class ChargeLedger:
    """Per-trace charge bookkeeping of a simulation run (coulombs)."""

    supply_charge: np.ndarray
    aes_charge: np.ndarray
    reset_charge: np.ndarray
    stored_delta: np.ndarray
    final_voltages: np.ndarray

    def conservation_residual(self) -> np.ndarray:
        """supply_in - (aes_out + reset_out + stored_increase), per trace."""
        return self.supply_charge - (self.aes_charge + self.reset_charge + self.stored_delta)


def residue_voltage(v_start: float, c: float, aes_current_segment, sample_period: float) -> float:
    """Capacitor voltage after sourcing a sampled current segment for its duration.

    The segment is integrated with the trapezoidal rule at the given sample
    spacing, so k samples cover a duration of (k - 1) * sample_period.
    """
    if c <= 0:
        raise ValueError(f"capacitance must be positive, got {c}")
    segment = np.asarray(aes_current_segment, dtype=np.float64)
    if not np.all(np.isfinite(segment)):
        raise ValueError("current segment contains non-finite samples")
    charge = np.trapezoid(segment, dx=sample_period) if segment.size > 1 else 0.0
    return float(v_start - charge / c)


def charge_current(v_res: float, v_dd: float, r: float, c: float, t):
    """Supply current while recharging a capacitor from residue v_res through R.

    Accepts a scalar or array of times; rejects negative t.
    """
    if r <= 0 or c <= 0:
        raise ValueError("r and c must be positive")
    if v_res > v_dd:
        raise ValueError("v_res must not exceed v_dd")
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0):
        raise ValueError("t must be >= 0")
    out = (v_dd - v_res) / r * np.exp(-t_arr / (r * c))
    return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out


def max_droop(cfg: CircuitConfig, worst_case_current: float, phase_duration: float) -> float:
    """Worst-case single-phase voltage droop across the smallest capacitor."""
    if worst_case_current < 0 or phase_duration <= 0:
        raise ValueError("worst_case_current must be >= 0 and phase_duration positive")
    return worst_case_current * phase_duration / min(cfg.capacitances)


TWO_PHASE_NO_RESET = "two_phase_no_reset"
THREE_PHASE_WITH_RESET = "three_phase_with_reset"
N_PHASE_ROUND_ROBIN = "n_phase_round_robin"

# 6-phase pattern of the 3-capacitor network: (charging, driving) per phase.
# Capacitors not listed in a phase sit on the reset rail in the with-reset
# architecture (the supply stays disconnected in those phases either way).
_THREE_PHASE_PATTERN = [
    ({0, 1}, {2}),
    (set(), {0}),
    ({0, 2}, {1}),
    (set(), {2}),
    ({1, 2}, {0}),
    (set(), {1}),
]


def baseline_schedule(arch: str, n_capacitors: int, n_phases_total: int) -> Schedule:
    """Deterministic periodic schedule for one of the baseline architectures."""
    if n_phases_total < 1:
        raise ValueError("n_phases_total must be >= 1")
    if arch == TWO_PHASE_NO_RESET:
        if n_capacitors != 2:
            raise ValueError(f"{arch} requires exactly 2 capacitors, got {n_capacitors}")
        phases = []
        for p in range(n_phases_total):
            if p % 2 == 0:
                phases.append(({0}, {1}, set()))
            else:
                phases.append(({1}, {0}, set()))
        return Schedule.from_role_sets(2, phases)
    if arch == THREE_PHASE_WITH_RESET:
        if n_capacitors != 3:
            raise ValueError(f"{arch} requires exactly 3 capacitors, got {n_capacitors}")
        phases = []
        for p in range(n_phases_total):
            charging, driving = _THREE_PHASE_PATTERN[p % 6]
            reset = set(range(3)) - charging - driving
            phases.append((charging, driving, reset))
        return Schedule.from_role_sets(3, phases)
    if arch == N_PHASE_ROUND_ROBIN:
        if n_capacitors < 2:
            raise ValueError(f"{arch} requires at least 2 capacitors, got {n_capacitors}")
        phases = []
        for p in range(n_phases_total):
            driver = p % n_capacitors
            phases.append((set(range(n_capacitors)) - {driver}, {driver}, set()))
        return Schedule.from_role_sets(n_capacitors, phases)
    raise ValueError(f"unknown architecture {arch!r}")


def _phase_boundary_charges(samples: np.ndarray, h: float, boundaries: np.ndarray) -> np.ndarray:
    """Exact cumulative charge at arbitrary times for piecewise-linear traces.

    Samples are current values at t_k = k * h, linearly interpolated between
    points and held constant after the last point.
    """
    n = samples.shape[1]
    cum_all = np.zeros((samples.shape[0], n), dtype=np.float64)
    cum_all[:, 1:] = np.cumsum((samples[:, :-1] + samples[:, 1:]) * (h / 2), axis=1)
    k = np.floor(boundaries / h + 1e-9).astype(np.int64)
    k = np.clip(k, 0, n - 1)
    frac = boundaries / h - k
    inside = k < n - 1
    k_next = np.minimum(k + 1, n - 1)
    x0 = samples[:, k]
    x1 = samples[:, k_next]
    quad = h * (x0 * frac + 0.5 * (x1 - x0) * frac**2)
    tail = (boundaries - k * h) * x0
    return cum_all[:, k] + np.where(inside, quad, tail)


def _charge_profiles(cfg: CircuitConfig, sample_period: float, n_samples_per_cycle: int):
    """Per (phase-in-cycle, capacitor) spread of recharge current onto output bins.

    Returns (start_bin, weights) per phase-in-cycle where weights has shape
    (n_capacitors, n_bins) in amperes per volt of (v_dd - v_start).
    """
    T = cfg.phase_duration
    S = cfg.integration_substeps
    h = sample_period
    caps = np.asarray(cfg.capacitances)
    tau = cfg.switch_resistance * caps
    sub = np.arange(S + 1) * (T / S)
    # Charge fraction delivered in each substep, per volt of initial headroom.
    frac = np.exp(-sub[:-1] / tau[:, None]) - np.exp(-sub[1:] / tau[:, None])
    frac *= caps[:, None]
    profiles = []
    for pc in range(cfg.phases_per_cycle):
        t0 = pc * T
        k0 = int(np.floor(t0 / h + 1e-9))
        k1 = int(np.ceil((t0 + T) / h - 1e-9))
        k1 = min(k1, n_samples_per_cycle)
        n_bins = k1 - k0
        weights = np.zeros((cfg.n_capacitors, n_bins), dtype=np.float64)
        for s in range(S):
            a, b = t0 + sub[s], t0 + sub[s + 1]
            for k in range(k0, k1):
                lo, hi = max(a, k * h), min(b, (k + 1) * h)
                if hi > lo:
                    weights[:, k - k0] += frac[:, s] * (hi - lo) / (b - a)
        profiles.append((k0, weights / h))
    return profiles


def simulate_supply_current(
    aes_traces: TraceSet,
    cfg: CircuitConfig,
    schedule: Schedule,
    return_ledger: bool = False,
):
    """Attacker-visible supply current for a trace set under a schedule.

    Trace k consumes the schedule slice [k*P, (k+1)*P) where P is the number
    of phases per trace; every trace starts with all capacitors precharged to
    v_dd, so distinct traces are independent. Capacitor voltages persist
    across phases within a trace, which is where the memory effect comes from
    when the phase duration is short against RC.
    """
    if schedule.n_capacitors != cfg.n_capacitors:
        raise ValueError(
            f"schedule has {schedule.n_capacitors} capacitors but config has {cfg.n_capacitors}"
        )
    h = aes_traces.sample_period
    T = cfg.phase_duration
    duration = aes_traces.duration
    P_float = duration / T
    P = int(round(P_float))
    if P < 1 or abs(P_float - P) > 1e-6 * P_float:
        raise ValueError(
            f"trace duration {duration:.3e}s is not a whole number of phases (phase {T:.3e}s)"
        )
    n_traces = aes_traces.n_traces
    needed = n_traces * P
    if schedule.n_phases_total < needed:
        raise ValueError(
            f"schedule covers {schedule.n_phases_total} phases but {needed} are needed "
            f"({n_traces} traces x {P} phases)"
        )
    samples_per_cycle_f = 1.0 / (cfg.clock_frequency * h)
    samples_per_cycle = int(round(samples_per_cycle_f))
    if abs(samples_per_cycle_f - samples_per_cycle) > 1e-6:
        raise ValueError("sample grid does not align with the clock cycle")

    roles = schedule.roles[:needed].reshape(n_traces, P, cfg.n_capacitors)
    drive_any = (roles == ROLE_DRIVE).any(axis=2)
    if not drive_any.all():
        t_idx, p_idx = np.nonzero(~drive_any)
        raise UnpoweredPhaseError(
            f"no driving capacitor in phase {int(p_idx[0])} of trace {int(t_idx[0])}"
        )

    samples64 = aes_traces.samples.astype(np.float64)
    boundaries = np.arange(P + 1) * T
    q_bound = _phase_boundary_charges(samples64, h, boundaries)
    q_phase = np.diff(q_bound, axis=1)

    caps = np.asarray(cfg.capacitances)
    alpha = np.exp(-T / (cfg.switch_resistance * caps))
    beta = 1.0 - alpha
    full_charge = caps * beta  # coulombs per volt of headroom
    profiles = _charge_profiles(cfg, h, samples_per_cycle)

    v = np.full((n_traces, cfg.n_capacitors), cfg.v_dd, dtype=np.float64)
    out = np.zeros((n_traces, aes_traces.n_samples), dtype=np.float64)
    q_supply = np.zeros(n_traces)
    q_reset = np.zeros(n_traces)
    phases_per_cycle = cfg.phases_per_cycle
    for p in range(P):
        cyc, pc = divmod(p, phases_per_cycle)
        r = roles[:, p, :]
        drive = r == ROLE_DRIVE
        n_drivers = drive.sum(axis=1)
        dq = q_phase[:, p] / n_drivers
        v -= drive * (dq[:, None] / caps[None, :])

        charge = r == ROLE_CHARGE
        headroom = (cfg.v_dd - v) * charge
        k0, weights = profiles[pc]
        start = cyc * samples_per_cycle + k0
        out[:, start:start + weights.shape[1]] += headroom @ weights
        q_supply += headroom @ full_charge
        v += headroom * beta[None, :]

        reset = r == ROLE_RESET
        if reset.any():
            q_reset += ((v - cfg.reset_voltage) * reset) @ caps
            v = np.where(reset, cfg.reset_voltage, v)

    result = TraceSet(
        out.astype(np.float32),
        aes_traces.plaintexts.copy(),
        h,
        key=aes_traces.key,
        label=(aes_traces.label + "+supply") if aes_traces.label else "supply",
    )
    if not return_ledger:
        return result
    ledger = ChargeLedger(
        supply_charge=q_supply,
        aes_charge=q_bound[:, -1] - q_bound[:, 0],
        reset_charge=q_reset,
        stored_delta=(v - cfg.v_dd) @ caps,
        final_voltages=v,
    )
    return result, ledger
