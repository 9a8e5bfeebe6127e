"""End-to-end experiment runs: generate -> simulate -> attack -> report bundle."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attack import (
    compute_mtd,
    cpa_attack,
    default_checkpoints,
    sliding_window_cpa,
    tvla,
)
from .circuit import (
    N_PHASE_ROUND_ROBIN,
    THREE_PHASE_WITH_RESET,
    TWO_PHASE_NO_RESET,
    Schedule,
    baseline_schedule,
    max_droop,
    simulate_supply_current,
)
from .config import ConfigError, ExperimentConfig
from .reports import (
    write_correlation_csv,
    write_rank_curve_csv,
    write_sweep_summary_csv,
    write_tvla_csv,
)
from .shuffle import LfsrChain, ShuffleParams, tvtf_schedule
from .traces import TraceSet, synthesize_trace_set, write_trace_set

N_BYTE_CYCLES = 16  # one clock cycle per AES state byte


def derive_seed(master_seed: int, label: str) -> int:
    """Deterministic 63-bit sub-seed from the master seed and a role label."""
    digest = hashlib.sha256(f"{master_seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def derive_lfsr_seed(master_seed: int, label: str, width: int) -> int:
    """Nonzero LFSR seed in [1, 2^width - 1]."""
    return derive_seed(master_seed, label) % ((1 << width) - 1) + 1


def build_chain(cfg: ExperimentConfig) -> LfsrChain:
    """LFSR chain from the config; unset seeds are derived from the master seed."""
    sh = cfg.shuffle
    primary_seed = sh.primary_seed
    if primary_seed is None:
        primary_seed = derive_lfsr_seed(cfg.master_seed, "chain-primary", sh.primary_width)
    selector_seed = sh.selector_seed
    if selector_seed is None:
        selector_seed = derive_lfsr_seed(cfg.master_seed, "chain-selector", sh.selector_width)
    return LfsrChain(
        primary_width=sh.primary_width,
        primary_taps=sh.primary_taps,
        primary_state=primary_seed,
        selector_width=sh.selector_width,
        selector_taps=sh.selector_taps,
        selector_state=selector_seed,
    )


def build_schedule(cfg: ExperimentConfig, n_traces: int, chain: LfsrChain | None = None) -> Schedule:
    """Schedule covering n_traces for the configured architecture."""
    phases_total = n_traces * N_BYTE_CYCLES * cfg.circuit.phases_per_cycle
    arch = cfg.architecture
    if arch == "two_phase":
        return baseline_schedule(TWO_PHASE_NO_RESET, 2, phases_total)
    if arch == "three_phase_reset":
        return baseline_schedule(THREE_PHASE_WITH_RESET, 3, phases_total)
    if arch == "n_phase_round_robin":
        return baseline_schedule(N_PHASE_ROUND_ROBIN, cfg.circuit.n_capacitors, phases_total)
    if arch == "tvtf":
        params = ShuffleParams(
            n=cfg.shuffle.n,
            m=cfg.shuffle.m,
            phases_per_cycle=cfg.circuit.phases_per_cycle,
            n_cycles=n_traces * N_BYTE_CYCLES,
        )
        return tvtf_schedule(params, chain or build_chain(cfg))
    raise ConfigError(f"experiment.architecture: no schedule for {arch!r}")


def protect(cfg: ExperimentConfig, ts: TraceSet, chain: LfsrChain | None = None) -> TraceSet:
    """Run traces through the configured countermeasure (identity if unprotected)."""
    if cfg.architecture == "unprotected":
        return ts
    schedule = build_schedule(cfg, ts.n_traces, chain)
    return simulate_supply_current(ts, cfg.circuit, schedule)


@dataclass
class ExperimentResult:
    output_dir: Path
    files: dict
    summary: dict


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    raise TypeError(f"not JSON-serializable: {type(value)}")


def _write_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Execute one configured experiment and write its report bundle.

    The bundle holds the trace files, one CSV (and figure) per requested
    attack, a results.json summary, and a manifest with the fully resolved
    configuration and derived seeds; re-running the same config reproduces
    every file byte for byte.
    """
    cfg.validate()
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc

    derived = {
        "trace_seed": derive_seed(cfg.master_seed, "traces"),
        "tvla_seed": derive_seed(cfg.master_seed, "tvla-traces"),
    }
    chain = None
    if cfg.architecture == "tvtf":
        chain = build_chain(cfg)
        derived["chain_primary_seed"] = chain.primary_state
        derived["chain_selector_seed"] = chain.selector_state

    files: dict = {}
    summary: dict = {
        "label": cfg.label,
        "architecture": cfg.architecture,
        "trace_budget": cfg.trace_budget,
        "target_byte": cfg.target_byte,
        "max_droop_v": max_droop(cfg.circuit, cfg.leakage.peak_current, cfg.circuit.phase_duration),
    }

    aes_ts = synthesize_trace_set(
        cfg.key, cfg.trace_budget, cfg.leakage, seed=derived["trace_seed"], label=cfg.label
    )
    attacker_ts = protect(cfg, aes_ts, chain)

    def emit(name, path):
        files[name] = path
        return path

    write_trace_set(aes_ts, emit("traces_aes", out / "traces_aes.tvtf"))
    if attacker_ts is not aes_ts:
        write_trace_set(attacker_ts, emit("traces_attacker", out / "traces_attacker.tvtf"))

    figures = cfg.figures
    if figures:
        from . import plots

    if "cpa" in cfg.attacks:
        report = cpa_attack(attacker_ts, cfg.target_byte)
        write_correlation_csv(report, emit("cpa_csv", out / "cpa_correlations.csv"))
        if figures:
            plots.plot_correlation(
                report, emit("cpa_png", out / "cpa_correlations.png"),
                true_byte=cfg.key[cfg.target_byte],
            )
        summary["cpa_best_guess"] = report.best_guess
        summary["cpa_rank_of_true_key"] = report.rank_of_true_key
        summary["cpa_max_abs_rho"] = float(np.max(report.guess_scores))

    if "mtd" in cfg.attacks:
        checkpoints = list(cfg.attack.checkpoints) or default_checkpoints(cfg.trace_budget)
        mtd_result = compute_mtd(attacker_ts, cfg.key, cfg.target_byte, checkpoints)
        write_rank_curve_csv(mtd_result, emit("mtd_csv", out / "mtd_rank_curve.csv"))
        if figures:
            plots.plot_rank_curve(
                mtd_result, emit("mtd_png", out / "mtd_rank_curve.png"), label=cfg.label
            )
        summary["mtd"] = mtd_result.mtd if mtd_result.reached else "not reached"

    if "tvla" in cfg.attacks:
        group = cfg.attack.tvla_traces_per_group
        fixed_pt = hashlib.sha256(f"{cfg.master_seed}:tvla-plaintext".encode()).digest()[:16]
        fixed_raw = synthesize_trace_set(
            cfg.key, group, cfg.leakage, seed=derive_seed(cfg.master_seed, "tvla-fixed"),
            fixed_plaintext=fixed_pt, label=cfg.label + "-tvla-fixed",
        )
        random_raw = synthesize_trace_set(
            cfg.key, group, cfg.leakage, seed=derived["tvla_seed"],
            label=cfg.label + "-tvla-random",
        )
        # Both groups pass through one continuing schedule, as on one device.
        merged = TraceSet(
            np.vstack([fixed_raw.samples, random_raw.samples]),
            np.vstack([fixed_raw.plaintexts, random_raw.plaintexts]),
            fixed_raw.sample_period,
            key=fixed_raw.key,
        )
        protected = protect(cfg, merged, chain)
        fixed_ts = TraceSet(protected.samples[:group], protected.plaintexts[:group],
                            protected.sample_period, key=protected.key)
        random_ts = TraceSet(protected.samples[group:], protected.plaintexts[group:],
                             protected.sample_period, key=protected.key)
        tvla_report = tvla(fixed_ts, random_ts)
        write_tvla_csv(tvla_report, emit("tvla_csv", out / "tvla_t_values.csv"))
        if figures:
            plots.plot_tvla(tvla_report, emit("tvla_png", out / "tvla_t_values.png"), label=cfg.label)
        summary["tvla_max_abs_t"] = tvla_report.max_abs_t
        summary["tvla_traces_per_group"] = tvla_report.traces_per_group

    if "sliding_cpa" in cfg.attacks:
        report = sliding_window_cpa(attacker_ts, cfg.attack.window, cfg.attack.stride, cfg.target_byte)
        write_correlation_csv(report, emit("sliding_cpa_csv", out / "sliding_cpa_correlations.csv"))
        if figures:
            plots.plot_correlation(
                report, emit("sliding_cpa_png", out / "sliding_cpa_correlations.png"),
                true_byte=cfg.key[cfg.target_byte],
            )
        summary["sliding_cpa_best_guess"] = report.best_guess
        summary["sliding_cpa_rank_of_true_key"] = report.rank_of_true_key

    if cfg.export_schedule and cfg.architecture != "unprotected":
        schedule = build_schedule(cfg, cfg.trace_budget, build_chain(cfg) if cfg.architecture == "tvtf" else None)
        schedule.export_csv(emit("schedule_csv", out / "schedule.csv"))

    from . import __version__

    manifest = {
        "tool": "tvtfsim",
        "version": __version__,
        "config": cfg.to_dict(),
        "derived_seeds": derived,
    }
    _write_json(manifest, emit("manifest", out / "manifest.json"))
    _write_json(summary, emit("results", out / "results.json"))
    return ExperimentResult(output_dir=out, files=files, summary=summary)


SWEEP_AXES = (
    "phases", "m", "periodicity", "unit_capacitance", "capacitance_spread",
    "switching_frequency",
)

_PERIOD_WIDTHS = {(1 << w) - 1: w for w in (3, 4, 8, 16, 32)}


def apply_sweep_value(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    """A copy of cfg with one swept knob applied and re-validated."""
    new = copy.deepcopy(cfg)
    circuit = new.circuit

    def rebuild_circuit(**kw):
        from .circuit import CircuitConfig

        base = dict(
            v_dd=circuit.v_dd,
            capacitances=circuit.capacitances,
            switch_resistance=circuit.switch_resistance,
            phases_per_cycle=circuit.phases_per_cycle,
            clock_frequency=circuit.clock_frequency,
            integration_substeps=circuit.integration_substeps,
            reset_voltage=circuit.reset_voltage,
        )
        base.update(kw)
        new.circuit = CircuitConfig(**base)

    if axis == "phases":
        n = int(value)
        new.shuffle.n = n
        rebuild_circuit(capacitances=tuple([new.unit_capacitance] * n), phases_per_cycle=n)
    elif axis == "m":
        new.shuffle.m = int(value)
    elif axis == "periodicity":
        width = _PERIOD_WIDTHS.get(int(value))
        if width is None:
            raise ConfigError(f"periodicity: {value} is not 2^w - 1 for a supported width")
        new.shuffle.primary_width = width
        new.shuffle.primary_taps = None
        new.shuffle.primary_seed = None
        new.shuffle.selector_width = min(4, width)
        new.shuffle.selector_taps = None
        new.shuffle.selector_seed = None
    elif axis == "unit_capacitance":
        c = float(value)
        new.unit_capacitance = c
        rebuild_circuit(capacitances=tuple([c] * circuit.n_capacitors))
    elif axis == "capacitance_spread":
        spread = float(value)
        if not 0 <= spread < 1:
            raise ConfigError(f"capacitance_spread: fraction must be in [0, 1), got {spread}")
        n = circuit.n_capacitors
        mean_c = sum(circuit.capacitances) / n
        caps = np.linspace(mean_c * (1 - spread), mean_c * (1 + spread), n)
        rebuild_circuit(capacitances=tuple(caps))
    elif axis == "switching_frequency":
        f_sw = float(value)
        ratio = f_sw / circuit.clock_frequency
        phases = int(round(ratio))
        if phases < 1 or abs(ratio - phases) > 1e-6:
            raise ConfigError(
                f"switching_frequency: {value} is not an integer multiple of the clock"
            )
        rebuild_circuit(phases_per_cycle=phases)
    else:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    new.validate()
    return new


def sweep(cfg: ExperimentConfig, axis: str, values: list) -> list:
    """One run_experiment per value; failures are recorded and do not abort.

    Writes per-point bundles under <output_dir>/<axis>_<value>/ plus a
    sweep_summary.csv (and figure) at the top level. Returns the summary rows.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in values:
        row = {"axis": axis, "value": value, "mtd": None, "max_abs_t": None,
               "max_droop_v": None, "error": ""}
        try:
            point_cfg = apply_sweep_value(cfg, axis, value)
            point_cfg.label = f"{cfg.label}-{axis}-{value}"
            point_cfg.output_dir = str(out / f"{axis}_{value}")
            result = run_experiment(point_cfg)
            row["mtd"] = result.summary.get("mtd")
            row["max_abs_t"] = result.summary.get("tvla_max_abs_t")
            row["max_droop_v"] = result.summary.get("max_droop_v")
        except Exception as exc:  # recorded, sweep continues
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    write_sweep_summary_csv(rows, out / "sweep_summary.csv")
    if cfg.figures:
        from . import plots

        plot_rows = []
        for r in rows:
            r2 = dict(r)
            if r2["mtd"] == "not reached":
                r2["mtd"] = np.nan
            plot_rows.append(r2)
        plots.plot_sweep(plot_rows, axis, out / "sweep_summary.png")
    return rows
