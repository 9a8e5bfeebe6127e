"""Command-line entry point.

Exit codes: 0 success, 2 configuration/usage error, 3 trace-file format
error, 4 I/O error, 1 anything else.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .attack import compute_mtd, cpa_attack, default_checkpoints, sliding_window_cpa, tvla
from .config import ConfigError, load_config
from .experiment import run_experiment, sweep
from .overhead import OverheadParams, area_overhead, power_overhead
from .reports import write_correlation_csv, write_rank_curve_csv, write_tvla_csv
from .shuffle import p_leak, p_leak_monte_carlo
from .traces import TraceFileError, export_csv, read_trace_set, synthesize_trace_set, write_trace_set


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file; defaults reproduce the standard setup")
    p.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="SECTION.FIELD=VALUE",
        help="override one config field (repeatable)",
    )


def _cfg(args):
    return load_config(args.config, args.overrides)


def cmd_generate(args) -> int:
    cfg = _cfg(args)
    fixed = bytes.fromhex(args.fixed_plaintext) if args.fixed_plaintext else None
    ts = synthesize_trace_set(
        cfg.key, args.traces or cfg.trace_budget, cfg.leakage,
        seed=args.seed if args.seed is not None else cfg.master_seed,
        fixed_plaintext=fixed, label=args.label or cfg.label,
    )
    write_trace_set(ts, args.out)
    print(f"wrote {ts.n_traces} traces x {ts.n_samples} samples to {args.out}")
    return 0


def cmd_simulate(args) -> int:
    from .experiment import protect

    cfg = _cfg(args)
    ts = read_trace_set(args.input)
    if cfg.architecture == "unprotected":
        raise ConfigError("experiment.architecture: simulate needs a protected architecture")
    out_ts = protect(cfg, ts)
    write_trace_set(out_ts, args.out)
    print(f"simulated {cfg.architecture} supply current for {ts.n_traces} traces -> {args.out}")
    return 0


def cmd_attack(args) -> int:
    cfg = _cfg(args)
    ts = read_trace_set(args.input)
    byte = args.target_byte if args.target_byte is not None else cfg.target_byte
    if args.window > 1 or args.stride > 1:
        report = sliding_window_cpa(ts, args.window, args.stride, byte)
    else:
        report = cpa_attack(ts, byte)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_correlation_csv(report, out_dir / "cpa_correlations.csv")
    if cfg.figures:
        from . import plots

        true_byte = ts.key[byte] if ts.key is not None else None
        plots.plot_correlation(report, out_dir / "cpa_correlations.png", true_byte=true_byte)
    print(f"best guess for byte {byte}: 0x{report.best_guess:02x}")
    if report.rank_of_true_key is not None:
        print(f"rank of true key byte: {report.rank_of_true_key}")
    return 0


def cmd_tvla(args) -> int:
    cfg = _cfg(args)
    fixed = read_trace_set(args.fixed)
    random = read_trace_set(args.random)
    report = tvla(fixed, random)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_tvla_csv(report, out_dir / "tvla_t_values.csv")
    if cfg.figures:
        from . import plots

        plots.plot_tvla(report, out_dir / "tvla_t_values.png")
    print(f"max |t| = {report.max_abs_t:.3f} at {report.traces_per_group} traces/group")
    return 0


def cmd_mtd(args) -> int:
    cfg = _cfg(args)
    ts = read_trace_set(args.input)
    key = bytes.fromhex(args.key) if args.key else ts.key
    if key is None:
        raise ConfigError("experiment.key: the trace file carries no key; pass --key")
    byte = args.target_byte if args.target_byte is not None else cfg.target_byte
    checkpoints = None
    if args.checkpoints:
        checkpoints = [int(v) for v in args.checkpoints.replace(",", " ").split()]
    elif cfg.attack.checkpoints:
        checkpoints = list(cfg.attack.checkpoints)
    result = compute_mtd(ts, key, byte, checkpoints or default_checkpoints(ts.n_traces))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_rank_curve_csv(result, out_dir / "mtd_rank_curve.csv")
    if cfg.figures:
        from . import plots

        plots.plot_rank_curve(result, out_dir / "mtd_rank_curve.png", label=ts.label)
    print(f"MTD: {result.mtd if result.reached else 'not reached'}")
    return 0


def cmd_pleak(args) -> int:
    closed = p_leak(args.n, args.m)
    print(f"p_leak({args.n}, {args.m}) = {closed:.10g}")
    if args.trials:
        estimate = p_leak_monte_carlo(args.n, args.m, args.trials, args.seed)
        print(f"monte_carlo({args.trials} trials, seed {args.seed}) = {estimate:.10g}")
    return 0


def cmd_overhead(args) -> int:
    kwargs = {}
    for item in args.params:
        if "=" not in item:
            raise ConfigError(f"overhead parameter must be name=value, got {item!r}")
        name, value = item.split("=", 1)
        kwargs[name.strip()] = float(value)
    try:
        params = OverheadParams(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"overhead: {exc}") from exc
    power = power_overhead(params)
    area = area_overhead(params)
    print(f"power.charge_loss_w={power.charge_loss:.9g}")
    print(f"power.switching_w={power.switching:.9g}")
    print(f"power.prng_w={power.prng:.9g}")
    print(f"power.total_w={power.total:.9g}")
    print(f"power.ratio={power.ratio:.9g}")
    print(f"area.total_added_mm2={area.total_added:.9g}")
    print(f"area.ratio={area.ratio:.9g}")
    return 0


def cmd_run(args) -> int:
    cfg = _cfg(args)
    if args.out:
        cfg.output_dir = args.out
    result = run_experiment(cfg)
    for key, value in sorted(result.summary.items()):
        print(f"{key}={value}")
    print(f"bundle: {result.output_dir}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _cfg(args)
    if args.out:
        cfg.output_dir = args.out
    values = []
    for v in args.values.replace(",", " ").split():
        try:
            values.append(int(v, 0))
        except ValueError:
            values.append(float(v))
    rows = sweep(cfg, args.axis, values)
    for row in rows:
        status = row["error"] or f"mtd={row['mtd']} max|t|={row['max_abs_t']}"
        print(f"{args.axis}={row['value']}: {status}")
    print(f"summary: {Path(cfg.output_dir) / 'sweep_summary.csv'}")
    return 0


def cmd_import(args) -> int:
    ts = read_trace_set(args.input)
    write_trace_set(ts, args.out)
    key_note = "with key" if ts.key is not None else "no key"
    print(
        f"imported {ts.n_traces} traces x {ts.n_samples} samples "
        f"({key_note}, sample period {ts.sample_period:.3e}s) -> {args.out}"
    )
    return 0


def cmd_export_csv(args) -> int:
    ts = read_trace_set(args.input)
    export_csv(ts, args.out)
    print(f"exported {ts.n_traces} traces to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tvtfsim",
        description="Simulate the TVTF switched-capacitor countermeasure on synthetic "
        "AES-128 traces and evaluate it with CPA, MTD, TVLA, and sliding-window attacks.",
    )
    parser.add_argument("--version", action="version", version=f"tvtfsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize a trace set")
    _add_config_args(p)
    p.add_argument("--out", required=True, help="output .tvtf file")
    p.add_argument("--traces", type=int, help="trace count (default: trace_budget)")
    p.add_argument("--seed", type=int, help="generation seed (default: master_seed)")
    p.add_argument("--label", help="trace-set label")
    p.add_argument("--fixed-plaintext", help="32 hex chars; pin every plaintext")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("simulate", help="run traces through a countermeasure circuit")
    _add_config_args(p)
    p.add_argument("--in", dest="input", required=True, help="input .tvtf file")
    p.add_argument("--out", required=True, help="output .tvtf file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("attack", help="CPA (optionally sliding-window) on a trace file")
    _add_config_args(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out-dir", default="attack_out")
    p.add_argument("--target-byte", type=int)
    p.add_argument("--window", type=int, default=1)
    p.add_argument("--stride", type=int, default=1)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("tvla", help="Welch t-test between fixed and random trace files")
    _add_config_args(p)
    p.add_argument("--fixed", required=True)
    p.add_argument("--random", required=True)
    p.add_argument("--out-dir", default="tvla_out")
    p.set_defaults(func=cmd_tvla)

    p = sub.add_parser("mtd", help="minimum traces to disclosure on a trace file")
    _add_config_args(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out-dir", default="mtd_out")
    p.add_argument("--key", help="32 hex chars (default: key stored in the file)")
    p.add_argument("--target-byte", type=int)
    p.add_argument("--checkpoints", help="comma-separated trace counts")
    p.set_defaults(func=cmd_mtd)

    p = sub.add_parser("pleak", help="charging-overlap leakage probability")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--trials", type=int, default=0, help="also run a Monte-Carlo estimate")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_pleak)

    p = sub.add_parser("overhead", help="power/area overhead calculator")
    p.add_argument("params", nargs="*", metavar="NAME=VALUE",
                   help="override OverheadParams fields")
    p.set_defaults(func=cmd_overhead)

    p = sub.add_parser("run", help="full experiment: generate, simulate, attack, report")
    _add_config_args(p)
    p.add_argument("--out", help="output directory (default: config output_dir)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run one experiment per value of a swept knob")
    _add_config_args(p)
    p.add_argument("--axis", required=True,
                   choices=["phases", "m", "periodicity", "unit_capacitance",
                            "capacitance_spread", "switching_frequency"])
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", help="output directory (default: config output_dir)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("import", help="validate and re-emit an external trace file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("export-csv", help="trace file to CSV (plaintext hex + samples)")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_csv)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TraceFileError as exc:
        print(f"trace file error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
