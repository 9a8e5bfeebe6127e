"""Experiment configuration: defaults, INI config files, and flag overrides.

The config file is flat INI text with one section per module; every field has
a default matching the reference operating point (1.2 V, 10 ohm, ten 20 pF
capacitors, 125 MHz clock, 10 phases, 8/4-bit LFSR chain), so running with no
config file reproduces the standard setup.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields

from .circuit import CircuitConfig
from .shuffle import DEFAULT_TAPS
from .traces import LeakageParams

ARCHITECTURES = ("unprotected", "two_phase", "three_phase_reset", "n_phase_round_robin", "tvtf")
ATTACKS = ("cpa", "mtd", "tvla", "sliding_cpa")

DEFAULT_KEY_HEX = "2b7e151628aed2a6abf7158809cf4f3c"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class ShuffleSettings:
    """Pool sizes and chain parameters for the tvtf architecture."""

    n: int = 10
    m: int = 1
    primary_width: int = 8
    primary_taps: int | None = None
    primary_seed: int | None = None  # None -> derived from the master seed
    selector_width: int = 4
    selector_taps: int | None = None
    selector_seed: int | None = None


@dataclass
class AttackSettings:
    checkpoints: tuple = ()  # empty -> geometric default grid
    window: int = 16
    stride: int = 1
    tvla_traces_per_group: int = 100


@dataclass
class ExperimentConfig:
    """Everything one end-to-end run needs, resolvable to a manifest dict."""

    label: str = "experiment"
    architecture: str = "unprotected"
    master_seed: int = 1
    trace_budget: int = 1000
    target_byte: int = 13
    output_dir: str = "out"
    attacks: tuple = ("cpa", "mtd")
    key: bytes = bytes.fromhex(DEFAULT_KEY_HEX)
    figures: bool = True
    export_schedule: bool = False
    unit_capacitance: float = 20e-12
    explicit_capacitances: tuple | None = None
    leakage: LeakageParams = field(default_factory=LeakageParams)
    circuit: CircuitConfig = field(default_factory=CircuitConfig)
    shuffle: ShuffleSettings = field(default_factory=ShuffleSettings)
    attack: AttackSettings = field(default_factory=AttackSettings)

    def validate(self) -> None:
        def fail(name, msg):
            raise ConfigError(f"{name}: {msg}")

        if self.architecture not in ARCHITECTURES:
            fail("experiment.architecture", f"must be one of {ARCHITECTURES}, got {self.architecture!r}")
        for a in self.attacks:
            if a not in ATTACKS:
                fail("experiment.attacks", f"unknown attack {a!r}, choose from {ATTACKS}")
        if self.trace_budget < 2:
            fail("experiment.trace_budget", "must be >= 2")
        if not 0 <= self.target_byte < 16:
            fail("experiment.target_byte", f"must be in [0, 16), got {self.target_byte}")
        if len(self.key) != 16:
            fail("experiment.key", f"must be 16 bytes, got {len(self.key)}")
        n_caps = self.circuit.n_capacitors
        if self.architecture == "two_phase" and n_caps != 2:
            fail("circuit.capacitances", f"two_phase needs exactly 2 capacitors, got {n_caps}")
        if self.architecture == "three_phase_reset" and n_caps != 3:
            fail("circuit.capacitances", f"three_phase_reset needs exactly 3 capacitors, got {n_caps}")
        if self.architecture == "tvtf":
            if self.shuffle.n > n_caps:
                fail("shuffle.n", f"n={self.shuffle.n} exceeds the {n_caps} configured capacitors")
            if self.shuffle.n < 2 * self.shuffle.m + 1:
                fail("shuffle.m", f"need n >= 2m + 1, got n={self.shuffle.n}, m={self.shuffle.m}")
            if self.shuffle.primary_width not in DEFAULT_TAPS and self.shuffle.primary_taps is None:
                fail("shuffle.primary_width", f"no default taps for width {self.shuffle.primary_width}")
        if self.attack.tvla_traces_per_group < 2:
            fail("attack.tvla_traces_per_group", "must be >= 2")
        if self.attack.window < 1 or self.attack.stride < 1:
            fail("attack.window", "window and stride must be >= 1")
        cps = self.attack.checkpoints
        if cps:
            if any(b <= a for a, b in zip(cps, cps[1:])):
                fail("attack.checkpoints", "must be strictly increasing")
            if cps[-1] > self.trace_budget:
                fail("attack.checkpoints", f"checkpoint {cps[-1]} exceeds trace budget {self.trace_budget}")

    def to_dict(self) -> dict:
        """Resolved configuration as plain JSON-serializable data."""
        return {
            "experiment": {
                "label": self.label,
                "architecture": self.architecture,
                "master_seed": self.master_seed,
                "trace_budget": self.trace_budget,
                "target_byte": self.target_byte,
                "output_dir": self.output_dir,
                "attacks": list(self.attacks),
                "key": self.key.hex(),
                "figures": self.figures,
                "export_schedule": self.export_schedule,
            },
            "leakage": {f.name: getattr(self.leakage, f.name) for f in fields(self.leakage)},
            "circuit": {
                "v_dd": self.circuit.v_dd,
                "capacitances": list(self.circuit.capacitances),
                "switch_resistance": self.circuit.switch_resistance,
                "phases_per_cycle": self.circuit.phases_per_cycle,
                "clock_frequency": self.circuit.clock_frequency,
                "integration_substeps": self.circuit.integration_substeps,
                "reset_voltage": self.circuit.reset_voltage,
            },
            "shuffle": {f.name: getattr(self.shuffle, f.name) for f in fields(self.shuffle)},
            "attack": {
                "checkpoints": list(self.attack.checkpoints),
                "window": self.attack.window,
                "stride": self.attack.stride,
                "tvla_traces_per_group": self.attack.tvla_traces_per_group,
            },
        }


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int(text: str) -> int:
    return int(text.strip(), 0)  # accepts 0x.. tap masks


def _parse_float_list(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _parse_int_list(text: str) -> tuple:
    return tuple(int(v) for v in text.replace(",", " ").split())


def _parse_str_list(text: str) -> tuple:
    return tuple(v.strip() for v in text.replace(",", " ").split() if v.strip())


# (section, option) -> (setter path, parser)
_SCHEMA = {
    ("experiment", "label"): ("label", str),
    ("experiment", "architecture"): ("architecture", str),
    ("experiment", "master_seed"): ("master_seed", _parse_int),
    ("experiment", "trace_budget"): ("trace_budget", _parse_int),
    ("experiment", "target_byte"): ("target_byte", _parse_int),
    ("experiment", "output_dir"): ("output_dir", str),
    ("experiment", "attacks"): ("attacks", _parse_str_list),
    ("experiment", "key"): ("key", lambda s: bytes.fromhex(s.strip())),
    ("experiment", "figures"): ("figures", _parse_bool),
    ("experiment", "export_schedule"): ("export_schedule", _parse_bool),
    ("experiment", "unit_capacitance"): ("unit_capacitance", float),
    ("leakage", "clock_frequency"): ("leakage.clock_frequency", float),
    ("leakage", "samples_per_clock"): ("leakage.samples_per_clock", _parse_int),
    ("leakage", "peak_current"): ("leakage.peak_current", float),
    ("leakage", "base_current"): ("leakage.base_current", float),
    ("leakage", "current_per_hw_unit"): ("leakage.current_per_hw_unit", float),
    ("leakage", "leakage_sample_offset"): ("leakage.leakage_sample_offset", _parse_int),
    ("leakage", "noise_sigma"): ("leakage.noise_sigma", float),
    ("circuit", "v_dd"): ("circuit.v_dd", float),
    ("circuit", "capacitances"): ("circuit.capacitances", _parse_float_list),
    ("circuit", "switch_resistance"): ("circuit.switch_resistance", float),
    ("circuit", "phases_per_cycle"): ("circuit.phases_per_cycle", _parse_int),
    ("circuit", "clock_frequency"): ("circuit.clock_frequency", float),
    ("circuit", "integration_substeps"): ("circuit.integration_substeps", _parse_int),
    ("circuit", "reset_voltage"): ("circuit.reset_voltage", float),
    ("shuffle", "n"): ("shuffle.n", _parse_int),
    ("shuffle", "m"): ("shuffle.m", _parse_int),
    ("shuffle", "primary_width"): ("shuffle.primary_width", _parse_int),
    ("shuffle", "primary_taps"): ("shuffle.primary_taps", _parse_int),
    ("shuffle", "primary_seed"): ("shuffle.primary_seed", _parse_int),
    ("shuffle", "selector_width"): ("shuffle.selector_width", _parse_int),
    ("shuffle", "selector_taps"): ("shuffle.selector_taps", _parse_int),
    ("shuffle", "selector_seed"): ("shuffle.selector_seed", _parse_int),
    ("attack", "checkpoints"): ("attack.checkpoints", _parse_int_list),
    ("attack", "window"): ("attack.window", _parse_int),
    ("attack", "stride"): ("attack.stride", _parse_int),
    ("attack", "tvla_traces_per_group"): ("attack.tvla_traces_per_group", _parse_int),
}


def _assign(cfg: ExperimentConfig, path: str, value) -> None:
    if "." in path:
        head, attr = path.split(".", 1)
        setattr(getattr(cfg, head), attr, value)
    else:
        setattr(cfg, path, value)


def _collect_raw(config_path=None, overrides=()) -> dict:
    raw = {}
    if config_path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(config_path)
        if not read:
            raise ConfigError(f"config file not found: {config_path}")
        for section in parser.sections():
            for option, value in parser.items(section):
                raw[(section, option)] = value
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like section.field=value, got {item!r}")
        key, value = item.split("=", 1)
        if "." not in key:
            raise ConfigError(f"override key must be section.field, got {key!r}")
        section, option = key.split(".", 1)
        raw[(section.strip(), option.strip())] = value.strip()
    return raw


def load_config(config_path=None, overrides=()) -> ExperimentConfig:
    """Build a validated ExperimentConfig from defaults, an INI file, and overrides.

    Overrides are "section.field=value" strings applied on top of the file.
    The circuit capacitor bank is sized to the architecture (2, 3, or
    shuffle.n units of unit_capacitance) unless capacitances are given
    explicitly.
    """
    raw = _collect_raw(config_path, overrides)
    cfg = ExperimentConfig()
    explicit_caps = None
    explicit_reset = None
    for (section, option), text in raw.items():
        key = (section, option)
        if key not in _SCHEMA:
            raise ConfigError(f"{section}.{option}: unknown configuration field")
        path, parse = _SCHEMA[key]
        try:
            value = parse(text)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{section}.{option}: cannot parse {text!r} ({exc})") from exc
        if path == "circuit.capacitances":
            explicit_caps = value
            continue
        if path == "circuit.reset_voltage":
            explicit_reset = value
            continue
        _assign(cfg, path, value)

    if explicit_caps is not None:
        cfg.explicit_capacitances = explicit_caps
        caps = explicit_caps
    else:
        per_arch = {"two_phase": 2, "three_phase_reset": 3, "tvtf": cfg.shuffle.n}
        n_caps = per_arch.get(cfg.architecture, max(cfg.shuffle.n, 2))
        caps = tuple([cfg.unit_capacitance] * n_caps)
    cfg.circuit = CircuitConfig(
        v_dd=cfg.circuit.v_dd,
        capacitances=caps,
        switch_resistance=cfg.circuit.switch_resistance,
        phases_per_cycle=cfg.circuit.phases_per_cycle,
        clock_frequency=cfg.circuit.clock_frequency,
        integration_substeps=cfg.circuit.integration_substeps,
        reset_voltage=explicit_reset,
    )
    # Re-run the leakage validators on the overridden values.
    cfg.leakage = LeakageParams(**{f.name: getattr(cfg.leakage, f.name) for f in fields(cfg.leakage)})
    cfg.validate()
    return cfg
