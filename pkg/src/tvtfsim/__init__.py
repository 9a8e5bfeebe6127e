"""Desk-scale laboratory for the TVTF switched-capacitor power-SCA countermeasure.

Synthesizes Hamming-weight AES-128 power traces, simulates the
switched-capacitor supply network (baseline and shuffled architectures), and
evaluates protection with CPA, MTD, TVLA, and sliding-window attacks.
"""

__version__ = "0.1.0"

from .aes import hamming_weight, hypothetical_leakage, sbox_lookup
from .attack import (
    AttackReport,
    MtdResult,
    TvlaReport,
    compute_mtd,
    cpa_attack,
    default_checkpoints,
    integrate_sliding_windows,
    sliding_window_cpa,
    tvla,
)
from .circuit import (
    CapacitorArrayState,
    ChargeLedger,
    CircuitConfig,
    Schedule,
    UnpoweredPhaseError,
    baseline_schedule,
    charge_current,
    max_droop,
    residue_voltage,
    simulate_supply_current,
)
from .config import ConfigError, ExperimentConfig, load_config
from .experiment import ExperimentResult, run_experiment, sweep
from .overhead import AreaBreakdown, OverheadParams, PowerBreakdown, area_overhead, power_overhead
from .shuffle import (
    LfsrChain,
    ShuffleParams,
    lfsr_step,
    measure_output_period,
    p_leak,
    p_leak_fraction,
    p_leak_monte_carlo,
    tvtf_schedule,
    verify_maximal_taps,
)
from .traces import (
    BadMagicError,
    DimensionMismatchError,
    LeakageParams,
    TraceFileError,
    TraceSet,
    TruncatedFileError,
    VersionMismatchError,
    export_csv,
    read_trace_set,
    synthesize_trace_set,
    write_trace_set,
)
