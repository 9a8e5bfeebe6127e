"""Trace-set container, synthetic trace generation, and the trace file format."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aes import HW8, SBOX

MAGIC = b"TVTF"
FORMAT_VERSION = 1
FLAG_KEY_PRESENT = 0x0001

_HEADER = struct.Struct("<4sHHIId")


class TraceFileError(ValueError):
    """Base class for trace-file format problems."""


class BadMagicError(TraceFileError):
    pass


class VersionMismatchError(TraceFileError):
    pass


class TruncatedFileError(TraceFileError):
    pass


class DimensionMismatchError(TraceFileError):
    pass


@dataclass
class TraceSet:
    """Matrix of supply-current samples with per-trace plaintexts.

    samples are float32 amperes, shape (n_traces, n_samples); plaintexts are
    uint8, shape (n_traces, 16). The float32 sample dtype matches the on-disk
    format so write/read round-trips are bit-exact.
    """

    samples: np.ndarray
    plaintexts: np.ndarray
    sample_period: float
    key: bytes | None = None
    label: str = ""

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.float32)
        self.plaintexts = np.ascontiguousarray(self.plaintexts, dtype=np.uint8)
        if self.samples.ndim != 2:
            raise ValueError(f"samples must be 2-D, got shape {self.samples.shape}")
        if self.samples.shape[0] < 1:
            raise ValueError("a TraceSet must contain at least one trace")
        if self.plaintexts.ndim != 2 or self.plaintexts.shape[1] != 16:
            raise ValueError(f"plaintexts must have shape (n_traces, 16), got {self.plaintexts.shape}")
        if self.plaintexts.shape[0] != self.samples.shape[0]:
            raise ValueError(
                f"plaintext count {self.plaintexts.shape[0]} does not match trace count {self.samples.shape[0]}"
            )
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples contain non-finite values")
        if self.sample_period <= 0:
            raise ValueError(f"sample_period must be positive, got {self.sample_period}")
        if self.key is not None:
            self.key = bytes(self.key)
            if len(self.key) != 16:
                raise ValueError(f"key must be 16 bytes, got {len(self.key)}")

    @property
    def n_traces(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        """Time span of one trace in seconds (samples interpreted as bin values)."""
        return self.n_samples * self.sample_period


@dataclass
class LeakageParams:
    """Shape of the synthetic per-encryption current waveform.

    One clock cycle per byte operation, 16 cycles per trace. Within byte i's
    cycle the sample at leakage_sample_offset carries the Hamming-weight
    leakage of the round-1 S-box output; every other sample sits at the
    baseline. Defaults put the HW=8 leakage sample at the 3 mA peak.
    """

    clock_frequency: float = 125e6
    samples_per_clock: int = 16
    peak_current: float = 3e-3
    base_current: float = 1e-3
    current_per_hw_unit: float = 0.25e-3
    leakage_sample_offset: int = 8
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.clock_frequency <= 0:
            raise ValueError("clock_frequency must be positive")
        if self.samples_per_clock < 1:
            raise ValueError("samples_per_clock must be >= 1")
        if not self.peak_current >= self.base_current >= 0:
            raise ValueError("need peak_current >= base_current >= 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.current_per_hw_unit < 0:
            raise ValueError("current_per_hw_unit must be >= 0")
        if not 0 <= self.leakage_sample_offset < self.samples_per_clock:
            raise ValueError("leakage_sample_offset must be < samples_per_clock")

    @property
    def sample_period(self) -> float:
        return 1.0 / (self.clock_frequency * self.samples_per_clock)

    @property
    def n_samples(self) -> int:
        return 16 * self.samples_per_clock


def _trace_rng(seed: int, trace_index: int) -> np.random.Generator:
    # One independent stream per trace so results do not depend on how the
    # trace range is partitioned across workers.
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, trace_index))))


def synthesize_trace_set(
    key: bytes,
    n_traces: int,
    params: LeakageParams | None = None,
    seed: int = 0,
    fixed_plaintext: bytes | None = None,
    label: str = "unprotected",
) -> TraceSet:
    """Generate synthetic first-round AES-128 traces under the HW leakage model.

    Plaintexts are drawn uniformly (or pinned to fixed_plaintext); Gaussian
    noise of std-dev params.noise_sigma is added to every sample. Deterministic
    for a fixed (key, n_traces, params, seed).
    """
    key = bytes(key)
    if len(key) != 16:
        raise ValueError(f"key must be 16 bytes, got {len(key)}")
    if n_traces < 1:
        raise ValueError(f"n_traces must be >= 1, got {n_traces}")
    params = params or LeakageParams()
    if fixed_plaintext is not None:
        fixed_plaintext = bytes(fixed_plaintext)
        if len(fixed_plaintext) != 16:
            raise ValueError("fixed_plaintext must be 16 bytes")

    spc = params.samples_per_clock
    n_samples = params.n_samples
    key_arr = np.frombuffer(key, dtype=np.uint8)
    leak_cols = np.arange(16) * spc + params.leakage_sample_offset

    samples = np.empty((n_traces, n_samples), dtype=np.float32)
    plaintexts = np.empty((n_traces, 16), dtype=np.uint8)
    for i in range(n_traces):
        rng = _trace_rng(seed, i)
        if fixed_plaintext is None:
            pt = rng.integers(0, 256, 16, dtype=np.uint8)
        else:
            pt = np.frombuffer(fixed_plaintext, dtype=np.uint8).copy()
        plaintexts[i] = pt
        wave = np.full(n_samples, params.base_current, dtype=np.float64)
        hw = HW8[SBOX[pt ^ key_arr]].astype(np.float64)
        wave[leak_cols] += params.current_per_hw_unit * hw
        if params.noise_sigma > 0:
            wave += rng.normal(0.0, params.noise_sigma, n_samples)
        samples[i] = wave
    return TraceSet(samples, plaintexts, params.sample_period, key=key, label=label)


def write_trace_set(ts: TraceSet, path) -> None:
    """Write a TraceSet in the binary trace format (little-endian)."""
    flags = FLAG_KEY_PRESENT if ts.key is not None else 0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, flags, ts.n_traces, ts.n_samples, ts.sample_period))
        if ts.key is not None:
            fh.write(ts.key)
        fh.write(ts.plaintexts.tobytes())
        fh.write(ts.samples.astype("<f4", copy=False).tobytes())


def read_trace_set(path) -> TraceSet:
    """Read a trace file, validating magic, version, and payload dimensions."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise TruncatedFileError(f"{path}: file shorter than the {_HEADER.size}-byte header")
    magic, version, flags, n_traces, n_samples, sample_period = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    if n_traces < 1 or n_samples < 1:
        raise DimensionMismatchError(f"{path}: header declares {n_traces} traces x {n_samples} samples")
    offset = _HEADER.size
    key = None
    if flags & FLAG_KEY_PRESENT:
        if len(raw) < offset + 16:
            raise TruncatedFileError(f"{path}: truncated key block")
        key = raw[offset:offset + 16]
        offset += 16
    pt_bytes = n_traces * 16
    if len(raw) < offset + pt_bytes:
        raise TruncatedFileError(f"{path}: truncated plaintext block")
    plaintexts = np.frombuffer(raw, dtype=np.uint8, count=pt_bytes, offset=offset).reshape(n_traces, 16)
    offset += pt_bytes
    sample_bytes = n_traces * n_samples * 4
    if len(raw) < offset + sample_bytes:
        raise TruncatedFileError(f"{path}: truncated sample block")
    samples = np.frombuffer(raw, dtype="<f4", count=n_traces * n_samples, offset=offset)
    samples = samples.reshape(n_traces, n_samples)
    offset += sample_bytes
    if len(raw) != offset:
        raise TraceFileError(f"{path}: {len(raw) - offset} bytes of trailing data")
    try:
        return TraceSet(samples.copy(), plaintexts.copy(), sample_period, key=key)
    except ValueError as exc:
        raise DimensionMismatchError(f"{path}: {exc}") from exc


def export_csv(ts: TraceSet, path) -> None:
    """Export traces to CSV: one row per trace, plaintext hex in the first column."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["plaintext"] + [f"sample_{i}" for i in range(ts.n_samples)])
        for i in range(ts.n_traces):
            pt_hex = bytes(ts.plaintexts[i]).hex()
            writer.writerow([pt_hex] + [f"{v:.9g}" for v in ts.samples[i]])
