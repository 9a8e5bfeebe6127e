"""Evaluation suite: CPA key recovery, MTD estimation, TVLA, sliding-window CPA."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .aes import hypothesis_matrix
from .traces import TraceSet


@dataclass
class AttackReport:
    """Per-guess correlation traces and the resulting key-byte ranking.

    correlations holds Pearson rho per (guess, sample); entries where either
    column had zero variance are flagged undefined as NaN rather than 0.
    """

    target_byte: int
    correlations: np.ndarray
    best_guess: int
    traces_used: int
    rank_of_true_key: int | None = None

    @property
    def guess_scores(self) -> np.ndarray:
        """Max |rho| over samples per guess; -1 where every sample is undefined."""
        return _scores(self.correlations)


@dataclass
class MtdResult:
    """Key-byte rank at each trace-count checkpoint and the resulting MTD."""

    checkpoints: list
    rank_at_checkpoint: list
    mtd: int | None  # None means "not reached"

    @property
    def reached(self) -> bool:
        return self.mtd is not None


@dataclass
class TvlaReport:
    """Welch's t statistic per sample between fixed and random groups."""

    t_values: np.ndarray
    max_abs_t: float
    traces_per_group: int


class CpaAccumulator:
    """One-pass sums for Pearson correlation between 256 hypotheses and samples.

    Traces are accumulated in a fixed order so results are bit-reproducible
    regardless of block sizes.
    """

    def __init__(self, target_byte: int):
        if not 0 <= target_byte < 16:
            raise ValueError(f"target_byte must be in [0, 16), got {target_byte}")
        self.target_byte = target_byte
        self.n = 0
        self._sums = None

    def update(self, samples: np.ndarray, plaintexts: np.ndarray) -> None:
        h = hypothesis_matrix(plaintexts[:, self.target_byte]).astype(np.float64)
        t = samples.astype(np.float64)
        if self._sums is None:
            self._sums = {
                "h": np.zeros(256),
                "hh": np.zeros(256),
                "t": np.zeros(t.shape[1]),
                "tt": np.zeros(t.shape[1]),
                "ht": np.zeros((256, t.shape[1])),
            }
        s = self._sums
        s["h"] += h.sum(axis=0)
        s["hh"] += (h * h).sum(axis=0)
        s["t"] += t.sum(axis=0)
        s["tt"] += (t * t).sum(axis=0)
        s["ht"] += h.T @ t
        self.n += t.shape[0]

    def correlations(self) -> np.ndarray:
        """(256, n_samples) Pearson rho; NaN where a column has zero variance."""
        if self.n < 2:
            raise ValueError("need at least 2 traces for a correlation")
        s = self._sums
        n = self.n
        var_h = n * s["hh"] - s["h"] ** 2
        var_t = n * s["tt"] - s["t"] ** 2
        # Guard tiny negative values from cancellation.
        var_h = np.maximum(var_h, 0.0)
        var_t = np.maximum(var_t, 0.0)
        num = n * s["ht"] - np.outer(s["h"], s["t"])
        denom = np.sqrt(np.outer(var_h, var_t))
        with np.errstate(invalid="ignore", divide="ignore"):
            rho = num / denom
        rho = np.where(denom > 0, rho, np.nan)
        return np.clip(rho, -1.0, 1.0)


def _scores(correlations: np.ndarray) -> np.ndarray:
    scores = np.full(correlations.shape[0], -1.0)
    defined = ~np.isnan(correlations)
    any_defined = defined.any(axis=1)
    abs_rho = np.where(defined, np.abs(correlations), -np.inf)
    scores[any_defined] = abs_rho.max(axis=1)[any_defined]
    return scores


def _rank_of(scores: np.ndarray, true_byte: int) -> int:
    """1-based rank under the ordering: higher score first, lower guess breaks ties."""
    s = scores[true_byte]
    better = int((scores > s).sum())
    tied_before = int((scores[:true_byte] == s).sum())
    return 1 + better + tied_before


def cpa_attack(ts: TraceSet, target_byte: int) -> AttackReport:
    """Correlate the HW hypothesis of every key guess against every sample.

    best_guess is the argmax over guesses of max-over-samples |rho|, ties
    broken toward the lowest guess value.
    """
    if ts.n_traces < 2:
        raise ValueError("CPA needs at least 2 traces")
    acc = CpaAccumulator(target_byte)
    acc.update(ts.samples, ts.plaintexts)
    rho = acc.correlations()
    scores = _scores(rho)
    best = int(np.argmax(scores))
    rank = None
    if ts.key is not None:
        rank = _rank_of(scores, ts.key[target_byte])
    return AttackReport(
        target_byte=target_byte,
        correlations=rho,
        best_guess=best,
        traces_used=ts.n_traces,
        rank_of_true_key=rank,
    )


def default_checkpoints(n_traces: int, points_per_decade: int = 20, start: int = 2) -> list:
    """Geometric checkpoint grid, `points_per_decade` per decade, capped at n_traces."""
    if n_traces < start:
        raise ValueError(f"trace budget {n_traces} below smallest checkpoint {start}")
    points = set()
    k = 0
    while True:
        value = int(round(10 ** (k / points_per_decade)))
        if value > n_traces:
            break
        if value >= start:
            points.add(value)
        k += 1
    points.add(n_traces)
    return sorted(points)


def compute_mtd(
    ts: TraceSet,
    true_key: bytes | None = None,
    target_byte: int = 0,
    checkpoints: list | None = None,
) -> MtdResult:
    """Minimum traces to disclosure under the stability rule.

    MTD is the smallest checkpoint at which the true key byte is rank 1 and
    stays rank 1 at every later evaluated checkpoint; a single rank-1 spike
    that later degrades does not count as disclosure.
    """
    if true_key is None:
        true_key = ts.key
    if true_key is None:
        raise ValueError("true key required: pass true_key or use a keyed TraceSet")
    true_key = bytes(true_key)
    if checkpoints is None:
        checkpoints = default_checkpoints(ts.n_traces)
    checkpoints = [int(c) for c in checkpoints]
    if any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
        raise ValueError("checkpoints must be strictly increasing")
    if checkpoints[0] < 2:
        raise ValueError("smallest checkpoint must be >= 2")
    if checkpoints[-1] > ts.n_traces:
        raise ValueError(
            f"checkpoint {checkpoints[-1]} exceeds the {ts.n_traces} available traces"
        )
    true_byte = true_key[target_byte]
    acc = CpaAccumulator(target_byte)
    ranks = []
    prev = 0
    for cp in checkpoints:
        acc.update(ts.samples[prev:cp], ts.plaintexts[prev:cp])
        prev = cp
        scores = _scores(acc.correlations())
        ranks.append(_rank_of(scores, true_byte))
    mtd = None
    for cp, rank in zip(reversed(checkpoints), reversed(ranks)):
        if rank != 1:
            break
        mtd = cp
    return MtdResult(checkpoints=checkpoints, rank_at_checkpoint=ranks, mtd=mtd)


def tvla(fixed: TraceSet, random: TraceSet) -> TvlaReport:
    """Welch's t-test per sample between fixed-plaintext and random-plaintext sets.

    Samples where both group variances are zero get an undefined (NaN) t.
    """
    if fixed.n_samples != random.n_samples:
        raise ValueError(
            f"sample-count mismatch: {fixed.n_samples} vs {random.n_samples}"
        )
    xf = fixed.samples.astype(np.float64)
    xr = random.samples.astype(np.float64)
    nf, nr = fixed.n_traces, random.n_traces
    if nf < 2 or nr < 2:
        raise ValueError("each group needs at least 2 traces")
    mf, mr = xf.mean(axis=0), xr.mean(axis=0)
    vf, vr = xf.var(axis=0, ddof=1), xr.var(axis=0, ddof=1)
    denom = np.sqrt(vf / nf + vr / nr)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = (mf - mr) / denom
    t = np.where(denom > 0, t, np.nan)
    max_abs = float(np.nanmax(np.abs(t))) if np.any(~np.isnan(t)) else float("nan")
    return TvlaReport(t_values=t, max_abs_t=max_abs, traces_per_group=min(nf, nr))


def integrate_sliding_windows(ts: TraceSet, window: int, stride: int = 1) -> TraceSet:
    """Replace each trace by its sums over sliding windows of the given width."""
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be >= 1")
    if window > ts.n_samples:
        raise ValueError(f"window {window} larger than trace ({ts.n_samples} samples)")
    x = ts.samples.astype(np.float64)
    cs = np.zeros((ts.n_traces, ts.n_samples + 1))
    cs[:, 1:] = np.cumsum(x, axis=1)
    starts = np.arange(0, ts.n_samples - window + 1, stride)
    integrated = cs[:, starts + window] - cs[:, starts]
    return TraceSet(
        integrated.astype(np.float32),
        ts.plaintexts.copy(),
        ts.sample_period * stride,
        key=ts.key,
        label=(ts.label + f"+win{window}s{stride}") if ts.label else f"win{window}s{stride}",
    )


def sliding_window_cpa(ts: TraceSet, window: int, stride: int, target_byte: int) -> AttackReport:
    """CPA on the sliding-window integrated traces."""
    return cpa_attack(integrate_sliding_windows(ts, window, stride), target_byte)
