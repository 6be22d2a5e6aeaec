"""Blind burst detection with a twin sliding-window energy ratio.

The instantaneous power is smoothed by a short moving average, then at every
index k the energy of a leading window (offset by a small gap) is compared
with the energy of the trailing window.  The ratio is scale-free: a rising
edge fires when it exceeds alpha, a falling edge when it drops below
1/alpha.  A small floor keeps silent spans from dividing by zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .signal_model import IqRecording, us_to_samples


@dataclass(frozen=True)
class DetectorConfig:
    """Detector knobs; defaults suit 20 MS/s captures.

    window_len_rising / window_len_falling are the twin window lengths L for
    each edge type, gap_delta the spacing between the trailing and leading
    windows.  min_burst_us drops spurious slivers, min_gap_us merges bursts
    separated by less than one real interframe space.
    """

    alpha: float = 2.7
    window_len_rising: int = 64
    window_len_falling: int = 64
    gap_delta: int = 16
    smooth_len: int = 64
    floor_eps: float = 1e-9
    min_burst_us: float = 20.0
    min_gap_us: float = 5.0

    def validate(self) -> None:
        if not self.alpha > 1.0:
            raise ValueError("alpha must exceed 1")
        if self.window_len_rising < 1 or self.window_len_falling < 1:
            raise ValueError("window lengths must be >= 1")
        if self.gap_delta < 0:
            raise ValueError("gap_delta must be >= 0")
        if self.smooth_len < 1:
            raise ValueError("smooth_len must be >= 1")
        if not self.floor_eps > 0:
            raise ValueError("floor_eps must be positive")
        if self.min_burst_us < 0 or self.min_gap_us < 0:
            raise ValueError("debounce durations must be >= 0")


@dataclass(frozen=True)
class DetectedBurst:
    """Detected interval, end exclusive, with the rising-edge peak ratio."""

    start_sample: int
    end_sample: int
    peak_ratio: float

    def __post_init__(self):
        if self.start_sample >= self.end_sample:
            raise ValueError(
                f"degenerate burst [{self.start_sample}, {self.end_sample})"
            )

    @property
    def width_samples(self) -> int:
        return self.end_sample - self.start_sample


def smooth_power(rec: IqRecording, smooth_len: int) -> np.ndarray:
    """Moving average of |x|^2 over a centered window.

    Edge positions use the part of the window that fits, so the output has
    the same length as the input and a constant-power signal stays constant
    all the way to the ends.
    """
    n = len(rec.samples)
    if n == 0:
        raise ValueError("empty recording")
    if not 1 <= smooth_len <= n:
        raise ValueError("smooth_len must be in [1, recording length]")
    power = np.abs(rec.samples).astype(np.float64) ** 2
    if smooth_len == 1:
        return power
    half_lo = (smooth_len - 1) // 2
    half_hi = smooth_len // 2
    prefix = np.concatenate(([0.0], np.cumsum(power)))
    idx = np.arange(n)
    lo = np.maximum(idx - half_lo, 0)
    hi = np.minimum(idx + half_hi + 1, n)
    return (prefix[hi] - prefix[lo]) / (hi - lo)


def energy_ratio(p, k: int, L: int, delta: int, floor_eps: float) -> float:
    """Leading-to-trailing window energy ratio at index k.

    Trailing window covers p[k-L+1 .. k], leading window covers
    p[k+delta .. k+delta+L-1]; floor_eps is added to both sums.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if k - L + 1 < 0 or k + delta + L - 1 >= len(p):
        raise IndexError(f"windows around k={k} fall outside the sequence")
    p = np.asarray(p, dtype=np.float64)
    trailing = float(p[k - L + 1:k + 1].sum())
    leading = float(p[k + delta:k + delta + L].sum())
    return (leading + floor_eps) / (trailing + floor_eps)


def _window_sums(prefix: np.ndarray, L: int, delta: int) -> tuple:
    """Vectorized leading/trailing window sums for every valid k.

    Returns (k0, leading, trailing) where index i of the arrays corresponds
    to k = k0 + i.
    """
    n = len(prefix) - 1
    k0 = L - 1
    k1 = n - delta - L  # last valid k
    if k1 < k0:
        return k0, np.empty(0), np.empty(0)
    ks = np.arange(k0, k1 + 1)
    trailing = prefix[ks + 1] - prefix[ks + 1 - L]
    leading = prefix[ks + delta + L] - prefix[ks + delta]
    return k0, leading, trailing


def _true_runs(mask: np.ndarray) -> list:
    """Return [start, end) index pairs of the maximal True runs in mask."""
    if not mask.any():
        return []
    diffs = np.diff(mask.astype(np.int8))
    starts = np.flatnonzero(diffs == 1) + 1
    ends = np.flatnonzero(diffs == -1) + 1
    if mask[0]:
        starts = np.concatenate(([0], starts))
    if mask[-1]:
        ends = np.concatenate((ends, [len(mask)]))
    return list(zip(starts.tolist(), ends.tolist()))


def detect_bursts(rec: IqRecording, cfg: DetectorConfig = DetectorConfig()):
    """Segment a recording into bursts.

    A rising edge is declared where the energy ratio crosses above alpha;
    the edge lands on the k with the maximum ratio inside the crossing run.
    A falling edge mirrors it below 1/alpha.  Bursts shorter than
    min_burst_us are dropped after gaps shorter than min_gap_us have been
    merged.

    Returns:
        Sorted, non-overlapping list of DetectedBurst.
    """
    cfg.validate()
    n = len(rec.samples)
    max_win = max(cfg.window_len_rising, cfg.window_len_falling)
    if n <= 2 * max_win + cfg.gap_delta:
        raise ValueError("recording shorter than the detector windows")
    if cfg.smooth_len > n:
        raise ValueError("smooth_len exceeds recording length")

    p = smooth_power(rec, cfg.smooth_len)
    prefix = np.concatenate(([0.0], np.cumsum(p)))
    del p

    k0_r, lead_r, trail_r = _window_sums(prefix, cfg.window_len_rising,
                                         cfg.gap_delta)
    rising_mask = lead_r + cfg.floor_eps > cfg.alpha * (trail_r + cfg.floor_eps)
    rising_runs = _true_runs(rising_mask)

    same = cfg.window_len_falling == cfg.window_len_rising
    if same:
        k0_f, lead_f, trail_f = k0_r, lead_r, trail_r
    else:
        k0_f, lead_f, trail_f = _window_sums(prefix, cfg.window_len_falling,
                                             cfg.gap_delta)
    falling_mask = (cfg.alpha * (lead_f + cfg.floor_eps)
                    < trail_f + cfg.floor_eps)
    falling_runs = _true_runs(falling_mask)

    def ratio_r(i):
        return (lead_r[i] + cfg.floor_eps) / (trail_r[i] + cfg.floor_eps)

    def ratio_f(i):
        return (lead_f[i] + cfg.floor_eps) / (trail_f[i] + cfg.floor_eps)

    # Walk the two run lists in index order: IDLE consumes the next rising
    # run, BURST the next falling run strictly after the chosen edge.
    raw = []
    ir, jf = 0, 0
    cursor = -1  # last consumed k
    while ir < len(rising_runs):
        rs, re = rising_runs[ir]
        ir += 1
        if k0_r + re - 1 <= cursor:
            continue
        seg = slice(max(rs, cursor + 1 - k0_r), re)
        i_peak = seg.start + int(np.argmax(ratio_r(np.arange(seg.start, seg.stop))))
        start_k = k0_r + i_peak
        peak = float(ratio_r(i_peak))

        # Find the first falling run beyond the rising edge.
        end_k = None
        while jf < len(falling_runs):
            fs, fe = falling_runs[jf]
            if k0_f + fe - 1 <= start_k:
                jf += 1
                continue
            seg_f = slice(max(fs, start_k + 1 - k0_f), fe)
            i_min = seg_f.start + int(np.argmin(
                ratio_f(np.arange(seg_f.start, seg_f.stop))))
            end_k = k0_f + i_min
            jf += 1
            break
        if end_k is None:
            end_k = n  # ran off the end while still inside a burst
        if end_k > start_k:
            raw.append((start_k, end_k, peak))
        cursor = end_k

    if not raw:
        return []

    # Debounce: close sub-min_gap gaps first, then drop slivers.
    min_gap = us_to_samples(cfg.min_gap_us, rec.sample_rate_hz)
    min_burst = us_to_samples(cfg.min_burst_us, rec.sample_rate_hz)
    merged = [raw[0]]
    for start, end, peak in raw[1:]:
        last_s, last_e, last_p = merged[-1]
        if start - last_e < min_gap:
            merged[-1] = (last_s, max(last_e, end), max(last_p, peak))
        else:
            merged.append((start, end, peak))
    return [DetectedBurst(s, e, p) for s, e, p in merged
            if e - s >= min_burst]


def save_detections(bursts, path) -> None:
    """Write detections as a JSON array mirroring the truth format."""
    rows = [
        {
            "start_sample": int(b.start_sample),
            "end_sample": int(b.end_sample),
            "peak_ratio": float(b.peak_ratio),
        }
        for b in bursts
    ]
    Path(path).write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")


def load_detections(path):
    rows = json.loads(Path(path).read_text())
    return [
        DetectedBurst(int(r["start_sample"]), int(r["end_sample"]),
                      float(r.get("peak_ratio", 0.0)))
        for r in rows
    ]
