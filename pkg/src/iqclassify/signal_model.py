"""Synthetic baseband IQ scenes: Wi-Fi bursts, beacons, Bluetooth cycles, AWGN.

Bursts are envelope models, not standards-compliant waveforms.  Wi-Fi and
beacon frames are sums of equal-amplitude random-phase subcarriers, which
gives them the high peak-to-average power ratio of real OFDM.  Bluetooth
frames are constant-envelope with a slow random phase walk, so their PAPR
sits at 0 dB.  Burst timing follows the 802.11/Bluetooth constants the
classifier relies on (SIFS, DIFS, beacon cadence, slot-quantized frame
widths); every constant is a config field.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np

DEFAULT_SAMPLE_RATE_HZ = 20e6


class ProtocolLabel(IntEnum):
    """Classification target. Codes are stable for serialization."""

    WIFI = 0
    WIFI_BEACON = 1
    BLUETOOTH = 2


class Scenario(str, Enum):
    BEACON_ONLY = "beacon"
    WIFI_EXCHANGE = "wifi"
    BLUETOOTH = "bluetooth"
    MIXED = "mixed"


# Frame-kind tags used in truth records.
KIND_BEACON = "Beacon"
KIND_RTS = "RTS"
KIND_CTS = "CTS"
KIND_DATA = "Data"
KIND_ACK = "Ack"
KIND_BT_DATA = "BtData"
KIND_BT_ACK = "BtAck"


def us_to_samples(us: float, sample_rate_hz: float) -> int:
    """Convert a duration in microseconds to a whole number of samples."""
    return int(round(us * sample_rate_hz / 1e6))


def samples_to_us(n: int, sample_rate_hz: float) -> float:
    return n / sample_rate_hz * 1e6


@dataclass(frozen=True)
class TruthBurst:
    """One ground-truth transmission interval, end exclusive."""

    start_sample: int
    end_sample: int
    label: ProtocolLabel
    kind: str

    def __post_init__(self):
        if self.start_sample >= self.end_sample:
            raise ValueError(
                f"degenerate burst [{self.start_sample}, {self.end_sample})"
            )

    @property
    def width_samples(self) -> int:
        return self.end_sample - self.start_sample


@dataclass(frozen=True)
class BurstTruth:
    """Ordered ground truth for one recording.

    Bursts are sorted by start sample.  Within a single-transmitter scenario
    they never overlap; a mixed scene may contain overlaps (flagged in the
    recording meta).
    """

    bursts: tuple

    def __post_init__(self):
        object.__setattr__(self, "bursts", tuple(self.bursts))
        starts = [b.start_sample for b in self.bursts]
        if starts != sorted(starts):
            raise ValueError("truth bursts must be sorted by start_sample")

    def __len__(self) -> int:
        return len(self.bursts)

    def __iter__(self):
        return iter(self.bursts)

    def __getitem__(self, i):
        return self.bursts[i]


@dataclass
class IqRecording:
    """Complex baseband samples plus rate and provenance strings."""

    samples: np.ndarray
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    meta: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def validate(self) -> None:
        """Raise if any sample is non-finite."""
        floats = self.samples.view(np.float32 if self.samples.dtype == np.complex64
                                   else np.float64)
        if not np.isfinite(floats).all():
            raise ValueError("recording contains non-finite samples")


@dataclass(frozen=True)
class GeneratorConfig:
    """Everything the scene generators randomize or hold fixed.

    Durations are in microseconds unless suffixed otherwise.  Ranges are
    closed (min, max) pairs sampled uniformly per burst.
    """

    scenario: Scenario = Scenario.MIXED
    duration_s: float = 1.0
    seed: int = 0
    amplitude: float = 1.0
    # Per-burst amplitude spread, peak to peak in dB, uniform in log domain.
    # Models near/far transmitters; under noise the weak bursts drop out
    # first, which is what makes partial detection at low SNR realistic.
    amplitude_spread_db: float = 12.0
    lead_in_us: float = 100.0
    lead_out_us: float = 100.0
    # Beacon cadence: one management frame every 102.4 ms, 2.184 ms on air.
    beacon_airtime_us: float = 2184.0
    beacon_interval_us: float = 102400.0
    # 802.11n interframe spaces.
    sifs_us: float = 10.0
    difs_us: float = 50.0
    # Control frames carry no payload; widths are config guesses, not
    # measured values.
    rts_us: float = 50.0
    cts_us: float = 40.0
    ack_us: float = 40.0
    # Data frames span everything between short control frames and the
    # longest 5-slot Bluetooth frame, so the time features of the two
    # protocols genuinely overlap the way over-the-air traffic does.
    wifi_data_frame_us_range: tuple = (200.0, 2870.0)
    wifi_subcarrier_count: int = 64
    control_subcarrier_count: int = 32
    # Bluetooth: 5-slot data frames, 1-slot acks, 625 us slot grid.
    bt_data_us_range: tuple = (2500.0, 2870.0)
    bt_ack_us_range: tuple = (126.0, 366.0)
    bt_ack_delay_us_range: tuple = (200.0, 600.0)
    bt_idle_us: float = 1250.0
    bt_max_freq_cycles: float = 0.25
    bt_phase_jitter_rad: float = 0.05

    def validate(self) -> None:
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")
        if self.amplitude_spread_db < 0:
            raise ValueError("amplitude_spread_db must be >= 0")
        if self.seed < 0 or self.seed > 2**64 - 1:
            raise ValueError("seed must fit in 64 unsigned bits")
        for name in ("lead_in_us", "lead_out_us", "beacon_airtime_us",
                     "beacon_interval_us", "sifs_us", "difs_us", "rts_us",
                     "cts_us", "ack_us", "bt_idle_us"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("beacon_airtime_us", "rts_us", "cts_us", "ack_us"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.beacon_interval_us <= self.beacon_airtime_us:
            raise ValueError("beacon_interval_us must exceed beacon_airtime_us")
        for name in ("wifi_data_frame_us_range", "bt_data_us_range",
                     "bt_ack_us_range", "bt_ack_delay_us_range"):
            lo, hi = getattr(self, name)
            if lo < 0 or lo > hi:
                raise ValueError(f"{name} must satisfy 0 <= min <= max")
        lo, _ = self.wifi_data_frame_us_range
        if lo <= 0:
            raise ValueError("wifi_data_frame_us_range min must be positive")
        for name in ("wifi_subcarrier_count", "control_subcarrier_count"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 <= self.bt_max_freq_cycles < 0.5:
            raise ValueError("bt_max_freq_cycles must lie in [0, 0.5)")
        if self.bt_phase_jitter_rad < 0:
            raise ValueError("bt_phase_jitter_rad must be >= 0")

    def config_hash(self) -> str:
        payload = dataclasses.asdict(self)
        payload["scenario"] = self.scenario.value
        text = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _check_rate(config: GeneratorConfig, sample_rate_hz: float) -> int:
    """Validate config/rate and return the recording length in samples."""
    config.validate()
    if sample_rate_hz <= 0:
        raise ValueError("sample_rate_hz must be positive")
    n = int(round(config.duration_s * sample_rate_hz))
    if n >= 2**62:
        raise ValueError("duration_s * sample_rate_hz overflows the index type")
    if n < 1:
        raise ValueError("recording would be empty at this rate")
    return n


def _amplitude_factor(rng: np.random.Generator, spread_db: float) -> float:
    # One uniform draw per burst even when the spread is zero, so the
    # random stream stays aligned across config tweaks.
    db = rng.uniform(-spread_db / 2.0, spread_db / 2.0)
    return float(10.0 ** (db / 20.0))


def _ofdm_burst(rng: np.random.Generator, n_samples: int,
                n_subcarriers: int, amplitude: float) -> np.ndarray:
    """Multicarrier envelope: random-phase tones, unit mean power, tiled."""
    phases = rng.uniform(0.0, 2.0 * np.pi, n_subcarriers)
    symbol = np.fft.ifft(np.exp(1j * phases)) * math.sqrt(n_subcarriers)
    reps = -(-n_samples // n_subcarriers)
    wave = np.tile(symbol, reps)[:n_samples]
    return (amplitude * wave).astype(np.complex64)


def _gfsk_burst(rng: np.random.Generator, n_samples: int, amplitude: float,
                max_freq_cycles: float, phase_jitter_rad: float) -> np.ndarray:
    """Constant-envelope tone with a random offset and slow phase walk."""
    freq = rng.uniform(-max_freq_cycles, max_freq_cycles)
    phase0 = rng.uniform(0.0, 2.0 * np.pi)
    theta = phase0 + 2.0 * np.pi * freq * np.arange(n_samples)
    if phase_jitter_rad > 0:
        theta = theta + np.cumsum(rng.normal(0.0, phase_jitter_rad, n_samples))
    return (amplitude * np.exp(1j * theta)).astype(np.complex64)


def _draw_width(rng: np.random.Generator, us_range: tuple,
                sample_rate_hz: float) -> int:
    """Uniform draw in microseconds, converted to samples.

    The sample count is clamped so the realized width, measured back in
    microseconds, always stays inside the closed range even after rounding.
    """
    lo, hi = us_range
    us = rng.uniform(lo, hi)
    w = us_to_samples(us, sample_rate_hz)
    w_min = math.ceil(lo * sample_rate_hz / 1e6 - 1e-9)
    w_max = math.floor(hi * sample_rate_hz / 1e6 + 1e-9)
    if w_max < 1:
        raise ValueError(f"range {us_range} us is below one sample at "
                         f"{sample_rate_hz} Hz")
    return max(min(w, w_max), max(w_min, 1))


def _base_meta(config: GeneratorConfig, n_bursts: int) -> dict:
    return {
        "scenario": config.scenario.value,
        "seed": str(config.seed),
        "config_hash": config.config_hash(),
        "n_bursts": str(n_bursts),
    }


def generate_beacon(config: GeneratorConfig,
                    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ):
    """Beacon-only scene: fixed airtime frames on an exact interval grid.

    Args:
        config: scenario must be BEACON_ONLY.
        sample_rate_hz: output sample rate.

    Returns:
        (IqRecording, BurstTruth) pair.  A capture shorter than one beacon
        interval yields zero or one burst and is flagged in meta rather
        than treated as an error.
    """
    if config.scenario != Scenario.BEACON_ONLY:
        raise ValueError("config.scenario must be BEACON_ONLY")
    n = _check_rate(config, sample_rate_hz)
    rng = np.random.default_rng(config.seed)
    width = us_to_samples(config.beacon_airtime_us, sample_rate_hz)
    period = us_to_samples(config.beacon_interval_us, sample_rate_hz)
    lead = us_to_samples(config.lead_in_us, sample_rate_hz)
    tail = us_to_samples(config.lead_out_us, sample_rate_hz)

    samples = np.zeros(n, dtype=np.complex64)
    bursts = []
    start = lead
    while start + width + tail <= n:
        amp = config.amplitude * _amplitude_factor(rng, config.amplitude_spread_db)
        samples[start:start + width] = _ofdm_burst(
            rng, width, config.wifi_subcarrier_count, amp)
        bursts.append(TruthBurst(start, start + width,
                                 ProtocolLabel.WIFI_BEACON, KIND_BEACON))
        start += period

    meta = _base_meta(config, len(bursts))
    if len(bursts) <= 1:
        meta["short_capture"] = "true"
    rec = IqRecording(samples, sample_rate_hz, meta)
    return rec, BurstTruth(tuple(bursts))


def generate_wifi_exchange(config: GeneratorConfig,
                           sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ):
    """RTS/CTS/Data/ACK cycles with the beacon cadence interleaved.

    Each cycle is [DIFS] RTS [SIFS] CTS [SIFS] Data [SIFS] ACK.  Beacons
    keep their exact interval grid; a cycle is only placed when it fits
    before the next beacon with at least a DIFS of slack, so the gap
    preceding a beacon is DIFS plus whatever was left over.
    """
    if config.scenario != Scenario.WIFI_EXCHANGE:
        raise ValueError("config.scenario must be WIFI_EXCHANGE")
    n = _check_rate(config, sample_rate_hz)
    rng = np.random.default_rng(config.seed)
    rate = sample_rate_hz

    beacon_w = us_to_samples(config.beacon_airtime_us, rate)
    period = us_to_samples(config.beacon_interval_us, rate)
    lead = us_to_samples(config.lead_in_us, rate)
    tail = us_to_samples(config.lead_out_us, rate)
    sifs = us_to_samples(config.sifs_us, rate)
    difs = us_to_samples(config.difs_us, rate)
    rts_w = us_to_samples(config.rts_us, rate)
    cts_w = us_to_samples(config.cts_us, rate)
    ack_w = us_to_samples(config.ack_us, rate)

    beacon_starts = []
    start = lead
    while start + beacon_w + tail <= n:
        beacon_starts.append(start)
        start += period

    samples = np.zeros(n, dtype=np.complex64)
    bursts = []

    def place(start, width, n_sub, label, kind):
        amp = config.amplitude * _amplitude_factor(rng, config.amplitude_spread_db)
        samples[start:start + width] = _ofdm_burst(rng, width, n_sub, amp)
        bursts.append(TruthBurst(start, start + width, label, kind))

    # Window boundaries between which data cycles are packed.
    windows = []
    if beacon_starts:
        for i, bs in enumerate(beacon_starts):
            place(bs, beacon_w, config.wifi_subcarrier_count,
                  ProtocolLabel.WIFI_BEACON, KIND_BEACON)
            win_start = bs + beacon_w
            if i + 1 < len(beacon_starts):
                windows.append((win_start, beacon_starts[i + 1], difs))
            else:
                windows.append((win_start, n - tail, 0))
    else:
        windows.append((lead, n - tail, 0))

    control = config.control_subcarrier_count
    for win_start, win_end, guard in windows:
        cur = win_start
        while True:
            data_w = _draw_width(rng, config.wifi_data_frame_us_range, rate)
            rts_s = cur + difs
            cts_s = rts_s + rts_w + sifs
            data_s = cts_s + cts_w + sifs
            ack_s = data_s + data_w + sifs
            ack_e = ack_s + ack_w
            if ack_e + guard > win_end:
                break
            place(rts_s, rts_w, control, ProtocolLabel.WIFI, KIND_RTS)
            place(cts_s, cts_w, control, ProtocolLabel.WIFI, KIND_CTS)
            place(data_s, data_w, config.wifi_subcarrier_count,
                  ProtocolLabel.WIFI, KIND_DATA)
            place(ack_s, ack_w, control, ProtocolLabel.WIFI, KIND_ACK)
            cur = ack_e

    bursts.sort(key=lambda b: b.start_sample)
    rec = IqRecording(samples, rate, _base_meta(config, len(bursts)))
    return rec, BurstTruth(tuple(bursts))


def generate_bluetooth(config: GeneratorConfig,
                       sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ):
    """Bluetooth-style cycles: Data, turnaround gap, ACK, idle, repeat.

    Data widths span five slots, acks one slot, and the Data-to-ACK
    turnaround is drawn from its own range.  All bursts are
    constant-envelope, so their PAPR is 0 dB up to float rounding.
    """
    if config.scenario != Scenario.BLUETOOTH:
        raise ValueError("config.scenario must be BLUETOOTH")
    n = _check_rate(config, sample_rate_hz)
    rng = np.random.default_rng(config.seed)
    rate = sample_rate_hz
    lead = us_to_samples(config.lead_in_us, rate)
    tail = us_to_samples(config.lead_out_us, rate)
    idle = us_to_samples(config.bt_idle_us, rate)

    samples = np.zeros(n, dtype=np.complex64)
    bursts = []

    def place(start, width, kind):
        amp = config.amplitude * _amplitude_factor(rng, config.amplitude_spread_db)
        samples[start:start + width] = _gfsk_burst(
            rng, width, amp, config.bt_max_freq_cycles,
            config.bt_phase_jitter_rad)
        bursts.append(TruthBurst(start, start + width,
                                 ProtocolLabel.BLUETOOTH, kind))

    cur = lead
    while True:
        data_w = _draw_width(rng, config.bt_data_us_range, rate)
        gap = _draw_width(rng, config.bt_ack_delay_us_range, rate)
        ack_w = _draw_width(rng, config.bt_ack_us_range, rate)
        ack_s = cur + data_w + gap
        ack_e = ack_s + ack_w
        if ack_e + tail > n:
            break
        place(cur, data_w, KIND_BT_DATA)
        place(ack_s, ack_w, KIND_BT_ACK)
        cur = ack_e + idle

    rec = IqRecording(samples, rate, _base_meta(config, len(bursts)))
    return rec, BurstTruth(tuple(bursts))


def overlap_fraction(truth: BurstTruth) -> float:
    """Fraction of bursts that temporally overlap at least one other burst."""
    if len(truth) == 0:
        return 0.0
    items = sorted(truth, key=lambda b: (b.start_sample, b.end_sample))
    overlapped = [False] * len(items)
    max_end = items[0].end_sample
    max_idx = 0
    for i in range(1, len(items)):
        if items[i].start_sample < max_end:
            overlapped[i] = True
            overlapped[max_idx] = True
        if items[i].end_sample > max_end:
            max_end = items[i].end_sample
            max_idx = i
    return sum(overlapped) / len(items)


def generate_mixed(config: GeneratorConfig,
                   sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ):
    """Superposition of independent beacon and Bluetooth streams.

    Both component streams are generated with this config's seed, so their
    burst counts match the single-scenario outputs for the same seed.
    Overlapping bursts are allowed; the overlap fraction goes in meta.
    """
    if config.scenario != Scenario.MIXED:
        raise ValueError("config.scenario must be MIXED")
    _check_rate(config, sample_rate_hz)
    cfg_b = dataclasses.replace(config, scenario=Scenario.BEACON_ONLY)
    cfg_t = dataclasses.replace(config, scenario=Scenario.BLUETOOTH)
    rec_b, truth_b = generate_beacon(cfg_b, sample_rate_hz)
    rec_t, truth_t = generate_bluetooth(cfg_t, sample_rate_hz)

    samples = rec_b.samples + rec_t.samples
    merged = sorted(list(truth_b) + list(truth_t),
                    key=lambda b: (b.start_sample, b.end_sample, int(b.label)))
    truth = BurstTruth(tuple(merged))
    meta = _base_meta(config, len(truth))
    meta["overlap_fraction"] = f"{overlap_fraction(truth):.6f}"
    return IqRecording(samples, sample_rate_hz, meta), truth


_GENERATORS = {
    Scenario.BEACON_ONLY: generate_beacon,
    Scenario.WIFI_EXCHANGE: generate_wifi_exchange,
    Scenario.BLUETOOTH: generate_bluetooth,
    Scenario.MIXED: generate_mixed,
}


def generate(config: GeneratorConfig,
             sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ):
    """Dispatch to the generator matching config.scenario."""
    return _GENERATORS[config.scenario](config, sample_rate_hz)


def add_awgn(rec: IqRecording, snr_db: float, seed: int) -> IqRecording:
    """Add complex white Gaussian noise at a target SNR.

    SNR is referenced to the average power of burst regions (samples with
    nonzero amplitude), not the whole capture, so idle gaps do not dilute
    it.  snr_db of +inf is the no-noise sentinel and returns a copy.

    Args:
        rec: clean recording; it is not modified.
        snr_db: target signal-to-noise ratio in dB, or +inf.
        seed: noise generator seed.

    Returns:
        New recording of the same length and rate.

    Raises:
        ValueError: if the recording carries no signal power.
    """
    meta = dict(rec.meta)
    if math.isinf(snr_db) and snr_db > 0:
        meta["snr_db"] = "inf"
        return IqRecording(rec.samples.copy(), rec.sample_rate_hz, meta)
    if not math.isfinite(snr_db):
        raise ValueError("snr_db must be finite or +inf")
    if len(rec.samples) == 0:
        raise ValueError("empty recording")

    power = np.abs(rec.samples) ** 2
    mask = power > 0
    if not mask.any():
        raise ValueError("recording has no burst-region power; SNR undefined")
    signal_power = float(power[mask].mean())
    del power, mask

    noise_power = signal_power / (10.0 ** (snr_db / 10.0))
    sigma = math.sqrt(noise_power / 2.0)
    rng = np.random.default_rng(seed)
    out = rec.samples.astype(np.complex64, copy=True)
    out.real += (sigma * rng.standard_normal(len(out))).astype(np.float32)
    out.imag += (sigma * rng.standard_normal(len(out))).astype(np.float32)
    meta["snr_db"] = repr(float(snr_db))
    meta["noise_seed"] = str(seed)
    return IqRecording(out, rec.sample_rate_hz, meta)


# ---------------------------------------------------------------------------
# File I/O: raw interleaved little-endian float32 IQ plus JSON sidecars.

def save_recording(rec: IqRecording, path) -> None:
    """Write raw interleaved I/Q float32 and a `<name>.meta.json` sidecar."""
    path = Path(path)
    rec.validate()
    inter = np.empty(2 * len(rec.samples), dtype="<f4")
    inter[0::2] = rec.samples.real
    inter[1::2] = rec.samples.imag
    inter.tofile(path)
    sidecar = {
        "sample_rate_hz": float(rec.sample_rate_hz),
        "n_samples": int(len(rec.samples)),
        "meta": {str(k): str(v) for k, v in rec.meta.items()},
    }
    meta_path = path.with_name(path.name + ".meta.json")
    meta_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load_recording(path) -> IqRecording:
    """Read an IQ file written by save_recording.

    Raises:
        FileNotFoundError: if the IQ file or its meta sidecar is missing
            (without the sidecar the sample rate is unknown).
        ValueError: on malformed payloads.
    """
    path = Path(path)
    meta_path = path.with_name(path.name + ".meta.json")
    if not path.exists():
        raise FileNotFoundError(f"no IQ file at {path}")
    if not meta_path.exists():
        raise FileNotFoundError(
            f"missing sidecar {meta_path}; sample rate unknown")
    sidecar = json.loads(meta_path.read_text())
    raw = np.fromfile(path, dtype="<f4")
    if len(raw) % 2:
        raise ValueError(f"{path} holds an odd number of float32 values")
    samples = np.empty(len(raw) // 2, dtype=np.complex64)
    samples.real = raw[0::2]
    samples.imag = raw[1::2]
    n_expected = int(sidecar.get("n_samples", len(samples)))
    if n_expected != len(samples):
        raise ValueError(f"{path}: sidecar says {n_expected} samples, "
                         f"file holds {len(samples)}")
    rec = IqRecording(samples, float(sidecar["sample_rate_hz"]),
                      dict(sidecar.get("meta", {})))
    rec.validate()
    return rec


def save_truth(truth: BurstTruth, path) -> None:
    """Write truth intervals as a JSON array."""
    rows = [
        {
            "start_sample": int(b.start_sample),
            "end_sample": int(b.end_sample),
            "label": int(b.label),
            "kind": b.kind,
        }
        for b in truth
    ]
    Path(path).write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")


def load_truth(path) -> BurstTruth:
    rows = json.loads(Path(path).read_text())
    bursts = tuple(
        TruthBurst(int(r["start_sample"]), int(r["end_sample"]),
                   ProtocolLabel(int(r["label"])), str(r["kind"]))
        for r in rows
    )
    return BurstTruth(bursts)
