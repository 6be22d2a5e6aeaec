"""Per-burst features: frame width, preceding silence gap, and PAPR.

Widths and gaps are linear functions of sample indices, so they transfer
unchanged between truth intervals and detector output.  PAPR is computed on
the burst's own samples and separates multicarrier envelopes from
constant-envelope ones.  A dataset here is a plain feature matrix plus
integer labels, with optional z-score standardization stats attached.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .signal_model import IqRecording

FEATURE_NAMES_3D = ("frame_width_us", "silence_gap_us", "papr_db")
TIME_FEATURE_NAMES = ("frame_width_us", "silence_gap_us")
UNLABELED = -1


@dataclass
class LabeledDataset:
    """Feature rows with labels and optional standardization stats.

    labels uses the stable protocol codes; UNLABELED (-1) marks rows whose
    class is unknown (for example unmatched detections).  standardization,
    when present, is the (mean, std) pair the features were scaled with,
    always computed from training data only.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple = FEATURE_NAMES_3D
    standardization: tuple | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.labels) != len(self.features):
            raise ValueError("labels and features row counts differ")
        if self.features.shape[1] != len(self.feature_names):
            raise ValueError("feature_names does not match feature columns")

    def __len__(self) -> int:
        return len(self.features)

    def class_counts(self) -> dict:
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    def labeled_rows(self) -> "LabeledDataset":
        """Drop UNLABELED rows."""
        keep = self.labels != UNLABELED
        return LabeledDataset(self.features[keep], self.labels[keep],
                              self.feature_names, self.standardization)

    def select_features(self, names) -> "LabeledDataset":
        """Project onto a subset of features, preserving their order here."""
        idx = []
        for name in names:
            if name not in self.feature_names:
                raise ValueError(f"unknown feature {name!r}")
            idx.append(self.feature_names.index(name))
        stats = None
        if self.standardization is not None:
            mean, std = self.standardization
            stats = (mean[idx].copy(), std[idx].copy())
        return LabeledDataset(self.features[:, idx].copy(), self.labels.copy(),
                              tuple(names), stats)


def frame_width(burst, sample_rate_hz: float) -> float:
    """Burst duration in microseconds."""
    return (burst.end_sample - burst.start_sample) / sample_rate_hz * 1e6


def silence_gap(prev, cur, sample_rate_hz: float) -> float:
    """Gap in microseconds between a burst and the one before it.

    Raises:
        ValueError: if the bursts overlap (detector contract violation).
    """
    if prev.end_sample > cur.start_sample:
        raise ValueError(
            f"bursts overlap: [{prev.start_sample}, {prev.end_sample}) then "
            f"[{cur.start_sample}, {cur.end_sample})")
    return (cur.start_sample - prev.end_sample) / sample_rate_hz * 1e6


def _peak_to_average(rec: IqRecording, burst) -> float:
    span = rec.samples[burst.start_sample:burst.end_sample]
    if len(span) == 0:
        raise ValueError("burst span is empty")
    power = np.abs(span).astype(np.float64) ** 2
    mean = float(power.mean())
    if mean == 0.0:
        raise ValueError("burst span is all zero; PAPR undefined")
    return float(power.max()) / mean


def papr(rec: IqRecording, burst) -> float:
    """Peak-to-average power ratio of the burst's samples, in dB (>= 0)."""
    return 10.0 * np.log10(_peak_to_average(rec, burst))


def extract_dataset(rec: IqRecording, bursts, labels=None,
                    papr_in_db: bool = True) -> LabeledDataset:
    """Build one feature row per burst, skipping the first burst.

    The first burst of a recording has no preceding frame, so its silence
    gap is undefined and the row is dropped.

    Args:
        rec: the recording the bursts index into.
        bursts: sorted, non-overlapping burst-like objects (truth or
            detections).
        labels: optional per-burst labels aligned with bursts; rows for
            bursts without a label get UNLABELED.
        papr_in_db: emit PAPR in dB (default) or as a linear ratio.

    Returns:
        LabeledDataset with len(bursts) - 1 rows (0 for <= 1 bursts).
    """
    bursts = list(bursts)
    if labels is not None and len(labels) != len(bursts):
        raise ValueError("labels must align one-to-one with bursts")
    names = FEATURE_NAMES_3D if papr_in_db else (
        "frame_width_us", "silence_gap_us", "papr_linear")
    if len(bursts) < 2:
        return LabeledDataset(np.empty((0, 3)), np.empty(0, dtype=np.int64),
                              names)
    rows = np.empty((len(bursts) - 1, 3))
    out_labels = np.full(len(bursts) - 1, UNLABELED, dtype=np.int64)
    for i in range(1, len(bursts)):
        ratio = _peak_to_average(rec, bursts[i])
        rows[i - 1, 0] = frame_width(bursts[i], rec.sample_rate_hz)
        rows[i - 1, 1] = silence_gap(bursts[i - 1], bursts[i],
                                     rec.sample_rate_hz)
        rows[i - 1, 2] = 10.0 * np.log10(ratio) if papr_in_db else ratio
        if labels is not None:
            out_labels[i - 1] = int(labels[i])
    return LabeledDataset(rows, out_labels, names)


def standardize(ds: LabeledDataset, stats=None) -> LabeledDataset:
    """Z-score features; population convention (ddof 0).

    Args:
        ds: dataset to transform.
        stats: optional (mean, std) arrays from training data; computed
            from ds itself when absent.

    Returns:
        New dataset with transformed features and the stats recorded.

    Raises:
        ValueError: on a zero-variance feature, naming it.
    """
    if stats is None:
        if len(ds) == 0:
            raise ValueError("cannot fit standardization on an empty dataset")
        mean = ds.features.mean(axis=0)
        std = ds.features.std(axis=0)
    else:
        mean = np.asarray(stats[0], dtype=np.float64)
        std = np.asarray(stats[1], dtype=np.float64)
        if mean.shape != (ds.features.shape[1],) or std.shape != mean.shape:
            raise ValueError("stats shape does not match feature columns")
    for j, s in enumerate(std):
        if s <= 0:
            raise ValueError(
                f"feature {ds.feature_names[j]!r} has zero variance")
    scaled = (ds.features - mean) / std
    return LabeledDataset(scaled, ds.labels.copy(), ds.feature_names,
                          (mean.copy(), std.copy()))


def concat_datasets(datasets) -> LabeledDataset:
    """Stack raw datasets with identical feature names."""
    datasets = list(datasets)
    if not datasets:
        raise ValueError("nothing to concatenate")
    names = datasets[0].feature_names
    for ds in datasets:
        if ds.feature_names != names:
            raise ValueError("feature name mismatch between datasets")
        if ds.standardization is not None:
            raise ValueError("concatenate raw datasets, not standardized ones")
    return LabeledDataset(
        np.concatenate([ds.features for ds in datasets]),
        np.concatenate([ds.labels for ds in datasets]),
        names)


def stats_hash(feature_names, mean, std) -> str:
    payload = {
        "feature_names": list(feature_names),
        "mean": [float(v) for v in mean],
        "std": [float(v) for v in std],
    }
    text = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def save_dataset(ds: LabeledDataset, path) -> None:
    """Write features as CSV; standardization stats go to a JSON sidecar."""
    path = Path(path)
    lines = [",".join(ds.feature_names) + ",label"]
    for row, label in zip(ds.features, ds.labels):
        cells = [repr(float(v)) for v in row]
        cells.append(str(int(label)))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")
    sidecar = path.with_name(path.name + ".stats.json")
    if ds.standardization is not None:
        mean, std = ds.standardization
        payload = {
            "feature_names": list(ds.feature_names),
            "mean": [float(v) for v in mean],
            "std": [float(v) for v in std],
            "stats_hash": stats_hash(ds.feature_names, mean, std),
        }
        sidecar.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    elif sidecar.exists():
        sidecar.unlink()


def load_dataset(path) -> LabeledDataset:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise ValueError(f"{path} is empty; expected a header row")
    header = lines[0].split(",")
    if header[-1] != "label":
        raise ValueError(f"{path}: last column must be 'label'")
    names = tuple(header[:-1])
    rows = []
    labels = []
    for ln in lines[1:]:
        if not ln.strip():
            continue
        cells = ln.split(",")
        if len(cells) != len(header):
            raise ValueError(f"{path}: row has {len(cells)} cells, "
                             f"expected {len(header)}")
        rows.append([float(c) for c in cells[:-1]])
        labels.append(int(cells[-1]))
    features = (np.asarray(rows, dtype=np.float64)
                if rows else np.empty((0, len(names))))
    stats = None
    sidecar = path.with_name(path.name + ".stats.json")
    if sidecar.exists():
        payload = json.loads(sidecar.read_text())
        stats = (np.asarray(payload["mean"], dtype=np.float64),
                 np.asarray(payload["std"], dtype=np.float64))
        if tuple(payload["feature_names"]) != names:
            raise ValueError(f"{sidecar}: feature names disagree with CSV")
    return LabeledDataset(features, np.asarray(labels, dtype=np.int64),
                          names, stats)
