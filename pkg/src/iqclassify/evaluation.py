"""Experiment orchestration: splits, scoring, the clean-train/noisy-test
study, corpus synthesis, and report serialization.

The noise study trains on clean features and re-runs the whole
detect/extract/classify pipeline on noisy copies of held-out recordings,
one SNR at a time.  Detections are tied back to ground truth by interval
overlap; unmatched detections count as false alarms and never enter
accuracy.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np

from . import knn as knn_mod
from . import svm as svm_mod
from .burst_detect import DetectorConfig, detect_bursts
from .features import (LabeledDataset, UNLABELED, concat_datasets,
                       extract_dataset, standardize)
from .signal_model import (GeneratorConfig, IqRecording, ProtocolLabel,
                           Scenario, add_awgn, generate)

METHOD_NAMES = ("svm-linear", "svm-poly", "svm-rbf", "knn")
DEFAULT_SNR_GRID_DB = (0.0, 2.0, 5.0, 8.0, 10.0, 15.0, 20.0, 30.0)

FEATURES_TIME_ONLY = "TimeOnly"
FEATURES_TIME_PLUS_PAPR = "TimePlusPapr"


@dataclass(frozen=True)
class SnrPoint:
    """One SNR sample of the noise study."""

    snr_db: float
    detected_frames: int
    false_alarms: int
    accuracy: float | None


@dataclass
class EvalReport:
    """Outcome of evaluating one method."""

    method: str
    features_used: str
    accuracy: float
    confusion: np.ndarray  # rows truth, columns predicted
    n_train: int
    n_test: int
    per_snr: list | None = None

    def __post_init__(self):
        self.confusion = np.asarray(self.confusion, dtype=np.int64)
        if self.confusion.shape != (len(ProtocolLabel), len(ProtocolLabel)):
            raise ValueError("confusion matrix must be 3x3")


def features_tag(feature_names) -> str:
    if any(str(n).startswith("papr") for n in feature_names):
        return FEATURES_TIME_PLUS_PAPR
    return FEATURES_TIME_ONLY


# ---------------------------------------------------------------------------
# Train/predict dispatch over the supported methods

def train_method(name: str, ds: LabeledDataset, seed: int = 0,
                 c_reg: float = 10.0, tol: float = 1e-3,
                 max_passes: int = 4000, k: int = 10, poly_c: float = 1.0,
                 poly_p: int = 3, rbf_c: float | None = None):
    """Train one classifier by method name on a standardized dataset."""
    if name == "knn":
        return knn_mod.train_knn(ds, k=k, seed=seed)
    if name in ("svm-linear", "svm-poly", "svm-rbf"):
        spec = svm_mod.KernelSpec(kind=name.split("-", 1)[1], poly_c=poly_c,
                                  poly_p=poly_p, rbf_c=rbf_c)
        return svm_mod.train_one_vs_all(ds, spec, c_reg=c_reg, tol=tol,
                                        max_passes=max_passes, seed=seed)
    raise ValueError(f"unknown method {name!r}; expected one of {METHOD_NAMES}")


def predict_method(model, X) -> np.ndarray:
    if isinstance(model, knn_mod.KnnModel):
        return knn_mod.predict_many(model, X)
    if isinstance(model, svm_mod.MultiClassSvmModel):
        return svm_mod.predict_many(model, X)
    raise TypeError(f"unsupported model type {type(model).__name__}")


def load_model(path):
    """Load a model file, dispatching on its model_type field."""
    payload = json.loads(open(path).read())
    kind = payload.get("model_type")
    if kind == "svm":
        return svm_mod.svm_from_dict(payload)
    if kind == "knn":
        return knn_mod.knn_from_dict(payload)
    raise ValueError(f"{path}: unknown model_type {kind!r}")


def save_model(model, path) -> None:
    if isinstance(model, knn_mod.KnnModel):
        knn_mod.save_knn(model, path)
    elif isinstance(model, svm_mod.MultiClassSvmModel):
        svm_mod.save_svm(model, path)
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")


# ---------------------------------------------------------------------------
# Splitting and evaluation

def _subset(ds: LabeledDataset, idx) -> LabeledDataset:
    return LabeledDataset(ds.features[idx].copy(), ds.labels[idx].copy(),
                          ds.feature_names, ds.standardization)


def split_train_test(ds: LabeledDataset, test_fraction: float, seed: int,
                     stratified: bool = True):
    """Disjoint, exhaustive train/test partition.

    Test size is floor(n * test_fraction), at least 1, applied per class
    when stratified.  Row order within each part follows the original
    dataset, so the split is reproducible and stable.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie strictly between 0 and 1")
    if len(ds) < 2:
        raise ValueError("need at least two rows to split")
    rng = np.random.default_rng(seed)
    test_idx = []
    if stratified:
        for label in sorted(set(int(v) for v in ds.labels)):
            idx = np.flatnonzero(ds.labels == label)
            if len(idx) < 2:
                raise ValueError(
                    f"class {label} has fewer than 2 rows; cannot stratify")
            perm = rng.permutation(idx)
            n_test = max(1, int(len(idx) * test_fraction))
            test_idx.extend(perm[:n_test].tolist())
    else:
        perm = rng.permutation(len(ds))
        n_test = max(1, int(len(ds) * test_fraction))
        test_idx = perm[:n_test].tolist()
    test_mask = np.zeros(len(ds), dtype=bool)
    test_mask[test_idx] = True
    if test_mask.all():
        raise ValueError("test fraction leaves no training rows")
    return _subset(ds, ~test_mask), _subset(ds, test_mask)


def evaluate(model, test: LabeledDataset) -> EvalReport:
    """Exhaustive prediction over a standardized, labeled test set."""
    if len(test) == 0:
        raise ValueError("empty test set")
    if test.standardization is None:
        raise ValueError("test set must be standardized with the model's "
                         "training stats")
    m_mean, m_std = model.standardization
    t_mean, t_std = test.standardization
    if (not np.allclose(m_mean, t_mean, rtol=1e-9, atol=0.0)
            or not np.allclose(m_std, t_std, rtol=1e-9, atol=0.0)):
        raise ValueError("test set standardization stats differ from the "
                         "model's training stats")
    if tuple(test.feature_names) != tuple(model.feature_names):
        raise ValueError("feature names differ between model and test set")
    if (test.labels == UNLABELED).any():
        raise ValueError("test set contains unlabeled rows")

    preds = predict_method(model, test.features)
    n_classes = len(ProtocolLabel)
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    for truth, pred in zip(test.labels, preds):
        confusion[int(truth), int(pred)] += 1
    accuracy = float(np.trace(confusion)) / len(test)
    return EvalReport(
        method=model.method,
        features_used=features_tag(test.feature_names),
        accuracy=accuracy,
        confusion=confusion,
        n_train=int(model.n_train),
        n_test=len(test),
    )


# ---------------------------------------------------------------------------
# Detection-to-truth matching

def match_pairs(detections, truth, min_overlap: float = 0.5) -> list:
    """Greedy one-to-one detection/truth assignment by interval overlap.

    Overlap is intersection-over-union, so split or merged detections only
    match when they genuinely cover a truth burst.  Pairs below min_overlap
    never match.

    Returns:
        List of (detection_index, truth_index, iou), at most one entry per
        detection and per truth burst.
    """
    if len(detections) == 0 or len(truth) == 0:
        return []
    ds = np.array([(b.start_sample, b.end_sample) for b in detections],
                  dtype=np.float64)
    ts = np.array([(b.start_sample, b.end_sample) for b in truth],
                  dtype=np.float64)
    inter = (np.minimum(ds[:, None, 1], ts[None, :, 1])
             - np.maximum(ds[:, None, 0], ts[None, :, 0]))
    inter = np.maximum(inter, 0.0)
    union = ((ds[:, 1] - ds[:, 0])[:, None]
             + (ts[:, 1] - ts[:, 0])[None, :] - inter)
    iou = inter / union
    cand = np.argwhere(iou >= min_overlap)
    order = sorted(
        ((float(iou[d, t]), int(d), int(t)) for d, t in cand),
        key=lambda item: (-item[0], item[1], item[2]))
    used_d = set()
    used_t = set()
    pairs = []
    for score, d, t in order:
        if d in used_d or t in used_t:
            continue
        used_d.add(d)
        used_t.add(t)
        pairs.append((d, t, score))
    pairs.sort()
    return pairs


def match_detections(detections, truth, min_overlap: float = 0.5) -> np.ndarray:
    """Per-detection labels inherited from matched truth bursts.

    Returns UNLABELED for detections without a qualifying match.
    """
    labels = np.full(len(detections), UNLABELED, dtype=np.int64)
    for d, t, _ in match_pairs(detections, truth, min_overlap):
        labels[d] = int(truth[t].label)
    return labels


def score_detections(detections, truth, min_overlap: float = 0.5) -> dict:
    """Recall/precision plus worst boundary errors over matched pairs."""
    pairs = match_pairs(detections, truth, min_overlap)
    max_start_err = 0
    max_end_err = 0
    for d, t, _ in pairs:
        max_start_err = max(max_start_err,
                            abs(detections[d].start_sample
                                - truth[t].start_sample))
        max_end_err = max(max_end_err,
                          abs(detections[d].end_sample - truth[t].end_sample))
    n_d, n_t = len(detections), len(truth)
    return {
        "n_detections": n_d,
        "n_truth": n_t,
        "matched": len(pairs),
        "recall": len(pairs) / n_t if n_t else 0.0,
        "precision": len(pairs) / n_d if n_d else 0.0,
        "max_start_error_samples": int(max_start_err),
        "max_end_error_samples": int(max_end_err),
    }


# ---------------------------------------------------------------------------
# Clean-train / noisy-test study

def _noise_seed(seed: int, rec_index: int) -> int:
    ss = np.random.SeedSequence([int(seed), int(rec_index)])
    return int(ss.generate_state(1, np.uint64)[0])


def _pipeline_rows(recordings, detector_cfg, feature_names,
                   min_overlap: float, snr_db: float, seed: int):
    """Detect, extract and label every recording at one SNR setting.

    The noise seed depends on the recording index but not on snr_db, so a
    sweep reuses one noise realization per recording at different scales
    and detection degrades smoothly along the grid.

    Returns:
        (dataset or None, detected_frames, false_alarms)
    """
    parts = []
    detected = 0
    false_alarms = 0
    for r_idx, (rec, truth) in enumerate(recordings):
        noisy = (rec if math.isinf(snr_db) and snr_db > 0
                 else add_awgn(rec, snr_db, _noise_seed(seed, r_idx)))
        dets = detect_bursts(noisy, detector_cfg)
        labels = match_detections(dets, truth, min_overlap)
        detected += int((labels != UNLABELED).sum())
        false_alarms += int((labels == UNLABELED).sum())
        ds = extract_dataset(noisy, dets, labels)
        labeled = ds.labeled_rows()
        if len(labeled):
            parts.append(labeled.select_features(feature_names))
        del noisy
    if not parts:
        return None, detected, false_alarms
    return concat_datasets(parts), detected, false_alarms


def run_noise_study(train_ds: LabeledDataset, methods, test_recordings,
                    snr_grid_db=DEFAULT_SNR_GRID_DB, seed: int = 0,
                    detector_cfg: DetectorConfig | None = None,
                    min_overlap: float = 0.5, hyper: dict | None = None):
    """Train on clean features, test the full pipeline under noise.

    Args:
        train_ds: clean training dataset; standardized here if raw.
        methods: method names from METHOD_NAMES.
        test_recordings: (IqRecording, BurstTruth) pairs kept out of
            training.
        snr_grid_db: SNR points; +inf means no added noise.
        seed: noise seeding; one stream per recording across the grid.
        detector_cfg: detector settings (defaults if None).
        min_overlap: detection/truth matching threshold.
        hyper: extra keyword arguments for train_method.

    Returns:
        One EvalReport per method; the headline fields come from running
        the same pipeline on the clean recordings, per_snr from the grid.
    """
    if len(snr_grid_db) == 0:
        raise ValueError("snr grid must not be empty")
    if not test_recordings:
        raise ValueError("no test recordings supplied")
    detector_cfg = detector_cfg or DetectorConfig()
    hyper = dict(hyper or {})
    if train_ds.standardization is None:
        std_train = standardize(train_ds)
    else:
        std_train = train_ds
    stats = std_train.standardization
    names = std_train.feature_names

    models = {name: train_method(name, std_train, seed=seed, **hyper)
              for name in methods}

    # Clean pipeline pass for the headline accuracy/confusion.
    clean_ds, clean_detected, _ = _pipeline_rows(
        test_recordings, detector_cfg, names, min_overlap, math.inf, seed)
    if clean_ds is None:
        raise ValueError("clean pipeline produced no classifiable frames")
    clean_std = standardize(clean_ds, stats)

    n_classes = len(ProtocolLabel)
    reports = {}
    for name, model in models.items():
        preds = predict_method(model, clean_std.features)
        confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
        for t, p in zip(clean_std.labels, preds):
            confusion[int(t), int(p)] += 1
        reports[name] = EvalReport(
            method=name,
            features_used=features_tag(names),
            accuracy=float(np.trace(confusion)) / len(clean_std),
            confusion=confusion,
            n_train=len(std_train),
            n_test=len(clean_std),
            per_snr=[],
        )

    for snr in snr_grid_db:
        ds, detected, false_alarms = _pipeline_rows(
            test_recordings, detector_cfg, names, min_overlap, float(snr),
            seed)
        if ds is None:
            for name in methods:
                reports[name].per_snr.append(
                    SnrPoint(float(snr), detected, false_alarms, None))
            continue
        std_ds = standardize(ds, stats)
        for name, model in models.items():
            preds = predict_method(model, std_ds.features)
            correct = int((preds == std_ds.labels).sum())
            reports[name].per_snr.append(SnrPoint(
                float(snr), detected, false_alarms,
                correct / len(std_ds)))
    return [reports[name] for name in methods]


def run_clean_experiment(raw_ds: LabeledDataset, methods,
                         test_fraction: float = 0.2, split_seed: int = 0,
                         train_seed: int = 0, repeats: int = 1,
                         hyper: dict | None = None):
    """Split, standardize on the training part, train and evaluate.

    With repeats > 1 the split seed advances by one per repeat and every
    (method, repeat) pair contributes one report.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    hyper = dict(hyper or {})
    reports = []
    for rep in range(repeats):
        train_raw, test_raw = split_train_test(raw_ds, test_fraction,
                                               split_seed + rep)
        train = standardize(train_raw)
        test = standardize(test_raw, train.standardization)
        for name in methods:
            model = train_method(name, train, seed=train_seed, **hyper)
            reports.append(evaluate(model, test))
    return reports


# ---------------------------------------------------------------------------
# Corpus synthesis

_SCENARIO_TAGS = {Scenario.BEACON_ONLY: 1, Scenario.WIFI_EXCHANGE: 2,
                  Scenario.BLUETOOTH: 3, Scenario.MIXED: 4}


def corpus_seed(seed: int, scenario: Scenario, index: int) -> int:
    """Stable per-recording seed for corpus generation."""
    ss = np.random.SeedSequence([int(seed), _SCENARIO_TAGS[scenario],
                                 int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


# Recording durations sized so each scenario yields its frames in a handful
# of captures without oversized arrays: beacons need long wall-clock spans
# (one frame per 102.4 ms), Wi-Fi needs the 20 MS/s resolution for SIFS
# gaps, Bluetooth packs two frames per ~4.6 ms cycle.
CORPUS_PLAN = {
    Scenario.BEACON_ONLY: {"duration_s": 4.2, "rate_hz": 5e6},
    Scenario.WIFI_EXCHANGE: {"duration_s": 0.26, "rate_hz": 20e6},
    Scenario.BLUETOOTH: {"duration_s": 1.2, "rate_hz": 5e6},
}


def synthesize_recording(scenario: Scenario, seed: int,
                         duration_s: float | None = None,
                         rate_hz: float | None = None,
                         config_overrides: dict | None = None):
    """One corpus recording plus truth for a scenario."""
    plan = CORPUS_PLAN.get(scenario, {"duration_s": 1.0, "rate_hz": 5e6})
    overrides = dict(config_overrides or {})
    cfg = GeneratorConfig(
        scenario=scenario,
        duration_s=duration_s if duration_s is not None else plan["duration_s"],
        seed=seed,
        **overrides,
    )
    rate = rate_hz if rate_hz is not None else plan["rate_hz"]
    return generate(cfg, rate)


def build_feature_corpus(seed: int, frames_per_class: int = 1000,
                         detector_cfg: DetectorConfig | None = None,
                         min_overlap: float = 0.5,
                         config_overrides: dict | None = None,
                         max_recordings: int = 200) -> LabeledDataset:
    """Detect-and-extract a balanced clean corpus.

    Recordings are synthesized per scenario until every class has
    frames_per_class labeled rows, going through the real detector so the
    features are what the pipeline would see in production.  The result is
    trimmed to exactly frames_per_class rows per class, keeping the
    earliest rows in generation order.

    Returns:
        Raw (unstandardized) LabeledDataset with balanced classes.
    """
    detector_cfg = detector_cfg or DetectorConfig()
    targets = {
        Scenario.BEACON_ONLY: int(ProtocolLabel.WIFI_BEACON),
        Scenario.BLUETOOTH: int(ProtocolLabel.BLUETOOTH),
        Scenario.WIFI_EXCHANGE: int(ProtocolLabel.WIFI),
    }
    counts = {int(l): 0 for l in ProtocolLabel}
    parts = []
    for scenario, class_code in targets.items():
        index = 0
        while counts[class_code] < frames_per_class:
            if index >= max_recordings:
                raise RuntimeError(
                    f"{scenario.value}: {max_recordings} recordings were not "
                    f"enough to reach {frames_per_class} frames")
            rec, truth = synthesize_recording(
                scenario, corpus_seed(seed, scenario, index),
                config_overrides=config_overrides)
            dets = detect_bursts(rec, detector_cfg)
            labels = match_detections(dets, truth, min_overlap)
            ds = extract_dataset(rec, dets, labels).labeled_rows()
            if len(ds) == 0:
                raise RuntimeError(
                    f"{scenario.value}: recording {index} produced no rows")
            parts.append(ds)
            for code, cnt in ds.class_counts().items():
                counts[code] = counts.get(code, 0) + cnt
            index += 1
            del rec
    full = concat_datasets(parts)

    keep = np.zeros(len(full), dtype=bool)
    taken = {int(l): 0 for l in ProtocolLabel}
    for i, label in enumerate(full.labels):
        code = int(label)
        if taken.get(code, frames_per_class) < frames_per_class:
            keep[i] = True
            taken[code] += 1
    trimmed = LabeledDataset(full.features[keep], full.labels[keep],
                             full.feature_names)
    short = {c: n for c, n in taken.items() if n < frames_per_class}
    if short:
        raise RuntimeError(f"corpus fell short for classes {short}")
    return trimmed


def build_test_recordings(seed: int, config_overrides: dict | None = None):
    """Held-out recordings for the noise study, one per scenario."""
    out = []
    for i, scenario in enumerate((Scenario.WIFI_EXCHANGE, Scenario.BLUETOOTH,
                                  Scenario.BEACON_ONLY)):
        rec_seed = corpus_seed(seed, scenario, 1000 + i)
        out.append(synthesize_recording(scenario, rec_seed,
                                        config_overrides=config_overrides))
    return out


# ---------------------------------------------------------------------------
# Report serialization

def report_to_dict(report: EvalReport) -> dict:
    payload = {
        "method": report.method,
        "features": report.features_used,
        "accuracy": float(report.accuracy),
        "confusion": [[int(v) for v in row] for row in report.confusion],
        "n_train": int(report.n_train),
        "n_test": int(report.n_test),
    }
    if report.per_snr is None:
        payload["per_snr"] = None
    else:
        payload["per_snr"] = [
            {
                "snr_db": ("inf" if math.isinf(p.snr_db) else float(p.snr_db)),
                "detected_frames": int(p.detected_frames),
                "false_alarms": int(p.false_alarms),
                "accuracy": None if p.accuracy is None else float(p.accuracy),
            }
            for p in report.per_snr
        ]
    return payload


def report_from_dict(d: dict) -> EvalReport:
    per_snr = None
    if d.get("per_snr") is not None:
        per_snr = [
            SnrPoint(
                snr_db=(math.inf if p["snr_db"] == "inf"
                        else float(p["snr_db"])),
                detected_frames=int(p["detected_frames"]),
                false_alarms=int(p["false_alarms"]),
                accuracy=(None if p["accuracy"] is None
                          else float(p["accuracy"])),
            )
            for p in d["per_snr"]
        ]
    return EvalReport(
        method=d["method"],
        features_used=d["features"],
        accuracy=float(d["accuracy"]),
        confusion=np.asarray(d["confusion"], dtype=np.int64),
        n_train=int(d["n_train"]),
        n_test=int(d["n_test"]),
        per_snr=per_snr,
    )


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return repr(value)
    return str(value)


def emit_report(reports, format: str = "json") -> bytes:
    """Serialize reports deterministically.

    JSON nests everything under a "reports" key.  CSV emits one row per
    (method, snr) point for reports that carry an SNR sweep, and a single
    row with an empty snr_db cell for clean reports.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to emit")
    if format == "json":
        payload = {"reports": [report_to_dict(r) for r in reports]}
        return (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode()
    if format == "csv":
        lines = ["method,features,snr_db,detected_frames,accuracy"]
        for r in reports:
            if r.per_snr:
                for p in r.per_snr:
                    lines.append(",".join([
                        r.method, r.features_used, _csv_cell(float(p.snr_db)),
                        str(int(p.detected_frames)), _csv_cell(p.accuracy)]))
            else:
                lines.append(",".join([
                    r.method, r.features_used, "", str(int(r.n_test)),
                    _csv_cell(float(r.accuracy))]))
        return ("\n".join(lines) + "\n").encode()
    raise ValueError(f"unknown report format {format!r}")


def reports_from_json(data) -> list:
    if isinstance(data, bytes):
        data = data.decode()
    payload = json.loads(data)
    return [report_from_dict(d) for d in payload["reports"]]
