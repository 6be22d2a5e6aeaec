"""Acceptance gate: seven end-to-end criteria over the full toolkit.

Each test prints one "CRITERION n: PASS/FAIL - detail" line (repeated in
the terminal summary) and asserts it.  Heavy shared state - the
1000-frame-per-class corpus, canonically split models, the Wi-Fi noise
study - is built lazily once and reused across criteria, with build times
tracked so the runtime budgets can be checked honestly.
"""

import time

import numpy as np

from iqclassify.burst_detect import DetectorConfig, detect_bursts
from iqclassify.evaluation import (DEFAULT_SNR_GRID_DB, METHOD_NAMES,
                                   build_feature_corpus,
                                   build_test_recordings, emit_report,
                                   evaluate, run_clean_experiment,
                                   run_noise_study, save_model,
                                   score_detections, split_train_test,
                                   synthesize_recording, train_method)
from iqclassify.features import (concat_datasets, extract_dataset,
                                 save_dataset, standardize)
from iqclassify.knn import predict_many as knn_predict_many
from iqclassify.signal_model import (KIND_ACK, KIND_BT_ACK, KIND_BT_DATA,
                                     KIND_CTS, KIND_DATA, KIND_RTS,
                                     GeneratorConfig, ProtocolLabel, Scenario,
                                     generate, save_recording, save_truth)
from iqclassify.svm import decision_values

from oracles import knn_reference, svm_kkt_violations

TIME_FEATURES = ("frame_width_us", "silence_gap_us")
SVM_METHODS = ("svm-linear", "svm-poly", "svm-rbf")

_CACHE = {}


def corpus():
    if "corpus" not in _CACHE:
        t0 = time.perf_counter()
        _CACHE["corpus"] = build_feature_corpus(seed=0, frames_per_class=1000)
        _CACHE["corpus_seconds"] = time.perf_counter() - t0
    return _CACHE["corpus"]


def canonical_models():
    """Both feature sets trained on the canonical split (seeds 0/0)."""
    if "models" not in _CACHE:
        full = corpus()
        bundles = {}
        for tag, ds in (("full", full),
                        ("time", full.select_features(TIME_FEATURES))):
            train_raw, test_raw = split_train_test(ds, 0.2, 0)
            train = standardize(train_raw)
            test = standardize(test_raw, train.standardization)
            models = {name: train_method(name, train, seed=0)
                      for name in METHOD_NAMES}
            bundles[tag] = {"train": train, "test": test, "models": models}
        _CACHE["models"] = bundles
    return _CACHE["models"]


def wifi_noise_study():
    if "study" not in _CACHE:
        wifi_rec, wifi_truth = build_test_recordings(seed=0)[0]
        t0 = time.perf_counter()
        _CACHE["study"] = run_noise_study(
            corpus(), list(METHOD_NAMES), [(wifi_rec, wifi_truth)], seed=0)
        _CACHE["study_seconds"] = time.perf_counter() - t0
        _CACHE["study_truth_frames"] = len(wifi_truth)
    return _CACHE["study"]


# ---------------------------------------------------------------------------
# 1. Generator timing fidelity

def test_criterion_1_generator_timing(criterion):
    t0 = time.perf_counter()
    slop = 1e-6
    violations = []
    n_bursts = 0

    def in_range(value, lo, hi):
        return lo - slop <= value <= hi + slop

    for seed in range(100):
        scenario = (Scenario.BEACON_ONLY, Scenario.WIFI_EXCHANGE,
                    Scenario.BLUETOOTH)[seed % 3]
        if scenario is Scenario.BEACON_ONLY:
            cfg = GeneratorConfig(scenario=scenario, duration_s=0.11,
                                  seed=seed)
            rec, truth = generate(cfg, 5e6)
        elif scenario is Scenario.WIFI_EXCHANGE:
            cfg = GeneratorConfig(scenario=scenario, duration_s=0.02,
                                  seed=seed)
            rec, truth = generate(cfg, 20e6)
        else:
            cfg = GeneratorConfig(scenario=scenario, duration_s=0.02,
                                  seed=seed)
            rec, truth = generate(cfg, 5e6)
        us = 1e6 / rec.sample_rate_hz
        n_bursts += len(truth)

        if scenario is Scenario.BEACON_ONLY:
            if len(truth) < 2:
                violations.append(f"seed {seed}: capture holds < 2 beacons")
            for b in truth:
                width = (b.end_sample - b.start_sample) * us
                if abs(width - 2184.0) > slop:
                    violations.append(f"seed {seed}: beacon width {width}")
            for prev, cur in zip(truth, truth[1:]):
                spacing = (cur.start_sample - prev.start_sample) * us
                if abs(spacing - 102400.0) > slop:
                    violations.append(f"seed {seed}: beacon grid {spacing}")
        elif scenario is Scenario.WIFI_EXCHANGE:
            for b in truth:
                width = (b.end_sample - b.start_sample) * us
                if b.kind == KIND_DATA and not in_range(width, 200.0, 2870.0):
                    violations.append(f"seed {seed}: data width {width}")
            for prev, cur in zip(truth, truth[1:]):
                gap = (cur.start_sample - prev.end_sample) * us
                if cur.kind in (KIND_CTS, KIND_DATA, KIND_ACK):
                    if abs(gap - 10.0) > slop:
                        violations.append(
                            f"seed {seed}: SIFS gap {gap} before {cur.kind}")
                elif cur.kind == KIND_RTS:
                    if abs(gap - 50.0) > slop:
                        violations.append(f"seed {seed}: DIFS gap {gap}")
        else:
            for b in truth:
                width = (b.end_sample - b.start_sample) * us
                if b.kind == KIND_BT_DATA and not in_range(
                        width, 2500.0, 2870.0):
                    violations.append(f"seed {seed}: bt data width {width}")
                if b.kind == KIND_BT_ACK and not in_range(width, 126.0, 366.0):
                    violations.append(f"seed {seed}: bt ack width {width}")
            for prev, cur in zip(truth, truth[1:]):
                if prev.kind == KIND_BT_DATA and cur.kind == KIND_BT_ACK:
                    delay = (cur.start_sample - prev.end_sample) * us
                    if not in_range(delay, 200.0, 600.0):
                        violations.append(f"seed {seed}: ack delay {delay}")

    elapsed = time.perf_counter() - t0
    ok = not violations and elapsed < 60.0
    head = violations[0] if violations else "zero violations"
    criterion(1, ok, f"{head}; {n_bursts} bursts over 100 seeded runs "
                     f"in {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. Detector exactness on clean captures

def test_criterion_2_detector_exactness(criterion):
    det_cfg = DetectorConfig()
    bound = det_cfg.smooth_len + max(det_cfg.window_len_rising,
                                     det_cfg.window_len_falling)
    cases = ((Scenario.BEACON_ONLY, 0.11), (Scenario.WIFI_EXCHANGE, 0.05),
             (Scenario.BLUETOOTH, 0.05))
    ok = True
    parts = []
    for scenario, duration in cases:
        cfg = GeneratorConfig(scenario=scenario, duration_s=duration, seed=2)
        rec, truth = generate(cfg, 20e6)
        t0 = time.perf_counter()
        detections = detect_bursts(rec, det_cfg)
        elapsed = time.perf_counter() - t0
        score = score_detections(detections, truth)
        worst = max(score["max_start_error_samples"],
                    score["max_end_error_samples"])
        case_ok = (score["recall"] == 1.0 and score["precision"] == 1.0
                   and worst <= bound and elapsed < 60.0 * duration)
        ok = ok and case_ok
        parts.append(f"{scenario.value} r={score['recall']:.3f} "
                     f"p={score['precision']:.3f} err={worst}")
    criterion(2, ok, "; ".join(parts) + f" (boundary bound {bound} samples"
                                        f" at 20 MS/s)")


# ---------------------------------------------------------------------------
# 3. PAPR feature sanity

def test_criterion_3_papr_sanity(criterion):
    ds = corpus()
    papr = ds.features[:, 2]
    bt = papr[ds.labels == int(ProtocolLabel.BLUETOOTH)]
    wifi = papr[ds.labels == int(ProtocolLabel.WIFI)]
    beacon = papr[ds.labels == int(ProtocolLabel.WIFI_BEACON)]
    n = min(len(wifi), len(bt))
    paired = float(np.mean(wifi[:n] > bt[:n]))
    ok = (float(bt.max()) <= 0.5
          and float(np.median(wifi)) >= 5.0
          and float(np.median(beacon)) >= 5.0
          and paired >= 0.99)
    criterion(3, ok, f"bt max {bt.max():.3f} dB, wifi median "
                     f"{np.median(wifi):.2f} dB, beacon median "
                     f"{np.median(beacon):.2f} dB, wifi>bt in "
                     f"{100 * paired:.1f}% of {n} pairs")


# ---------------------------------------------------------------------------
# 4. Oracle equivalence (KNN exact, SVM KKT audit, linear primal)

def test_criterion_4_oracle_equivalence(criterion):
    bundles = canonical_models()
    problems = []

    knn_model = bundles["full"]["models"]["knn"]
    rng = np.random.default_rng(2024)
    queries = rng.standard_normal((1000, 3))
    got = knn_predict_many(knn_model, queries)
    bad = sum(1 for q, g in zip(queries, got)
              if int(g) != knn_reference(knn_model.points, knn_model.labels,
                                         knn_model.k, q))
    if bad:
        problems.append(f"{bad}/1000 knn predictions differ from oracle")

    n_binaries = 0
    for tag in ("full", "time"):
        train = bundles[tag]["train"]
        rows = train.features
        for name in SVM_METHODS:
            multi = bundles[tag]["models"][name]
            for label, binary in enumerate(multi.class_models):
                targets = np.where(train.labels == label, 1.0, -1.0)
                found = svm_kkt_violations(binary, rows, targets, tol=1e-3)
                n_binaries += 1
                if found:
                    problems.append(f"{tag}/{name} class {label}: "
                                    f"{len(found)} KKT violations "
                                    f"({found[0]})")

        linear = bundles[tag]["models"]["svm-linear"]
        for label, binary in enumerate(linear.class_models):
            w = binary.coeffs @ binary.support_vectors
            primal = rows @ w + binary.bias
            expansion = decision_values(binary, rows)
            gap = float(np.max(np.abs(primal - expansion)))
            if gap > 1e-6:
                problems.append(f"{tag} linear class {label}: primal gap "
                                f"{gap:.2e}")

    ok = not problems
    if ok:
        detail = (f"knn 1000/1000 exact; KKT audit clean on {n_binaries} "
                  f"binaries (tol 1e-3); linear primal within 1e-6")
    else:
        detail = f"{len(problems)} problem(s), first: {problems[0]}"
    criterion(4, ok, detail)


# ---------------------------------------------------------------------------
# 5. Clean-corpus accuracy table

def test_criterion_5_clean_accuracy_structure(criterion):
    t0 = time.perf_counter()
    full = corpus()
    reports_full = run_clean_experiment(full, list(METHOD_NAMES))
    reports_time = run_clean_experiment(full.select_features(TIME_FEATURES),
                                        list(METHOD_NAMES))
    elapsed = _CACHE["corpus_seconds"] + (time.perf_counter() - t0)

    acc_full = {r.method: r.accuracy for r in reports_full}
    acc_time = {r.method: r.accuracy for r in reports_time}
    counts = full.class_counts()

    ok = all(abs(counts[label] - 1000) <= 50 for label in counts)
    ok = ok and all(acc_full[m] >= 0.95 for m in METHOD_NAMES)
    ranking = ("knn", "svm-rbf", "svm-poly", "svm-linear")
    for better, worse in zip(ranking, ranking[1:]):
        ok = ok and acc_full[better] >= acc_full[worse] - 0.01 - 1e-9
    margins = {m: acc_full[m] - acc_time[m] for m in METHOD_NAMES}
    ok = ok and all(margins[m] >= 0.01 - 1e-9 for m in METHOD_NAMES)
    ok = ok and elapsed < 300.0

    table = " ".join(f"{m}={100 * acc_full[m]:.2f}/{100 * acc_time[m]:.2f}"
                     for m in METHOD_NAMES)
    criterion(5, ok, f"accuracy full/time-only {table} (pct), "
                     f"corpus+train {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 6. Noise robustness curves

def test_criterion_6_noise_robustness(criterion):
    reports = wifi_noise_study()
    n_truth = _CACHE["study_truth_frames"]
    grid = DEFAULT_SNR_GRID_DB
    idx_low, idx_5 = grid.index(0), grid.index(5)
    ok = True
    parts = []
    for r in reports:
        det = [p.detected_frames for p in r.per_snr]
        acc = [p.accuracy for p in r.per_snr]
        if tuple(p.snr_db for p in r.per_snr) != tuple(grid):
            ok = False
            parts.append(f"{r.method}: grid mismatch")
            continue
        if any(a is None for a in acc):
            ok = False
            parts.append(f"{r.method}: undefined accuracy point")
            continue
        monotone_det = all(b >= a for a, b in zip(det, det[1:]))
        drops = [a - b for a, b in zip(acc, acc[1:]) if b < a - 1e-9]
        acc_ok = len(drops) <= 1 and all(d <= 0.02 + 1e-9 for d in drops)
        starved = (det[idx_low] <= 0.2 * n_truth
                   and det[idx_5] <= 0.6 * n_truth)
        ok = ok and monotone_det and acc_ok and starved
        parts.append(f"{r.method} det {det[idx_low]}->{det[-1]} "
                     f"acc {100 * acc[0]:.1f}->{100 * acc[-1]:.1f}")
    elapsed = _CACHE["study_seconds"]
    ok = ok and elapsed < 600.0
    criterion(6, ok, "; ".join(parts) + f" ({n_truth} truth frames, "
                                        f"study {elapsed:.0f}s)")


# ---------------------------------------------------------------------------
# 7. Byte-level determinism

def test_criterion_7_determinism(criterion, tmp_path):
    def artifact_bytes(stem):
        parts = []
        for scenario, overrides in (
                (Scenario.BEACON_ONLY, {"beacon_interval_us": 5000.0}),
                (Scenario.WIFI_EXCHANGE, None),
                (Scenario.BLUETOOTH, None)):
            parts.append(synthesize_recording(
                scenario, 5, duration_s=0.05, rate_hz=5e6,
                config_overrides=overrides))

        iq_path = tmp_path / f"{stem}.iq"
        truth_path = tmp_path / f"{stem}.truth.json"
        save_recording(parts[2][0], iq_path)
        save_truth(parts[2][1], truth_path)

        ds = concat_datasets([
            extract_dataset(rec, list(truth),
                            [int(b.label) for b in truth])
            for rec, truth in parts])
        csv_path = tmp_path / f"{stem}.csv"
        save_dataset(ds, csv_path)

        train = standardize(ds)
        model = train_method("svm-rbf", train, seed=0)
        model_path = tmp_path / f"{stem}.model.json"
        save_model(model, model_path)

        report_path = tmp_path / f"{stem}.report.json"
        report_path.write_bytes(emit_report([evaluate(model, train)]))
        return {p.name.split(".", 1)[1]: p.read_bytes()
                for p in (iq_path, truth_path, csv_path, model_path,
                          report_path)}

    first = artifact_bytes("a")
    second = artifact_bytes("b")
    mismatched = [kind for kind in first if first[kind] != second[kind]]
    ok = not mismatched
    criterion(7, ok, "iq, truth, dataset, model and report bytes identical "
                     "across reruns" if ok
                     else f"mismatched artifacts: {mismatched}")
