"""Command-line pipelines over the library: generate, detect, extract,
train, eval, sweep.

Stages communicate only through files (raw IQ plus JSON sidecars, JSON
interval lists, CSV datasets, JSON models and reports), so each one is
independently reproducible.  A TOML or JSON file passed with --config is
merged under explicit flags; nested "generator" and "detector" tables reach
every config field that has no dedicated flag.  Every file-writing run
drops an effective-config snapshot next to its primary output.

Exit codes: 0 success, 2 usage or validation error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

try:
    import tomllib
except ImportError:  # 3.10 fallback
    import tomli as tomllib

import numpy as np

from .burst_detect import (DetectorConfig, detect_bursts, load_detections,
                           save_detections)
from .evaluation import (METHOD_NAMES, emit_report, evaluate, load_model,
                         run_clean_experiment, run_noise_study, save_model,
                         score_detections, split_train_test, train_method,
                         match_detections)
from .features import (extract_dataset, load_dataset, save_dataset,
                       standardize, stats_hash)
from .signal_model import (DEFAULT_SAMPLE_RATE_HZ, GeneratorConfig, Scenario,
                           add_awgn, generate, load_recording, load_truth,
                           save_recording, save_truth)

_SCENARIOS = tuple(s.value for s in Scenario)

_HYPER_DEFAULTS = {
    "c_reg": 10.0,
    "tol": 1e-3,
    "max_passes": 4000,
    "k": 10,
    "poly_c": 1.0,
    "poly_p": 3,
    "rbf_c": None,
}

_DETECTOR_FIELDS = tuple(
    f.name for f in dataclasses.fields(DetectorConfig))


def _load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file {p} does not exist")
    if p.suffix.lower() == ".json":
        data = json.loads(p.read_text())
    else:
        with open(p, "rb") as fh:
            data = tomllib.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{p}: config file must hold a table/object")
    return data


def _resolve(args, defaults: dict, file_cfg: dict, required=()) -> dict:
    """Effective options: explicit flags beat file values beat defaults."""
    known = set(defaults) | {"generator", "detector"}
    unknown = set(file_cfg) - known
    if unknown:
        raise ValueError(f"unknown config file keys: {sorted(unknown)}")
    out = {}
    for dest, default in defaults.items():
        val = getattr(args, dest, None)
        if val is None:
            val = file_cfg.get(dest, default)
        out[dest] = val
    for dest in required:
        if out[dest] is None:
            raise ValueError(f"--{dest.replace('_', '-')} is required")
    return out


def _generator_config(ns: dict, file_cfg: dict) -> GeneratorConfig:
    table = dict(file_cfg.get("generator", {}))
    valid = {f.name for f in dataclasses.fields(GeneratorConfig)}
    unknown = set(table) - valid
    if unknown:
        raise ValueError(f"unknown generator config keys: {sorted(unknown)}")
    for key, val in list(table.items()):
        if isinstance(val, list):
            table[key] = tuple(val)
    table["scenario"] = Scenario(ns["scenario"])
    table["duration_s"] = float(ns["duration"])
    table["seed"] = int(ns["seed"])
    if ns.get("amplitude") is not None:
        table["amplitude"] = float(ns["amplitude"])
    return GeneratorConfig(**table)


def _detector_config(args, file_cfg: dict) -> DetectorConfig:
    table = dict(file_cfg.get("detector", {}))
    unknown = set(table) - set(_DETECTOR_FIELDS)
    if unknown:
        raise ValueError(f"unknown detector config keys: {sorted(unknown)}")
    for name in _DETECTOR_FIELDS:
        val = getattr(args, name, None)
        if val is not None:
            table[name] = val
    cfg = DetectorConfig(**table)
    cfg.validate()
    return cfg


def _write_snapshot(primary_output, command: str, effective: dict,
                    extra: dict | None = None) -> None:
    payload = {"command": command, "effective": {}}
    for key, val in effective.items():
        if isinstance(val, float) and math.isinf(val):
            val = "inf"
        payload["effective"][key] = val
    if extra:
        payload.update(extra)
    path = Path(str(primary_output) + ".config.json")
    path.write_text(json.dumps(payload, indent=2, sort_keys=True,
                               default=str) + "\n")


def _truth_path_for(iq_path) -> Path:
    p = Path(iq_path)
    base = p.name[:-3] if p.name.endswith(".iq") else p.name
    return p.with_name(base + ".truth.json")


def _detections_path_for(iq_path) -> Path:
    p = Path(iq_path)
    base = p.name[:-3] if p.name.endswith(".iq") else p.name
    return p.with_name(base + ".detections.json")


def _parse_methods(text: str) -> list:
    methods = [tok.strip() for tok in text.split(",") if tok.strip()]
    for m in methods:
        if m not in METHOD_NAMES:
            raise ValueError(f"unknown method {m!r}; choose from "
                             f"{', '.join(METHOD_NAMES)}")
    if not methods:
        raise ValueError("no methods given")
    return methods


def _parse_snr_grid(text: str) -> list:
    grid = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        grid.append(math.inf if tok in ("inf", "+inf") else float(tok))
    if not grid:
        raise ValueError("empty SNR grid")
    return grid


def _hyper_from(ns: dict) -> dict:
    return {key: ns[key] for key in _HYPER_DEFAULTS}


# ---------------------------------------------------------------------------
# Subcommands

def cmd_generate(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    defaults = {
        "scenario": "mixed", "duration": 1.0, "seed": 0,
        "rate": DEFAULT_SAMPLE_RATE_HZ, "amplitude": None,
        "snr_db": None, "noise_seed": None, "out": None,
    }
    ns = _resolve(args, defaults, file_cfg, required=("out",))
    if ns["scenario"] not in _SCENARIOS:
        raise ValueError(f"scenario must be one of {_SCENARIOS}")
    cfg = _generator_config(ns, file_cfg)
    rec, truth = generate(cfg, float(ns["rate"]))
    if ns["snr_db"] is not None:
        noise_seed = ns["noise_seed"]
        if noise_seed is None:
            noise_seed = int(ns["seed"])
        rec = add_awgn(rec, float(ns["snr_db"]), int(noise_seed))

    out = Path(ns["out"])
    iq_path = out.with_name(out.name + ".iq")
    save_recording(rec, iq_path)
    save_truth(truth, out.with_name(out.name + ".truth.json"))
    snapshot_cfg = dataclasses.asdict(cfg)
    snapshot_cfg["scenario"] = cfg.scenario.value
    _write_snapshot(iq_path, "generate", ns,
                    {"generator_config": snapshot_cfg,
                     "sample_rate_hz": float(ns["rate"])})
    print(f"wrote {iq_path} ({rec.n_samples} samples, {len(truth)} bursts)")
    return 0


def cmd_detect(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    defaults = {"input": None, "out": None, "score_against": None}
    defaults.update({name: None for name in _DETECTOR_FIELDS})
    ns = _resolve(args, defaults, file_cfg, required=("input",))
    cfg = _detector_config(args, file_cfg)

    rec = load_recording(ns["input"])
    bursts = detect_bursts(rec, cfg)
    out = Path(ns["out"]) if ns["out"] else _detections_path_for(ns["input"])
    save_detections(bursts, out)
    _write_snapshot(out, "detect", ns,
                    {"detector_config": dataclasses.asdict(cfg)})
    print(f"wrote {out} ({len(bursts)} bursts)")
    if ns["score_against"]:
        truth = load_truth(ns["score_against"])
        score = score_detections(bursts, truth)
        print(f"recall={score['recall']:.6f} "
              f"precision={score['precision']:.6f} "
              f"matched={score['matched']}/{score['n_truth']}")
    return 0


def cmd_extract(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    defaults = {
        "input": None, "detections": None, "truth": None,
        "use_truth": None, "papr_unit": "db", "out": None,
    }
    ns = _resolve(args, defaults, file_cfg, required=("input", "out"))
    if ns["papr_unit"] not in ("db", "linear"):
        raise ValueError("papr-unit must be 'db' or 'linear'")

    rec = load_recording(ns["input"])
    truth = None
    truth_path = Path(ns["truth"]) if ns["truth"] else _truth_path_for(
        ns["input"])
    if truth_path.exists():
        truth = load_truth(truth_path)

    if ns["use_truth"]:
        if truth is None:
            raise FileNotFoundError(f"truth file {truth_path} not found")
        bursts = list(truth)
        labels = [int(b.label) for b in truth]
    else:
        det_path = (Path(ns["detections"]) if ns["detections"]
                    else _detections_path_for(ns["input"]))
        if not det_path.exists():
            raise FileNotFoundError(
                f"detections file {det_path} not found; run detect first "
                f"or pass --use-truth")
        bursts = load_detections(det_path)
        labels = (match_detections(bursts, truth) if truth is not None
                  else None)

    ds = extract_dataset(rec, bursts, labels,
                         papr_in_db=ns["papr_unit"] == "db")
    save_dataset(ds, ns["out"])
    _write_snapshot(ns["out"], "extract", ns)
    if len(ds) == 0:
        print("warning: zero usable frames; wrote an empty dataset",
              file=sys.stderr)
    print(f"wrote {ns['out']} ({len(ds)} rows)")
    return 0


def _load_training_data(paths):
    from .features import concat_datasets
    datasets = []
    for path in paths:
        ds = load_dataset(path)
        if ds.standardization is not None:
            raise ValueError(f"{path} is already standardized; training "
                             f"expects raw feature CSVs")
        datasets.append(ds)
    return concat_datasets(datasets)


def cmd_train(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    defaults = {
        "data": None, "method": None, "out": None,
        "test_fraction": 0.2, "split_seed": 0, "seed": 0,
    }
    defaults.update(_HYPER_DEFAULTS)
    ns = _resolve(args, defaults, file_cfg,
                  required=("data", "method", "out"))
    if ns["method"] not in METHOD_NAMES:
        raise ValueError(f"unknown method {ns['method']!r}; choose from "
                         f"{', '.join(METHOD_NAMES)}")
    paths = ns["data"] if isinstance(ns["data"], list) else [ns["data"]]
    full = _load_training_data(paths)

    frac = float(ns["test_fraction"])
    holdout_path = None
    if frac > 0:
        train_raw, test_raw = split_train_test(full, frac,
                                               int(ns["split_seed"]))
        holdout_path = Path(str(ns["out"]) + ".holdout.csv")
        save_dataset(test_raw, holdout_path)
    else:
        train_raw = full

    train_std = standardize(train_raw)
    model = train_method(ns["method"], train_std, seed=int(ns["seed"]),
                         **_hyper_from(ns))
    save_model(model, ns["out"])
    _write_snapshot(ns["out"], "train", ns)
    print(f"wrote {ns['out']} (method={ns['method']}, "
          f"n_train={model.n_train})")
    if holdout_path is not None:
        print(f"wrote {holdout_path} ({len(full) - model.n_train} rows)")
    if hasattr(model, "class_models"):
        flags = [m.converged for m in model.class_models]
        if not all(flags):
            print(f"warning: non-converged binary model(s): "
                  f"{[i for i, ok in enumerate(flags) if not ok]}",
                  file=sys.stderr)
    return 0


def _emit(reports, fmt: str, report_path, command: str, ns: dict) -> None:
    blob = emit_report(reports, fmt)
    if report_path:
        Path(report_path).write_bytes(blob)
        _write_snapshot(report_path, command, ns)
        print(f"wrote {report_path}")
    else:
        sys.stdout.write(blob.decode())


def cmd_eval(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    defaults = {
        "model": None, "data": None, "report": None, "format": "json",
        "method": None, "test_fraction": 0.2, "split_seed": 0, "seed": 0,
        "repeats": 1,
    }
    defaults.update(_HYPER_DEFAULTS)
    ns = _resolve(args, defaults, file_cfg)
    if ns["format"] not in ("json", "csv"):
        raise ValueError("format must be 'json' or 'csv'")

    if ns["model"] is None and ns["method"] is None:
        raise ValueError("pass --model to evaluate a trained model, or "
                         "--method to train-and-evaluate from scratch")

    if ns["model"] is not None:
        model = load_model(ns["model"])
        data_path = ns["data"]
        if isinstance(data_path, list):
            if len(data_path) != 1:
                raise ValueError("evaluating a saved model takes exactly one "
                                 "--data file")
            data_path = data_path[0]
        if data_path is None:
            candidate = Path(str(ns["model"]) + ".holdout.csv")
            if not candidate.exists():
                raise ValueError("--data is required (no holdout file found "
                                 "next to the model)")
            data_path = candidate
        ds = load_dataset(data_path)
        mean, std = model.standardization
        if ds.standardization is not None:
            ds_hash = stats_hash(ds.feature_names, *ds.standardization)
            model_hash = stats_hash(model.feature_names, mean, std)
            if ds_hash != model_hash:
                raise ValueError(
                    "dataset standardization stats do not match the model's "
                    "training stats; re-extract raw features or use the "
                    "matching dataset")
            test = ds
        else:
            test = standardize(ds.select_features(model.feature_names),
                               (mean, std))
        reports = [evaluate(model, test)]
    else:
        methods = _parse_methods(ns["method"])
        if ns["data"] is None:
            raise ValueError("--data is required with --method")
        paths = ns["data"] if isinstance(ns["data"], list) else [ns["data"]]
        full = _load_training_data(paths)
        reports = run_clean_experiment(
            full, methods, test_fraction=float(ns["test_fraction"]),
            split_seed=int(ns["split_seed"]), train_seed=int(ns["seed"]),
            repeats=int(ns["repeats"]), hyper=_hyper_from(ns))

    for r in reports:
        print(f"{r.method} [{r.features_used}] accuracy={r.accuracy:.6f} "
              f"n_test={r.n_test}")
    _emit(reports, ns["format"], ns["report"], "eval", ns)
    return 0


def cmd_sweep(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    defaults = {
        "train_data": None, "recording": None, "snr": "0,2,5,8,10,15,20,30",
        "methods": ",".join(METHOD_NAMES), "seed": 0, "min_overlap": 0.5,
        "out": None, "format": None,
    }
    defaults.update(_HYPER_DEFAULTS)
    defaults.update({name: None for name in _DETECTOR_FIELDS})
    ns = _resolve(args, defaults, file_cfg,
                  required=("train_data", "recording", "out"))
    methods = _parse_methods(ns["methods"])
    grid = _parse_snr_grid(ns["snr"])
    detector_cfg = _detector_config(args, file_cfg)

    paths = (ns["train_data"] if isinstance(ns["train_data"], list)
             else [ns["train_data"]])
    train_ds = _load_training_data(paths)

    rec_paths = (ns["recording"] if isinstance(ns["recording"], list)
                 else [ns["recording"]])
    recordings = []
    for rp in rec_paths:
        truth_path = _truth_path_for(rp)
        if not truth_path.exists():
            raise FileNotFoundError(f"no truth file {truth_path} for {rp}")
        recordings.append((load_recording(rp), load_truth(truth_path)))

    reports = run_noise_study(
        train_ds, methods, recordings, grid, seed=int(ns["seed"]),
        detector_cfg=detector_cfg, min_overlap=float(ns["min_overlap"]),
        hyper=_hyper_from(ns))

    fmt = ns["format"]
    if fmt is None:
        fmt = "csv" if str(ns["out"]).endswith(".csv") else "json"
    for r in reports:
        points = " ".join(
            f"{p.snr_db:g}dB:"
            + (f"{p.accuracy:.4f}" if p.accuracy is not None else "n/a")
            for p in r.per_snr)
        print(f"{r.method}: clean={r.accuracy:.4f} {points}")
    _emit(reports, fmt, ns["out"], "sweep", ns)
    return 0


# ---------------------------------------------------------------------------
# Parser

def _add_hyper_flags(sub) -> None:
    sub.add_argument("--c-reg", dest="c_reg", type=float)
    sub.add_argument("--tol", dest="tol", type=float)
    sub.add_argument("--max-passes", dest="max_passes", type=int)
    sub.add_argument("--k", dest="k", type=int)
    sub.add_argument("--poly-c", dest="poly_c", type=float)
    sub.add_argument("--poly-p", dest="poly_p", type=int)
    sub.add_argument("--rbf-c", dest="rbf_c", type=float)


def _add_detector_flags(sub) -> None:
    sub.add_argument("--alpha", dest="alpha", type=float)
    sub.add_argument("--window-rising", dest="window_len_rising", type=int)
    sub.add_argument("--window-falling", dest="window_len_falling", type=int)
    sub.add_argument("--gap-delta", dest="gap_delta", type=int)
    sub.add_argument("--smooth-len", dest="smooth_len", type=int)
    sub.add_argument("--floor-eps", dest="floor_eps", type=float)
    sub.add_argument("--min-burst-us", dest="min_burst_us", type=float)
    sub.add_argument("--min-gap-us", dest="min_gap_us", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iqclassify",
        description="Synthesize, detect, featurize and classify wireless "
                    "bursts in baseband IQ recordings.")
    subs = parser.add_subparsers(dest="command", required=True)

    g = subs.add_parser("generate", help="synthesize a labeled recording")
    g.add_argument("--scenario", choices=_SCENARIOS)
    g.add_argument("--duration", type=float, help="seconds")
    g.add_argument("--seed", type=int)
    g.add_argument("--rate", type=float, help="sample rate in Hz")
    g.add_argument("--amplitude", type=float)
    g.add_argument("--snr-db", dest="snr_db", type=float,
                   help="optionally add noise at this SNR")
    g.add_argument("--noise-seed", dest="noise_seed", type=int)
    g.add_argument("--out", help="output path prefix")
    g.add_argument("--config")
    g.set_defaults(func=cmd_generate)

    d = subs.add_parser("detect", help="find bursts in a recording")
    d.add_argument("--in", dest="input", help="IQ file path")
    d.add_argument("--out", help="detections JSON path")
    d.add_argument("--score-against", dest="score_against",
                   help="truth JSON to score recall/precision against")
    _add_detector_flags(d)
    d.add_argument("--config")
    d.set_defaults(func=cmd_detect)

    x = subs.add_parser("extract", help="turn bursts into feature rows")
    x.add_argument("--in", dest="input", help="IQ file path")
    x.add_argument("--detections", help="detections JSON path")
    x.add_argument("--truth", help="truth JSON path (for labels)")
    x.add_argument("--use-truth", dest="use_truth", action="store_const",
                   const=True, help="take intervals and labels from truth")
    x.add_argument("--papr-unit", dest="papr_unit", choices=("db", "linear"))
    x.add_argument("--out", help="dataset CSV path")
    x.add_argument("--config")
    x.set_defaults(func=cmd_extract)

    t = subs.add_parser("train", help="fit a classifier on feature CSVs")
    t.add_argument("--data", action="append", help="dataset CSV (repeatable)")
    t.add_argument("--method", choices=METHOD_NAMES)
    t.add_argument("--test-fraction", dest="test_fraction", type=float,
                   help="held-out fraction (0 trains on everything)")
    t.add_argument("--split-seed", dest="split_seed", type=int)
    t.add_argument("--seed", type=int, help="seed recorded in the model")
    _add_hyper_flags(t)
    t.add_argument("--out", help="model JSON path")
    t.add_argument("--config")
    t.set_defaults(func=cmd_train)

    e = subs.add_parser("eval", help="evaluate a model or run a split "
                                     "experiment")
    e.add_argument("--model", help="trained model JSON")
    e.add_argument("--data", action="append",
                   help="dataset CSV (repeatable in --method mode)")
    e.add_argument("--method",
                   help="comma list of methods for train-and-evaluate mode")
    e.add_argument("--test-fraction", dest="test_fraction", type=float)
    e.add_argument("--split-seed", dest="split_seed", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--repeats", type=int,
                   help="repeat the split/train/eval cycle")
    _add_hyper_flags(e)
    e.add_argument("--report", help="write the report here (else stdout)")
    e.add_argument("--format", choices=("json", "csv"))
    e.add_argument("--config")
    e.set_defaults(func=cmd_eval)

    s = subs.add_parser("sweep", help="clean-train/noisy-test SNR study")
    s.add_argument("--train-data", dest="train_data", action="append",
                   help="clean dataset CSV (repeatable)")
    s.add_argument("--recording", action="append",
                   help="clean test IQ file with sibling truth (repeatable)")
    s.add_argument("--snr", help="comma list of SNR dB values ('inf' allowed)")
    s.add_argument("--methods", help="comma list of methods")
    s.add_argument("--seed", type=int)
    s.add_argument("--min-overlap", dest="min_overlap", type=float)
    _add_hyper_flags(s)
    _add_detector_flags(s)
    s.add_argument("--out", help="report output path")
    s.add_argument("--format", choices=("json", "csv"))
    s.add_argument("--config")
    s.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
