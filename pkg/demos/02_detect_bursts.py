"""Blind burst detection on a clean capture, then under rising noise.

The detector never sees the truth record; we only use it afterwards to
score recall, precision, and worst-case boundary error.  The noisy pass
shows the detection count collapsing as weak bursts sink below the
energy-ratio threshold.
"""

from iqclassify import (DetectorConfig, GeneratorConfig, Scenario,
                        detect_bursts, generate)
from iqclassify.evaluation import score_detections
from iqclassify.signal_model import add_awgn


def main():
    cfg = GeneratorConfig(scenario=Scenario.BLUETOOTH, duration_s=0.05,
                          seed=3)
    rec, truth = generate(cfg, 5e6)
    det_cfg = DetectorConfig()
    print(f"capture: {rec.n_samples} samples, {len(truth)} truth bursts")
    print(f"detector: alpha={det_cfg.alpha}, windows "
          f"{det_cfg.window_len_rising}/{det_cfg.window_len_falling}, "
          f"gap delta {det_cfg.gap_delta}")

    detections = detect_bursts(rec, det_cfg)
    score = score_detections(detections, truth)
    print(f"\nclean: {score['matched']}/{score['n_truth']} matched, "
          f"recall={score['recall']:.3f} precision={score['precision']:.3f}")
    print(f"worst boundary error: start "
          f"{score['max_start_error_samples']} samples, end "
          f"{score['max_end_error_samples']} samples")

    print(f"\n{'snr_db':>7s} {'detected':>9s} {'recall':>7s}")
    for snr in (30, 20, 10, 5, 0):
        noisy = add_awgn(rec, snr_db=snr, seed=7)
        found = detect_bursts(noisy, det_cfg)
        s = score_detections(found, truth)
        print(f"{snr:7.0f} {len(found):9d} {s['recall']:7.3f}")
    print("\nweak bursts drop out first; the survivors keep clean edges")


if __name__ == "__main__":
    main()
