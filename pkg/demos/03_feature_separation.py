"""Why three numbers are enough to tell these protocols apart.

Builds a small labeled corpus (synthesize, detect blind, extract, label
by truth overlap) and prints per-class feature statistics.  Frame widths
and gaps overlap across protocols by design; the peak-to-average power
ratio splits the multicarrier signals from the constant-envelope one.
"""

import numpy as np

from iqclassify import ProtocolLabel, build_feature_corpus

NAMES = {ProtocolLabel.WIFI: "wifi", ProtocolLabel.WIFI_BEACON: "beacon",
         ProtocolLabel.BLUETOOTH: "bluetooth"}


def main():
    ds = build_feature_corpus(seed=0, frames_per_class=150)
    print(f"corpus: {len(ds)} rows, features {ds.feature_names}")

    for label, name in NAMES.items():
        rows = ds.features[ds.labels == int(label)]
        print(f"\n{name} ({len(rows)} frames)")
        for j, feat in enumerate(ds.feature_names):
            col = rows[:, j]
            print(f"  {feat:16s} min {col.min():9.2f}  median "
                  f"{np.median(col):9.2f}  max {col.max():9.2f}")

    wifi = ds.features[ds.labels == int(ProtocolLabel.WIFI), 2]
    bt = ds.features[ds.labels == int(ProtocolLabel.BLUETOOTH), 2]
    n = min(len(wifi), len(bt))
    frac = np.mean(wifi[:n] > bt[:n])
    print(f"\npaired PAPR comparison: wifi above bluetooth in "
          f"{100 * frac:.1f}% of {n} pairs")
    print("width and gap alone leave the protocols entangled; "
          "PAPR is the separator")


if __name__ == "__main__":
    main()
