"""K-nearest-neighbor classifier over standardized feature vectors.

Plain brute-force Euclidean search; the training set is stored, not fit.
All tie rules are explicit so prediction is a pure function: neighbor
distance ties resolve by ascending row index, vote ties by the smaller
summed neighbor distance and then the smaller label code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import LabeledDataset
from .signal_model import ProtocolLabel


@dataclass
class KnnModel:
    """Stored standardized training rows plus the neighbor count k."""

    points: np.ndarray
    labels: np.ndarray
    k: int
    feature_names: tuple
    standardization: tuple
    seed: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.points.ndim != 2 or len(self.points) != len(self.labels):
            raise ValueError("points must be 2-D and aligned with labels")
        if not 1 <= self.k <= len(self.points):
            raise ValueError("k must be in [1, number of training rows]")
        if self.standardization is None:
            raise ValueError("model requires standardization stats")

    @property
    def method(self) -> str:
        return "knn"

    @property
    def n_train(self) -> int:
        return len(self.points)


def train_knn(ds: LabeledDataset, k: int = 10, seed: int = 0) -> KnnModel:
    """Store a standardized dataset as a KNN model."""
    if ds.standardization is None:
        raise ValueError("dataset must be standardized before training")
    return KnnModel(ds.features.copy(), ds.labels.copy(), k,
                    ds.feature_names, ds.standardization, seed)


def euclidean_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(((a - b) ** 2).sum()))


def k_nearest(model: KnnModel, x) -> list:
    """The k nearest training rows to x.

    Returns:
        List of (row_index, distance), ascending by distance with ties
        broken by ascending row index.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.points.shape[1],):
        raise ValueError(f"query must have {model.points.shape[1]} features")
    d = np.sqrt(((model.points - x) ** 2).sum(axis=1))
    order = np.argsort(d, kind="stable")[:model.k]
    return [(int(i), float(d[i])) for i in order]


def _vote(model: KnnModel, neighbors) -> int:
    votes = {}
    dist_sum = {}
    for idx, dist in neighbors:
        label = int(model.labels[idx])
        votes[label] = votes.get(label, 0) + 1
        dist_sum[label] = dist_sum.get(label, 0.0) + dist
    best = max(votes.values())
    tied = [label for label, v in votes.items() if v == best]
    tied.sort(key=lambda label: (dist_sum[label], label))
    return tied[0]


def predict(model: KnnModel, x) -> ProtocolLabel:
    """Majority vote over the k nearest rows, with deterministic ties."""
    return ProtocolLabel(_vote(model, k_nearest(model, x)))


def predict_many(model: KnnModel, X) -> np.ndarray:
    """Vectorized distance pass over many queries; same rules as predict."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    out = np.empty(len(X), dtype=np.int64)
    # Chunk the distance matrix so memory stays modest for large batches.
    chunk = max(1, int(4e6) // max(1, len(model.points)))
    for lo in range(0, len(X), chunk):
        block = X[lo:lo + chunk]
        d2 = (((block[:, None, :] - model.points[None, :, :]) ** 2)
              .sum(axis=2))
        d = np.sqrt(d2)
        order = np.argsort(d, axis=1, kind="stable")[:, :model.k]
        for r in range(len(block)):
            neighbors = [(int(i), float(d[r, i])) for i in order[r]]
            out[lo + r] = _vote(model, neighbors)
    return out


def knn_to_dict(model: KnnModel) -> dict:
    mean, std = model.standardization
    return {
        "model_type": "knn",
        "k": int(model.k),
        "seed": int(model.seed),
        "n_train": int(model.n_train),
        "feature_names": list(model.feature_names),
        "standardization": {
            "mean": [float(v) for v in mean],
            "std": [float(v) for v in std],
        },
        "points": [[float(v) for v in row] for row in model.points],
        "labels": [int(v) for v in model.labels],
    }


def knn_from_dict(d: dict) -> KnnModel:
    if d.get("model_type") != "knn":
        raise ValueError("not a knn model payload")
    stats = (np.asarray(d["standardization"]["mean"], dtype=np.float64),
             np.asarray(d["standardization"]["std"], dtype=np.float64))
    return KnnModel(
        points=np.asarray(d["points"], dtype=np.float64),
        labels=np.asarray(d["labels"], dtype=np.int64),
        k=int(d["k"]),
        feature_names=tuple(d["feature_names"]),
        standardization=stats,
        seed=int(d.get("seed", 0)),
    )


def save_knn(model: KnnModel, path) -> None:
    Path(path).write_text(
        json.dumps(knn_to_dict(model), indent=2, sort_keys=True) + "\n")


def load_knn(path) -> KnnModel:
    return knn_from_dict(json.loads(Path(path).read_text()))
