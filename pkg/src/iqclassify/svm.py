"""Soft-margin SVM from scratch: kernels, SMO dual training, one-vs-all.

No optimization library behind this: each binary problem is solved in the
dual with sequential minimal optimization over two-variable working sets,
pairing each KKT violator with the partner whose box-feasible step gains
the most dual objective.  Multi-class decisions take the argmax over three
one-vs-all binary models.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import LabeledDataset
from .signal_model import ProtocolLabel

KERNEL_KINDS = ("linear", "poly", "rbf")

# Alphas at or below this are treated as zero when collecting support
# vectors.  Deliberately far below the KKT tolerance: truncating the
# expansion by more than a sliver would move decision values and break the
# audit invariants the tolerance promises.
ALPHA_FLOOR = 1e-9


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and parameters.

    rbf_c is the denominator inside the RBF exponential.  Leave it None to
    have training resolve it to 2x the median pairwise squared distance of
    the training points.
    """

    kind: str = "rbf"
    poly_c: float = 1.0
    poly_p: int = 3
    rbf_c: float | None = None

    def validate(self) -> None:
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"kernel kind must be one of {KERNEL_KINDS}")
        if self.poly_c < 0:
            raise ValueError("poly_c must be >= 0")
        if self.poly_p < 1 or int(self.poly_p) != self.poly_p:
            raise ValueError("poly_p must be a positive integer")
        if self.rbf_c is not None and not self.rbf_c > 0:
            raise ValueError("rbf_c must be positive")


def median_pairwise_sq_dist(points: np.ndarray) -> float:
    """Median squared Euclidean distance over distinct point pairs."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 2:
        raise ValueError("need at least two points")
    sq = (pts * pts).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (pts @ pts.T)
    iu = np.triu_indices(len(pts), k=1)
    return float(np.median(np.maximum(d2[iu], 0.0)))


def resolve_kernel(spec: KernelSpec, points: np.ndarray) -> KernelSpec:
    """Fill in data-dependent kernel defaults (the RBF width)."""
    spec.validate()
    if spec.kind != "rbf" or spec.rbf_c is not None:
        return spec
    med = median_pairwise_sq_dist(points)
    if med <= 0:
        raise ValueError("median pairwise distance is zero; "
                         "rbf_c must be set explicitly")
    return dataclasses.replace(spec, rbf_c=2.0 * med)


def kernel_eval(spec: KernelSpec, a, b) -> float:
    """Evaluate the kernel on a single pair of equal-length points."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if spec.kind == "linear":
        return float(a @ b)
    if spec.kind == "poly":
        return float((a @ b + spec.poly_c) ** spec.poly_p)
    if spec.kind == "rbf":
        if spec.rbf_c is None:
            raise ValueError("rbf_c unresolved; call resolve_kernel first")
        diff = a - b
        return float(math.exp(-(diff @ diff) / spec.rbf_c))
    raise ValueError(f"unknown kernel kind {spec.kind!r}")


def kernel_matrix(spec: KernelSpec, A, B) -> np.ndarray:
    """Kernel values for every row of A against every row of B."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if spec.kind == "linear":
        return A @ B.T
    if spec.kind == "poly":
        return (A @ B.T + spec.poly_c) ** spec.poly_p
    if spec.kind == "rbf":
        if spec.rbf_c is None:
            raise ValueError("rbf_c unresolved; call resolve_kernel first")
        d2 = ((A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :]
              - 2.0 * (A @ B.T))
        return np.exp(-np.maximum(d2, 0.0) / spec.rbf_c)
    raise ValueError(f"unknown kernel kind {spec.kind!r}")


@dataclass
class BinarySvmModel:
    """One trained binary classifier in support-vector expansion form.

    coeffs[i] is alpha_i * y_i for support vector i, so the decision value
    is sum(coeffs * k(sv, x)) + bias.
    """

    support_vectors: np.ndarray
    coeffs: np.ndarray
    bias: float
    kernel: KernelSpec
    c_reg: float
    converged: bool
    n_sweeps: int
    support_indices: np.ndarray

    def __post_init__(self):
        if len(self.support_vectors) == 0:
            raise ValueError("model must keep at least one support vector")
        if np.max(np.abs(self.coeffs)) > self.c_reg * (1 + 1e-9):
            raise ValueError("coefficients exceed the box constraint")


def decision_value(model: BinarySvmModel, x) -> float:
    """Binary decision value for one standardized point."""
    k = kernel_matrix(model.kernel, np.atleast_2d(x), model.support_vectors)
    return float(k[0] @ model.coeffs + model.bias)


def decision_values(model: BinarySvmModel, X) -> np.ndarray:
    k = kernel_matrix(model.kernel, X, model.support_vectors)
    return k @ model.coeffs + model.bias


def train_binary(rows, targets, spec: KernelSpec, c_reg: float = 10.0,
                 tol: float = 1e-3,
                 max_passes: int = 4000) -> BinarySvmModel:
    """Solve one binary soft-margin problem with pairwise (SMO) ascent.

    Sweeps all points, fixing each KKT violator against the partner whose
    box-feasible step yields the largest dual objective gain.  Sweeps stop
    when a full KKT scan comes back clean, when no pair admits progress,
    or when the budget runs out.  Internally works at tol/2, so a clean
    scan still guarantees tol after the bias is recomputed from the free
    support vectors; runs that stop for either other reason get a final
    KKT audit of the returned model, and `converged` reports that.
    Training is deterministic.

    Args:
        rows: standardized training points, one per row.
        targets: +1/-1 per row; both values must appear.
        spec: kernel; an unresolved RBF width is fitted on rows.
        c_reg: box constraint C.
        tol: KKT tolerance of the returned model.
        max_passes: sweep budget.

    Returns:
        BinarySvmModel; `converged` is True when the model satisfies the
        KKT conditions at tol on its training set.
    """
    X = np.asarray(rows, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("rows must be 2-D and aligned with targets")
    if len(X) < 2:
        raise ValueError("need at least two training rows")
    if not (np.all(np.abs(y) == 1.0) and (y > 0).any() and (y < 0).any()):
        raise ValueError("targets must contain both +1 and -1")
    if c_reg <= 0:
        raise ValueError("c_reg must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_passes < 1:
        raise ValueError("max_passes must be >= 1")

    spec = resolve_kernel(spec, X)
    n = len(X)
    K = kernel_matrix(spec, X, X)
    Kdiag = np.diagonal(K).copy()
    alphas = np.zeros(n)
    b = 0.0
    F = np.zeros(n)  # sum_j alpha_j y_j K[j, i], kept incrementally
    tol_work = tol / 2.0
    C = float(c_reg)

    def try_pair(i: int, j: int) -> bool:
        nonlocal b, F
        E_i = F[i] + b - y[i]
        E_j = F[j] + b - y[j]
        ai_old, aj_old = alphas[i], alphas[j]
        if y[i] != y[j]:
            L = max(0.0, aj_old - ai_old)
            H = min(C, C + aj_old - ai_old)
        else:
            L = max(0.0, ai_old + aj_old - C)
            H = min(C, ai_old + aj_old)
        if L >= H:
            return False
        # eta is the negated curvature along the pair direction; >= 0 only
        # for kernel-degenerate pairs, which admit no progress anyway.
        eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
        if eta >= 0:
            return False
        aj = aj_old - y[j] * (E_i - E_j) / eta
        aj = min(max(aj, L), H)
        if abs(aj - aj_old) < 1e-8:
            return False
        ai = ai_old + y[i] * y[j] * (aj_old - aj)
        d_i = ai - ai_old
        d_j = aj - aj_old
        b1 = b - E_i - y[i] * d_i * K[i, i] - y[j] * d_j * K[i, j]
        b2 = b - E_j - y[i] * d_i * K[i, j] - y[j] * d_j * K[j, j]
        if 0.0 < ai < C:
            b = b1
        elif 0.0 < aj < C:
            b = b2
        else:
            b = (b1 + b2) / 2.0
        F += (y[i] * d_i) * K[:, i] + (y[j] * d_j) * K[:, j]
        alphas[i] = ai
        alphas[j] = aj
        return True

    def best_partner(i: int, E: np.ndarray) -> int | None:
        # Dual objective gain of the best box-feasible step of every
        # candidate pair (i, j), mirroring try_pair's curvature, box, and
        # minimum-step rules exactly.  None certifies that no partner
        # admits progress for this violator.
        g = y * (E[i] - E)  # gradient along each pair direction
        eta_v = 2.0 * K[i] - K[i, i] - Kdiag
        same = y == y[i]
        lo = np.where(same, np.maximum(0.0, alphas[i] + alphas - C),
                      np.maximum(0.0, alphas - alphas[i]))
        hi = np.where(same, np.minimum(C, alphas[i] + alphas),
                      np.minimum(C, C + alphas - alphas[i]))
        ok = (eta_v < 0) & (lo < hi)
        ok[i] = False
        if not ok.any():
            return None
        step = np.zeros(n)
        np.divide(g, -eta_v, out=step, where=ok)
        step = np.where(ok, np.clip(alphas + step, lo, hi) - alphas, 0.0)
        ok &= np.abs(step) >= 1e-8
        gain = np.where(ok, g * step + 0.5 * eta_v * step * step, -1.0)
        j = int(np.argmax(gain))
        return j if gain[j] > 0.0 else None

    def scan_violators(above: int = -1) -> np.ndarray:
        # Indices past `above` that violate KKT at tol_work right now.
        r = y * (F + b - y)
        mask = (((r < -tol_work) & (alphas < C))
                | ((r > tol_work) & (alphas > 0)))
        if above >= 0:
            mask[:above + 1] = False
        return np.flatnonzero(mask)

    converged = False
    sweeps = 0
    for _ in range(max_passes):
        sweeps += 1
        changed = 0
        violators = 0
        # Walk the points in index order, always judging against the
        # current alphas: the violator list is refreshed after every
        # successful pair update, and the state is unchanged in between.
        pending = scan_violators()
        ptr = 0
        while ptr < pending.size:
            i = int(pending[ptr])
            ptr += 1
            violators += 1
            # A violator only survives the sweep if no partner at all
            # admits progress, so a clean sweep certifies pairwise
            # optimality, not partner-selection luck.
            j = best_partner(i, F + b - y)
            if j is not None and try_pair(i, j):
                changed += 1
                pending = scan_violators(above=i)
                ptr = 0
        if violators == 0:
            converged = True
            break
        if changed == 0:
            # Violators remain but no pair moves: stalled, not optimal
            # at tol_work; the final audit below decides against tol.
            break

    keep = alphas > ALPHA_FLOOR
    if not keep.any():
        raise ValueError("training collapsed: no support vectors "
                         "(degenerate or contradictory data)")
    coeffs = alphas[keep] * y[keep]
    sv = X[keep].copy()
    f_no_b = kernel_matrix(spec, X, sv) @ coeffs

    # Bias from the free support vectors; fall back to all of them.
    guard = 1e-8 * max(1.0, C)
    free = keep & (alphas > guard) & (alphas < C - guard)
    ref = free if free.any() else keep
    bias = float(np.mean(y[ref] - f_no_b[ref]))

    if not converged:
        # Stalled or out of budget at tol/2; the model may still meet the
        # advertised tolerance.  Audit the returned expansion at tol and
        # report that, so converged means what callers act on.
        margins = y * (f_no_b + bias)
        low = alphas <= tol
        high = ~low & (alphas >= C - tol)
        mid = ~(low | high)
        bad = ((low & (margins < 1.0 - tol))
               | (high & (margins > 1.0 + tol))
               | (mid & (np.abs(margins - 1.0) > tol)))
        converged = not bad.any() and abs(float(coeffs.sum())) <= tol

    return BinarySvmModel(
        support_vectors=sv,
        coeffs=coeffs,
        bias=bias,
        kernel=spec,
        c_reg=C,
        converged=converged,
        n_sweeps=sweeps,
        support_indices=np.flatnonzero(keep),
    )


@dataclass
class MultiClassSvmModel:
    """Three one-vs-all binary models sharing a kernel and feature scaling."""

    class_models: tuple
    kernel: KernelSpec
    feature_names: tuple
    standardization: tuple
    c_reg: float
    tol: float
    max_passes: int
    seed: int
    n_train: int

    def __post_init__(self):
        if len(self.class_models) != len(ProtocolLabel):
            raise ValueError("expected one binary model per protocol label")

    @property
    def method(self) -> str:
        return f"svm-{self.kernel.kind}"


def train_one_vs_all(ds: LabeledDataset, spec: KernelSpec,
                     c_reg: float = 10.0, tol: float = 1e-3,
                     max_passes: int = 4000,
                     seed: int = 0) -> MultiClassSvmModel:
    """Train one binary model per protocol label on a standardized dataset.

    Args:
        ds: standardized dataset carrying its (mean, std) stats; all three
            labels must be present.
        spec: shared kernel spec; RBF width resolved once on all rows.
        c_reg, tol, max_passes: forwarded to each binary problem.
        seed: recorded on the model; training itself is deterministic.
    """
    if ds.standardization is None:
        raise ValueError("dataset must be standardized before training")
    present = set(int(v) for v in np.unique(ds.labels))
    needed = {int(l) for l in ProtocolLabel}
    if not needed <= present:
        missing = sorted(needed - present)
        raise ValueError(f"missing training class(es): {missing}")

    spec = resolve_kernel(spec, ds.features)
    models = []
    for label in ProtocolLabel:
        targets = np.where(ds.labels == int(label), 1.0, -1.0)
        models.append(train_binary(ds.features, targets, spec, c_reg, tol,
                                   max_passes))
    return MultiClassSvmModel(
        class_models=tuple(models),
        kernel=spec,
        feature_names=ds.feature_names,
        standardization=ds.standardization,
        c_reg=float(c_reg),
        tol=float(tol),
        max_passes=int(max_passes),
        seed=int(seed),
        n_train=len(ds),
    )


def predict(model: MultiClassSvmModel, x) -> ProtocolLabel:
    """Argmax over the three binary decision values; ties take the
    smallest label code."""
    values = [decision_value(m, x) for m in model.class_models]
    return ProtocolLabel(int(np.argmax(values)))


def predict_many(model: MultiClassSvmModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    stacked = np.stack([decision_values(m, X) for m in model.class_models],
                       axis=1)
    return np.argmax(stacked, axis=1).astype(np.int64)


# ---------------------------------------------------------------------------
# JSON serialization

def _kernel_to_dict(spec: KernelSpec) -> dict:
    return {
        "kind": spec.kind,
        "poly_c": float(spec.poly_c),
        "poly_p": int(spec.poly_p),
        "rbf_c": None if spec.rbf_c is None else float(spec.rbf_c),
    }


def _kernel_from_dict(d: dict) -> KernelSpec:
    return KernelSpec(kind=d["kind"], poly_c=float(d["poly_c"]),
                      poly_p=int(d["poly_p"]),
                      rbf_c=None if d["rbf_c"] is None else float(d["rbf_c"]))


def svm_to_dict(model: MultiClassSvmModel) -> dict:
    mean, std = model.standardization
    return {
        "model_type": "svm",
        "kernel": _kernel_to_dict(model.kernel),
        "c_reg": float(model.c_reg),
        "tol": float(model.tol),
        "max_passes": int(model.max_passes),
        "seed": int(model.seed),
        "n_train": int(model.n_train),
        "feature_names": list(model.feature_names),
        "standardization": {
            "mean": [float(v) for v in mean],
            "std": [float(v) for v in std],
        },
        "classes": [
            {
                "label": int(label),
                "support_vectors": [[float(v) for v in row]
                                    for row in m.support_vectors],
                "coeffs": [float(v) for v in m.coeffs],
                "bias": float(m.bias),
                "converged": bool(m.converged),
                "n_sweeps": int(m.n_sweeps),
                "support_indices": [int(i) for i in m.support_indices],
            }
            for label, m in zip(ProtocolLabel, model.class_models)
        ],
    }


def svm_from_dict(d: dict) -> MultiClassSvmModel:
    if d.get("model_type") != "svm":
        raise ValueError("not an svm model payload")
    spec = _kernel_from_dict(d["kernel"])
    models = []
    for entry in d["classes"]:
        models.append(BinarySvmModel(
            support_vectors=np.asarray(entry["support_vectors"],
                                       dtype=np.float64),
            coeffs=np.asarray(entry["coeffs"], dtype=np.float64),
            bias=float(entry["bias"]),
            kernel=spec,
            c_reg=float(d["c_reg"]),
            converged=bool(entry["converged"]),
            n_sweeps=int(entry["n_sweeps"]),
            support_indices=np.asarray(entry["support_indices"],
                                       dtype=np.int64),
        ))
    stats = (np.asarray(d["standardization"]["mean"], dtype=np.float64),
             np.asarray(d["standardization"]["std"], dtype=np.float64))
    return MultiClassSvmModel(
        class_models=tuple(models),
        kernel=spec,
        feature_names=tuple(d["feature_names"]),
        standardization=stats,
        c_reg=float(d["c_reg"]),
        tol=float(d["tol"]),
        max_passes=int(d["max_passes"]),
        seed=int(d["seed"]),
        n_train=int(d["n_train"]),
    )


def save_svm(model: MultiClassSvmModel, path) -> None:
    Path(path).write_text(
        json.dumps(svm_to_dict(model), indent=2, sort_keys=True) + "\n")


def load_svm(path) -> MultiClassSvmModel:
    return svm_from_dict(json.loads(Path(path).read_text()))
