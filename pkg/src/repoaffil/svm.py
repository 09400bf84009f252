"""Linear soft-margin SVM with Platt-calibrated probability outputs.

Training minimizes 0.5*||w||^2 + C * sum(hinge) by deterministic batch
subgradient descent (bias unregularized), then fits a sigmoid over
out-of-fold decision values so predictions are probabilities in (0, 1).
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import TrainingError

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class EmbeddingVector:
    """One repository's embedding, tagged with the producing model."""

    repo_id: str
    values: tuple[float, ...]
    model_tag: str

    def __post_init__(self) -> None:
        values = tuple(float(v) for v in self.values)
        if not values:
            raise ValueError("embedding must be non-empty")
        if not all(np.isfinite(values)):
            raise ValueError(f"embedding for {self.repo_id} contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return len(self.values)


def hinge_objective(
    w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, c: float
) -> float:
    """0.5*||w||^2 + C * sum(max(0, 1 - y*(Xw + b))); y in {-1, +1}."""
    margins = y * (X @ w + b)
    return 0.5 * float(w @ w) + c * float(np.maximum(0.0, 1.0 - margins).sum())


def hinge_gradient(
    w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, c: float
) -> tuple[np.ndarray, float]:
    """Subgradient of the training objective (zero contribution at kinks)."""
    margins = y * (X @ w + b)
    violating = margins < 1.0
    if violating.any():
        yv = y[violating]
        gw = w - c * (yv @ X[violating])
        gb = -c * float(yv.sum())
    else:
        gw = w.copy()
        gb = 0.0
    return gw, gb


def _fit_linear_svm(
    X: np.ndarray, y: np.ndarray, c: float, max_iter: int = 4000
) -> tuple[np.ndarray, float]:
    """Deterministic batch subgradient descent; returns the best iterate seen."""
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    best_w, best_b = w.copy(), b
    best_obj = hinge_objective(w, b, X, y, c)
    eta0 = 1.0 / (c * n)
    for t in range(max_iter):
        gw, gb = hinge_gradient(w, b, X, y, c)
        eta = eta0 / np.sqrt(t + 1.0)
        w = w - eta * gw
        b = b - eta * gb
        obj = hinge_objective(w, b, X, y, c)
        if obj < best_obj:
            best_obj = obj
            best_w, best_b = w.copy(), b
    return best_w, best_b


def fit_platt(decision_values: np.ndarray, labels01: np.ndarray) -> tuple[float, float]:
    """Fit sigmoid parameters (A, B) so that p = 1 / (1 + exp(-(A*f + B))).

    Uses smoothed targets against over-confidence on the training folds. A is
    bounded positive so that probability is strictly increasing in the
    decision value.
    """
    f = np.asarray(decision_values, dtype=float)
    y = np.asarray(labels01, dtype=float)
    n_pos = float(y.sum())
    n_neg = float(len(y) - n_pos)
    t_pos = (n_pos + 1.0) / (n_pos + 2.0)
    t_neg = 1.0 / (n_neg + 2.0)
    targets = np.where(y > 0.5, t_pos, t_neg)

    def nll_and_grad(theta: np.ndarray) -> tuple[float, np.ndarray]:
        a, b = theta
        z = a * f + b
        # log(1 + exp(-z)) and log(1 + exp(z)) evaluated stably
        log_p = -np.logaddexp(0.0, -z)
        log_1mp = -np.logaddexp(0.0, z)
        loss = -(targets * log_p + (1.0 - targets) * log_1mp).sum()
        p = np.exp(log_p)
        residual = p - targets
        return float(loss), np.array([float(residual @ f), float(residual.sum())])

    b0 = np.log((n_pos + 1.0) / (n_neg + 1.0))
    result = minimize(
        nll_and_grad,
        x0=np.array([1.0, b0]),
        jac=True,
        method="L-BFGS-B",
        bounds=[(1e-12, None), (None, None)],
    )
    a, b = result.x
    return float(a), float(b)


def _sigmoid(z: np.ndarray | float) -> np.ndarray | float:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


def _stratified_folds(
    labels01: np.ndarray, k: int, seed: int
) -> list[np.ndarray]:
    """Index folds with both classes spread across folds; deterministic."""
    rng = random.Random(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in (1, 0):
        idx = [i for i, y in enumerate(labels01) if y == cls]
        rng.shuffle(idx)
        for j, i in enumerate(idx):
            folds[j % k].append(i)
    return [np.array(sorted(f), dtype=int) for f in folds if len(f) > 0]


@dataclass(frozen=True)
class SvmModel:
    """Trained weights plus calibration; immutable after training."""

    weights: tuple[float, ...]
    bias: float
    calibration_a: float
    calibration_b: float
    model_tag: str
    training_manifest: dict

    @property
    def dim(self) -> int:
        return len(self.weights)

    def decision_value(self, vector: EmbeddingVector) -> float:
        if vector.dim != self.dim:
            raise ValueError(
                f"embedding dim {vector.dim} does not match model dim {self.dim}"
            )
        return float(np.dot(self.weights, vector.values) + self.bias)

    def predict_probability(self, vector: EmbeddingVector) -> float:
        z = self.calibration_a * self.decision_value(vector) + self.calibration_b
        return float(_sigmoid(z))

    def save(self, path: str | Path) -> None:
        doc = {
            "format_version": MODEL_FORMAT_VERSION,
            "weights": list(self.weights),
            "bias": self.bias,
            "calibration_a": self.calibration_a,
            "calibration_b": self.calibration_b,
            "model_tag": self.model_tag,
            "training_manifest": self.training_manifest,
        }
        Path(path).write_text(json.dumps(doc, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SvmModel":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        version = doc.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise TrainingError(
                f"model file {path} has format_version {version}, "
                f"expected {MODEL_FORMAT_VERSION}"
            )
        return cls(
            weights=tuple(doc["weights"]),
            bias=float(doc["bias"]),
            calibration_a=float(doc["calibration_a"]),
            calibration_b=float(doc["calibration_b"]),
            model_tag=str(doc["model_tag"]),
            training_manifest=dict(doc["training_manifest"]),
        )


def _data_hash(vectors: Sequence[EmbeddingVector], labels: Sequence[int]) -> str:
    digest = hashlib.sha256()
    for vec, label in zip(vectors, labels):
        digest.update(vec.repo_id.encode())
        digest.update(bytes([label]))
        digest.update(np.asarray(vec.values, dtype=np.float64).tobytes())
    return digest.hexdigest()


def train_svm(
    examples: Sequence[tuple[EmbeddingVector, int]],
    c: float = 1.0,
    seed: int = 0,
    max_iter: int = 4000,
    calibration_folds: int = 5,
) -> SvmModel:
    """Train the SVM plus its probability calibration on labeled embeddings.

    Examples are sorted by repo_id internally, so the result is independent of
    input ordering. Calibration fits on out-of-fold decision values (stratified
    folds, at most `calibration_folds`); with too few examples of a class for
    two folds it falls back to in-sample decision values.
    """
    if c <= 0:
        raise TrainingError(f"C must be positive, got {c}")
    if not examples:
        raise TrainingError("training set is empty")
    ordered = sorted(examples, key=lambda pair: pair[0].repo_id)
    vectors = [pair[0] for pair in ordered]
    labels = [int(pair[1]) for pair in ordered]
    if any(l not in (0, 1) for l in labels):
        raise TrainingError("labels must be 0 or 1")
    dims = {v.dim for v in vectors}
    if len(dims) != 1:
        raise TrainingError(f"inconsistent embedding dims in training set: {sorted(dims)}")
    tags = {v.model_tag for v in vectors}
    if len(tags) != 1:
        raise TrainingError(f"mixed embedding model tags in training set: {sorted(tags)}")
    n_pos = sum(labels)
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise TrainingError(
            f"need at least one example of each class, got {n_pos} positive / {n_neg} negative"
        )

    X = np.array([v.values for v in vectors], dtype=float)
    y01 = np.array(labels, dtype=int)
    y = np.where(y01 == 1, 1.0, -1.0)

    k = min(calibration_folds, n_pos, n_neg)
    if k >= 2:
        oof = np.zeros(len(y01), dtype=float)
        for fold in _stratified_folds(y01, k, seed):
            mask = np.ones(len(y01), dtype=bool)
            mask[fold] = False
            w_f, b_f = _fit_linear_svm(X[mask], y[mask], c, max_iter)
            oof[fold] = X[fold] @ w_f + b_f
        calib_scores = oof
    else:
        w_all, b_all = _fit_linear_svm(X, y, c, max_iter)
        calib_scores = X @ w_all + b_all

    w, b = _fit_linear_svm(X, y, c, max_iter)
    a_cal, b_cal = fit_platt(calib_scores, y01)

    manifest = {
        "n_positive": n_pos,
        "n_negative": n_neg,
        "c": c,
        "seed": seed,
        "max_iter": max_iter,
        "calibration_folds": k,
        "embedding_model_tag": vectors[0].model_tag,
        "dim": vectors[0].dim,
        "data_hash": _data_hash(vectors, labels),
        "training_repo_ids": [v.repo_id for v in vectors],
    }
    model_tag = f"svm:{vectors[0].model_tag}:{manifest['data_hash'][:8]}"
    return SvmModel(
        weights=tuple(float(x) for x in w),
        bias=float(b),
        calibration_a=a_cal,
        calibration_b=b_cal,
        model_tag=model_tag,
        training_manifest=manifest,
    )


def predict_svm(model: SvmModel, vector: EmbeddingVector) -> float:
    """Calibrated probability that the embedded repository is affiliated."""
    return model.predict_probability(vector)
