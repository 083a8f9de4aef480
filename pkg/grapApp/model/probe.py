"""
Linear probes on frozen features.

A probe is a ridge least-squares fit of the downstream targets on
``[features, 1]``. For classification the targets are one-hot rows and the
prediction is the argmax; for regression the metric is RMSE.
"""

from typing import Tuple

import numpy as np

from grapApp.core import as_mat, mlp_forward
from grapApp.errors import ContractViolation

from .composite import Batch, CompositeModel
from .losses import LossKind

PROBE_RIDGE = 1e-6


def _design(features: np.ndarray) -> np.ndarray:
    return np.hstack([features, np.ones((features.shape[0], 1))])


def fit_linear_probe(features, targets, ridge: float = PROBE_RIDGE) -> np.ndarray:
    """Coefficients ``(F + 1, out)``; the last row is the intercept."""
    features = as_mat(features, "probe features")
    targets = as_mat(targets, "probe targets")
    if features.shape[0] != targets.shape[0]:
        raise ContractViolation(
            f"{features.shape[0]} feature rows for {targets.shape[0]} targets"
        )
    A = _design(features)
    gram = A.T @ A + ridge * features.shape[0] * np.eye(A.shape[1])
    return np.linalg.solve(gram, A.T @ targets)


def probe_metric(kind: LossKind, coef: np.ndarray, features, targets) -> float:
    """Accuracy for ``cross_entropy`` targets, RMSE otherwise."""
    pred = _design(as_mat(features, "probe features")) @ coef
    targets = as_mat(targets, "probe targets")
    if kind == "cross_entropy":
        return float(np.mean(pred.argmax(axis=1) == targets.argmax(axis=1)))
    return float(np.sqrt(np.mean((pred - targets) ** 2)))


def evaluate_probe(model: CompositeModel, train: Batch, val: Batch) -> Tuple[float, np.ndarray]:
    """
    Fits a probe on the frozen embeddings of every ``train`` row and scores it on ``val``.

    Every training label is used, whatever the labeled fraction the run
    trained with; the probe measures the representation, not the online head.
    """
    z_train, _ = mlp_forward(model.backbone, train.inputs)
    z_val, _ = mlp_forward(model.backbone, val.inputs)
    coef = fit_linear_probe(z_train, train.labels)
    return probe_metric(model.downstream_loss_kind, coef, z_val, val.labels), coef
