"""Batch-mean losses over head outputs and their gradients w.r.t. those outputs."""

from typing import Literal, Optional, Tuple

import numpy as np

from grapApp.errors import ContractViolation

LossKind = Literal["squared_error", "cross_entropy"]


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss_and_grad(
    kind: LossKind,
    outputs: np.ndarray,
    targets: np.ndarray,
    mask: Optional[np.ndarray] = None,
) -> Tuple[float, np.ndarray]:
    """
    Mean loss over the selected rows and its gradient w.r.t. ``outputs``.

    squared_error: ``1/(2n) * sum ||o - t||^2``.
    cross_entropy: ``-1/n * sum t . log_softmax(o)``; targets are class
    probabilities (one-hot for hard labels) and outputs are logits.
    Rows outside ``mask`` contribute exactly zero to value and gradient.
    """
    if outputs.shape != targets.shape:
        raise ContractViolation(
            f"outputs {outputs.shape} and targets {targets.shape} differ"
        )
    if mask is None:
        mask = np.ones(outputs.shape[0], dtype=bool)
    n = int(mask.sum())
    if n == 0:
        raise ContractViolation("loss over an empty row selection")
    weight = mask.astype(np.float64)[:, None] / n

    if kind == "squared_error":
        diff = outputs - targets
        value = 0.5 * float(np.sum(weight * diff * diff))
        grad = weight * diff
    elif kind == "cross_entropy":
        log_p = _log_softmax(outputs)
        value = -float(np.sum(weight * targets * log_p))
        probs = np.exp(log_p)
        grad = weight * (probs * targets.sum(axis=1, keepdims=True) - targets)
    else:
        raise ContractViolation(f"unknown loss kind {kind!r}")
    return value, grad


def loss_value(kind: LossKind, outputs, targets, mask=None) -> float:
    return loss_and_grad(kind, outputs, targets, mask)[0]
