"""
Loss-weight updates by gradient alignment.

All objective and gradient functions are pure. The only mutable object is
the :class:`WeightVector`, and ``weight_step`` returns a new one.

Shapes: ``G`` is ``(K, D)`` with one gradient per row, ``g_down`` is ``(D,)``.
In the training loop these are the flattened embedding-space gradients.
"""

import logging
from dataclasses import dataclass, replace
from typing import Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from grapApp.errors import ContractViolation, DegenerateNormError

logger = logging.getLogger(__name__)

EPS_NORM = 1e-12

NormalizationKind = Literal["none", "weight_sum", "weight_norm", "composite_grad"]


class NormalizationMode(BaseModel):
    """Which normalization the weight objective uses, and whether its normalizer is differentiated."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: NormalizationKind = "composite_grad"
    detach_norm: bool = False


@dataclass(frozen=True)
class WeightVector:
    w: np.ndarray
    lr_w: float
    floor: float = 0.0
    degenerate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=np.float64).reshape(-1))
        if self.lr_w < 0:
            raise ContractViolation(f"lr_w must be >= 0, got {self.lr_w}")
        if self.floor < 0:
            raise ContractViolation(f"floor must be >= 0, got {self.floor}")

    @classmethod
    def ones(cls, K: int, lr_w: float, floor: float = 0.0) -> "WeightVector":
        return cls(np.ones(K), lr_w=lr_w, floor=floor)

    @property
    def K(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class StepDiagnostics:
    w_bar: np.ndarray  # weights used to form the backbone cotangent (pre-update)
    gradient: np.ndarray
    objective: float
    cosine: float
    comp_norm: float
    degenerate: bool = False
    reset: bool = False


def _check(G: np.ndarray, g_down: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    G = np.asarray(G, dtype=np.float64)
    g_down = np.asarray(g_down, dtype=np.float64).reshape(-1)
    if G.ndim != 2 or G.shape[1] != g_down.shape[0]:
        raise ContractViolation(
            f"G has shape {G.shape} but g_down has length {g_down.shape[0]}"
        )
    return G, g_down


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < EPS_NORM or nb < EPS_NORM:
        return 0.0
    return float(a @ b / (na * nb))


def hypergradient(G, g_down, lr: float) -> np.ndarray:
    """``d L_down / d w_k = -lr * g_downᵀ g_k`` for one SGD step."""
    G, g_down = _check(G, g_down)
    if lr <= 0:
        raise ContractViolation(f"lr must be > 0, got {lr}")
    return -lr * (G @ g_down)


def normalized_weights(w, G) -> np.ndarray:
    """``w / ||wᵀG||``, so that the composite gradient has unit norm."""
    w = np.asarray(w, dtype=np.float64)
    norm = np.linalg.norm(w @ np.asarray(G, dtype=np.float64))
    if norm < EPS_NORM:
        raise DegenerateNormError(f"composite gradient norm {norm:.3e} below {EPS_NORM}")
    return w / norm


def scaled_weights(w, G, kind: NormalizationKind) -> np.ndarray:
    """The weights a normalization mode actually applies (``w`` itself for ``none``)."""
    w = np.asarray(w, dtype=np.float64)
    if kind == "none":
        return w
    if kind == "weight_sum":
        total = w.sum()
        if total < EPS_NORM:
            raise DegenerateNormError("weight sum is zero")
        return w / total
    if kind == "weight_norm":
        norm = np.linalg.norm(w)
        if norm < EPS_NORM:
            raise DegenerateNormError("weight norm is zero")
        return w / norm
    return normalized_weights(w, G)


def alignment_objective(w, G, g_down, mode: NormalizationMode) -> float:
    G, g_down = _check(G, g_down)
    w = np.asarray(w, dtype=np.float64)
    if np.any(w < 0):
        raise ContractViolation("alignment objective needs nonnegative weights")
    return float(scaled_weights(w, G, mode.kind) @ (G @ g_down))


def alignment_gradient(w, G, g_down, mode: NormalizationMode) -> np.ndarray:
    """
    Gradient of :func:`alignment_objective` w.r.t. ``w``.

    With ``detach_norm`` the normalizer (``Σw``, ``||w||`` or ``||Gᵀw||``) is
    held constant at its current value.
    """
    G, g_down = _check(G, g_down)
    w = np.asarray(w, dtype=np.float64)
    a = G @ g_down
    if mode.kind == "none":
        return a

    if mode.kind == "weight_sum":
        s = w.sum()
        if s < EPS_NORM:
            raise DegenerateNormError("weight sum is zero")
        if mode.detach_norm:
            return a / s
        return a / s - (w @ a) / s**2

    if mode.kind == "weight_norm":
        n = np.linalg.norm(w)
        if n < EPS_NORM:
            raise DegenerateNormError("weight norm is zero")
        if mode.detach_norm:
            return a / n
        return a / n - (w @ a) * w / n**3

    u = G.T @ w
    n = np.linalg.norm(u)
    if n < EPS_NORM:
        raise DegenerateNormError(f"composite gradient norm {n:.3e} below {EPS_NORM}")
    if mode.detach_norm:
        return a / n
    return G @ (g_down / n - (u @ g_down) * u / n**3)


def weight_step(
    weights: WeightVector, G, g_down, mode: NormalizationMode = NormalizationMode()
) -> Tuple[WeightVector, StepDiagnostics]:
    """
    One projected ascent step on the alignment objective.

    If the normalizer degenerates, the step falls back to the unnormalized
    objective ``wᵀG g_down`` and the returned vector carries ``degenerate=True``.
    Entries are clamped to ``floor``; an all-zero result is reset to uniform.
    """
    G, g_down = _check(G, g_down)
    if G.shape[0] != weights.K:
        raise ContractViolation(f"G has {G.shape[0]} rows for K={weights.K}")
    w = weights.w
    u = G.T @ w
    comp_norm = float(np.linalg.norm(u))

    degenerate = False
    try:
        gradient = alignment_gradient(w, G, g_down, mode)
        w_bar = scaled_weights(w, G, mode.kind)
    except DegenerateNormError as exc:
        logger.warning("degenerate normalization, using unnormalized ascent: %s", exc)
        degenerate = True
        gradient = G @ g_down
        w_bar = w.copy()
    objective = float(w_bar @ (G @ g_down))

    w_new = np.maximum(w + weights.lr_w * gradient, weights.floor)
    reset = False
    if not np.any(w_new > 0):
        logger.warning("all loss weights clamped to zero, resetting to uniform")
        w_new = np.full(weights.K, max(1.0 / weights.K, weights.floor))
        reset = True

    diagnostics = StepDiagnostics(
        w_bar=w_bar,
        gradient=gradient,
        objective=objective,
        cosine=cosine(u, g_down),
        comp_norm=comp_norm,
        degenerate=degenerate,
        reset=reset,
    )
    return replace(weights, w=w_new, degenerate=degenerate or reset), diagnostics


def distance_objective(w, G, g_down) -> float:
    """``|| wᵀG / ||wᵀG|| - g_down ||²``, the distance form of the normalized objective."""
    G, g_down = _check(G, g_down)
    return float(np.sum((normalized_weights(w, G) @ G - g_down) ** 2))
