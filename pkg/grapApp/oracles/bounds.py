"""Jacobian bounds between parameter- and embedding-space alignment, and grid argmax oracles."""

import itertools
from dataclasses import dataclass

import numpy as np

from grapApp.core import spectral_norm
from grapApp.errors import ContractViolation
from grapApp.tuner.grap import EPS_NORM, NormalizationMode, cosine

DEFAULT_SLACK = 1e-9
K2_ANGLES = 721
K3_SIMPLEX_STEPS = 50


@dataclass(frozen=True)
class BoundReport:
    sigma_max: float
    # ||wᵀG - g_down|| <= sigma_max * ||wᵀG̃ - g̃_down||
    mismatch_param: float
    mismatch_bound: float
    mismatch_holds: bool
    # (xᵀg̃_down)/||wᵀG|| >= (xᵀg̃_down)/(sigma_max ||x||) when xᵀg̃_down >= 0
    alignment: float
    normalized_param: float
    normalized_bound: float
    alignment_applicable: bool
    alignment_holds: bool

    @property
    def holds(self) -> bool:
        return self.mismatch_holds and self.alignment_holds


def bound_check(J, G_tilde, g_tilde_down, w, slack: float = DEFAULT_SLACK) -> BoundReport:
    """
    Checks both Jacobian bounds for one instance.

    ``J`` is the ``(D, P)`` Jacobian of the embedding w.r.t. parameters, so
    parameter-space gradients are ``g_k = Jᵀ g̃_k``. ``slack`` is relative to
    the larger side of each inequality (absolute below 1).
    """
    J = np.asarray(J, dtype=np.float64)
    G_tilde = np.asarray(G_tilde, dtype=np.float64)
    g_tilde_down = np.asarray(g_tilde_down, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if G_tilde.shape[1] != J.shape[0] or g_tilde_down.shape[0] != J.shape[0]:
        raise ContractViolation("embedding dimension of G̃, g̃_down and J must agree")

    sigma = spectral_norm(J)
    G = G_tilde @ J
    g_down = J.T @ g_tilde_down
    x = G_tilde.T @ w

    lhs1 = float(np.linalg.norm(w @ G - g_down))
    rhs1 = sigma * float(np.linalg.norm(x - g_tilde_down))
    holds1 = lhs1 <= rhs1 + slack * max(1.0, rhs1)

    alignment = float(x @ g_tilde_down)
    comp_param = float(np.linalg.norm(w @ G))
    comp_embed = float(np.linalg.norm(x))
    applicable = alignment >= 0.0 and comp_param > EPS_NORM and comp_embed > EPS_NORM
    lhs2 = alignment / comp_param if comp_param > EPS_NORM else float("nan")
    rhs2 = alignment / (sigma * comp_embed) if sigma * comp_embed > EPS_NORM else float("nan")
    holds2 = (not applicable) or lhs2 >= rhs2 - slack * max(1.0, abs(lhs2))

    return BoundReport(
        sigma_max=sigma,
        mismatch_param=lhs1,
        mismatch_bound=rhs1,
        mismatch_holds=bool(holds1),
        alignment=alignment,
        normalized_param=lhs2,
        normalized_bound=rhs2,
        alignment_applicable=bool(applicable),
        alignment_holds=bool(holds2),
    )


def _mode_value(w: np.ndarray, a: np.ndarray, G: np.ndarray, kind: str) -> float:
    if kind == "weight_sum":
        return float(w @ a / w.sum())
    if kind == "weight_norm":
        return float(w @ a / np.linalg.norm(w))
    if kind == "none":
        return float(w @ a)
    norm = np.linalg.norm(w @ G)
    return float(w @ a / norm) if norm > EPS_NORM else -np.inf


def _k2_candidates(kind: str, lo: float, hi: float, n: int) -> np.ndarray:
    if kind == "weight_sum":
        t = np.linspace(lo, hi, n)
        return np.stack([t, 1.0 - t], axis=1)
    angles = np.linspace(lo, hi, n)
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


def _simplex_grid(K: int, steps: int) -> np.ndarray:
    points = [
        c for c in itertools.product(range(steps + 1), repeat=K - 1) if sum(c) <= steps
    ]
    return np.array([[*c, steps - sum(c)] for c in points], dtype=np.float64) / steps


def grid_argmax_weights(
    G, g_down, mode: NormalizationMode, resolution: int = None, refine: int = 6
) -> np.ndarray:
    """
    Brute-force argmax of the alignment objective over nonnegative weights.

    K=2 searches ``resolution`` points of the simplex segment (weight_sum) or
    the quarter circle (other modes, one point per ray) and then zooms in
    ``refine`` times around the best point. K=3 searches a simplex grid with
    ``resolution`` steps per edge; each point stands for its ray and is
    rescaled per mode. K>3 is not supported.
    """
    G = np.asarray(G, dtype=np.float64)
    g_down = np.asarray(g_down, dtype=np.float64)
    K = G.shape[0]
    kind = mode.kind
    a = G @ g_down
    if K == 1:
        return np.ones(1)

    if K == 2:
        n = resolution or K2_ANGLES
        lo, hi = 0.0, (1.0 if kind == "weight_sum" else np.pi / 2)
        best = None
        for _ in range(refine + 1):
            cand = _k2_candidates(kind, lo, hi, n)
            values = np.array([_mode_value(w, a, G, kind) for w in cand])
            idx = int(np.argmax(values))
            best = cand[idx]
            step = (hi - lo) / (n - 1)
            center = lo + idx * step
            lo, hi = max(center - step, 0.0), min(center + step, 1.0 if kind == "weight_sum" else np.pi / 2)
        return np.maximum(best, 0.0)

    if K == 3:
        cand = _simplex_grid(3, resolution or K3_SIMPLEX_STEPS)
        if kind == "weight_norm":
            cand = cand / np.linalg.norm(cand, axis=1, keepdims=True)
        values = np.array([_mode_value(w, a, G, kind) for w in cand])
        return cand[int(np.argmax(values))]

    raise ContractViolation("grid oracles support K <= 3 only")


def best_cosine(G, g_down, mode: NormalizationMode, resolution: int = None) -> float:
    """Cosine between ``wᵀG`` and ``g_down`` at the grid argmax for ``mode``."""
    G = np.asarray(G, dtype=np.float64)
    w = grid_argmax_weights(G, g_down, mode, resolution)
    return cosine(w @ G, np.asarray(g_down, dtype=np.float64))
