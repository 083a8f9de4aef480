"""
Reference weighting and gradient-combination methods.

Every method reads the same embedding-space quantities GraP reads: the
``(K, D)`` gradient matrix, per-loss gradient norms or per-loss values.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from grapApp.errors import ContractViolation, NonFiniteError

logger = logging.getLogger(__name__)

MGDA_MAX_ITER = 250
MGDA_GAP_TOL = 1e-8


def _min_norm_pair(m11: float, m12: float, m22: float) -> float:
    """Weight on the first vector of the min-norm point on a segment (closed form)."""
    denom = m11 - 2.0 * m12 + m22
    if denom <= 0.0:
        return 0.5
    return float(np.clip((m22 - m12) / denom, 0.0, 1.0))


def mgda_weights(
    G, max_iter: int = MGDA_MAX_ITER, gap_tol: float = MGDA_GAP_TOL
) -> np.ndarray:
    """
    Min-norm point of the convex hull of the rows of ``G``.

    Away-step Frank-Wolfe over the probability simplex with exact line
    search, started from the uniform point; K=2 uses the closed form. Ties (e.g. identical
    rows) resolve to the uniform vector.
    """
    G = np.asarray(G, dtype=np.float64)
    if G.ndim != 2 or G.shape[0] < 1:
        raise ContractViolation(f"mgda needs a (K, D) matrix, got {G.shape}")
    if not np.all(np.isfinite(G)):
        raise NonFiniteError("non-finite gradients passed to mgda")
    K = G.shape[0]
    if K == 1:
        return np.ones(1)

    M = G @ G.T
    if K == 2:
        gamma = _min_norm_pair(M[0, 0], M[0, 1], M[1, 1])
        return np.array([gamma, 1.0 - gamma])

    w = np.full(K, 1.0 / K)
    for _ in range(max_iter):
        grad = M @ w
        wg = float(grad @ w)
        t = int(np.argmin(grad))
        gap = wg - float(grad[t])
        if gap <= gap_tol:
            break
        support = np.flatnonzero(w > 0.0)
        a = int(support[np.argmax(grad[support])])
        away_gap = float(grad[a]) - wg
        if gap >= away_gap or w[a] >= 1.0:
            # toward vertex t
            d = -w
            d[t] += 1.0
            max_step = 1.0
            slope, curvature = -gap, wg - 2.0 * float(grad[t]) + float(M[t, t])
        else:
            # away from vertex a; the largest step drops it from the support
            d = w.copy()
            d[a] -= 1.0
            max_step = float(w[a] / (1.0 - w[a]))
            slope, curvature = -away_gap, wg - 2.0 * float(grad[a]) + float(M[a, a])
        if curvature <= 0.0:
            break
        gamma = min(-slope / curvature, max_step)
        w = w + gamma * d
        if gamma == max_step and max_step < 1.0:
            w[a] = 0.0
        w = np.maximum(w, 0.0)
    return w


def pcgrad_combine(G, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Gradient surgery: project away conflicting components, then sum.

    Rows are visited in a permutation drawn from ``rng`` (identity order
    without one). Each row is projected onto the normal plane of every other
    row it conflicts with, using the others' current, already projected,
    values. Pairs involving a zero-norm row are skipped.
    """
    projected = np.array(G, dtype=np.float64, copy=True)
    K = projected.shape[0]
    order = np.arange(K) if rng is None else rng.permutation(K)
    for i in order:
        for j in order:
            if i == j:
                continue
            g_j = projected[j]
            norm_sq = float(g_j @ g_j)
            if norm_sq == 0.0:
                continue
            dot = float(projected[i] @ g_j)
            if dot < 0.0:
                projected[i] = projected[i] - (dot / norm_sq) * g_j
    return projected.sum(axis=0)


@dataclass
class GradNormState:
    K: int
    alpha: float = 1.5
    weights: Optional[np.ndarray] = None
    initial_losses: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.weights is None:
            self.weights = np.ones(self.K)


def gradnorm_step(
    state: GradNormState, norms, losses, lr_w: float, floor: float = 1e-6
) -> np.ndarray:
    """
    One GradNorm update.

    Targets ``mean_k(w_k n_k) * r_k^alpha`` with ``r_k`` the relative inverse
    training rate; descends the L1 mismatch ``Σ |w_k n_k - target_k|`` with the
    target held constant, then renormalizes the weights to sum to K.
    """
    norms = np.asarray(norms, dtype=np.float64)
    losses = np.asarray(losses, dtype=np.float64)
    if state.initial_losses is None:
        state.initial_losses = losses.copy()

    ratios = losses / np.maximum(state.initial_losses, np.finfo(float).tiny)
    rel_rate = ratios / ratios.mean()
    weighted = state.weights * norms
    target = weighted.mean() * rel_rate**state.alpha

    grad = np.sign(weighted - target) * norms
    w = np.maximum(state.weights - lr_w * grad, floor)
    state.weights = w * state.K / w.sum()
    return state.weights


@dataclass
class DwaState:
    """Loss history for Dynamic Weight Averaging, one entry per window of steps."""

    K: int
    temperature: float = 2.0
    window: int = 50
    history: List[np.ndarray] = field(default_factory=list)
    _acc: Optional[np.ndarray] = None
    _count: int = 0

    def record(self, losses) -> None:
        losses = np.asarray(losses, dtype=np.float64)
        self._acc = losses.copy() if self._acc is None else self._acc + losses
        self._count += 1
        if self._count == self.window:
            self.history.append(self._acc / self._count)
            self.history = self.history[-2:]
            self._acc, self._count = None, 0


def dwa_weights(state: DwaState, T: Optional[float] = None) -> np.ndarray:
    """``K * softmax(r / T)`` with ``r_k = L_k(t-1) / L_k(t-2)``; uniform until two windows exist."""
    T = state.temperature if T is None else T
    if len(state.history) < 2:
        return np.ones(state.K)
    prev, prev2 = state.history[-1], state.history[-2]
    r = prev / np.maximum(prev2, np.finfo(float).tiny)
    logits = r / T
    e = np.exp(logits - logits.max())
    return state.K * e / e.sum()


def median_weights(trajectory, burn_in: float = 0.0) -> np.ndarray:
    """Coordinate-wise median of logged weight vectors after a burn-in fraction."""
    traj = np.asarray(trajectory, dtype=np.float64)
    if traj.ndim == 1:
        traj = traj.reshape(-1, 1)
    if traj.shape[0] == 0:
        raise ContractViolation("median_weights needs a nonempty trajectory")
    if not 0.0 <= burn_in < 1.0:
        raise ContractViolation(f"burn_in must be in [0, 1), got {burn_in}")
    start = min(int(np.floor(burn_in * traj.shape[0])), traj.shape[0] - 1)
    return np.median(traj[start:], axis=0)
