"""
Brute-force and closed-form hypergradient oracles.

``fd_hypergradient`` checks the one-step hypergradient on a real composite
model by finite differences. The quadratic-task functions give exact
multi-step sensitivities: with constant Hessians the sensitivity recursion
has no approximation error, so the gap to the first-order accumulation is
purely the higher-order transport term.
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from grapApp.errors import ContractViolation, NonFiniteError
from grapApp.model import Batch, CompositeModel, downstream_loss, full_param_grads


def _backbone_step(model: CompositeModel, G: np.ndarray, w: np.ndarray, lr: float):
    theta = model.backbone.flatten() - lr * (w @ G)
    return model.with_backbone_flat(theta)


def fd_hypergradient(
    model: CompositeModel, batch: Batch, w, lr: float, eps: float = 1e-5
) -> np.ndarray:
    """
    Central-difference derivative of ``L_down(θ')`` w.r.t. each ``w_k``.

    ``θ' = θ - lr * Σ_k w_k g_k`` is one SGD step on the shared backbone from
    the same starting point; heads are held fixed.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ContractViolation(f"eps must be in [1e-7, 1e-3], got {eps}")
    w = np.asarray(w, dtype=np.float64)
    G, _ = full_param_grads(model, batch, require_downstream=False)
    out = np.empty(w.shape[0])
    for k in range(w.shape[0]):
        bump = np.zeros_like(w)
        bump[k] = eps
        plus = downstream_loss(_backbone_step(model, G, w + bump, lr), batch)
        minus = downstream_loss(_backbone_step(model, G, w - bump, lr), batch)
        if not (np.isfinite(plus) and np.isfinite(minus)):
            raise NonFiniteError("downstream loss is not finite", loss_index=k)
        out[k] = (plus - minus) / (2.0 * eps)
    return out


def stepped_downstream_grad(model: CompositeModel, batch: Batch, w, lr: float) -> np.ndarray:
    """``g'_down``: the downstream backbone gradient after one SGD step with weights ``w``."""
    G, _ = full_param_grads(model, batch, require_downstream=False)
    stepped = _backbone_step(model, G, np.asarray(w, dtype=np.float64), lr)
    return full_param_grads(stepped, batch)[1]


@dataclass
class QuadraticTask:
    """``L_k(θ) = ½||A_k θ - b_k||²`` for each loss and for the downstream pair."""

    A: List[np.ndarray]
    b: List[np.ndarray]
    A_down: np.ndarray
    b_down: np.ndarray
    theta0: Optional[np.ndarray] = None

    def __post_init__(self):
        P = self.A_down.shape[1]
        if any(a.shape[1] != P for a in self.A):
            raise ContractViolation("all A_k must share the θ dimension")
        if self.theta0 is None:
            self.theta0 = np.zeros(P)

    @classmethod
    def random(
        cls, rng: np.random.Generator, K: int = 3, P: int = 6, m: int = 8
    ) -> "QuadraticTask":
        scale = 1.0 / np.sqrt(m)
        return cls(
            A=[rng.standard_normal((m, P)) * scale for _ in range(K)],
            b=[rng.standard_normal(m) for _ in range(K)],
            A_down=rng.standard_normal((m, P)) * scale,
            b_down=rng.standard_normal(m),
            theta0=rng.standard_normal(P),
        )

    @property
    def K(self) -> int:
        return len(self.A)

    def grad(self, k: int, theta: np.ndarray) -> np.ndarray:
        return self.A[k].T @ (self.A[k] @ theta - self.b[k])

    def hessian(self, k: int) -> np.ndarray:
        return self.A[k].T @ self.A[k]

    def grad_down(self, theta: np.ndarray) -> np.ndarray:
        return self.A_down.T @ (self.A_down @ theta - self.b_down)

    def loss_down(self, theta: np.ndarray) -> float:
        r = self.A_down @ theta - self.b_down
        return 0.5 * float(r @ r)

    def rollout(self, w, lr: float, n: int) -> List[np.ndarray]:
        """``θ_0 .. θ_{n+1}`` under SGD on ``Σ w_k L_k``."""
        thetas = [self.theta0.copy()]
        for _ in range(n + 1):
            theta = thetas[-1]
            step = sum(w[k] * self.grad(k, theta) for k in range(self.K))
            thetas.append(theta - lr * step)
        return thetas


def exact_multistep_hypergradient(task: QuadraticTask, w, lr: float, n: int) -> np.ndarray:
    """
    ``∂L_down(θ_{n+1}) / ∂w_i`` through ``n + 1`` SGD steps.

    Propagates ``Ω_i^{t+1} = Ω_i^t - lr ∇L_i(θ_t) - lr Σ_k w_k ∇²L_k Ω_i^t``
    from ``Ω_i^0 = 0``.
    """
    w = np.asarray(w, dtype=np.float64)
    H = sum(w[k] * task.hessian(k) for k in range(task.K))
    thetas = task.rollout(w, lr, n)
    omega = np.zeros((task.K, task.theta0.shape[0]))
    for t in range(n + 1):
        grads = np.stack([task.grad(i, thetas[t]) for i in range(task.K)])
        omega = omega - lr * grads - lr * omega @ H.T
    return omega @ task.grad_down(thetas[-1])


def firstorder_multistep_approx(task: QuadraticTask, w, lr: float, n: int) -> np.ndarray:
    """``-lr ∇L_down(θ_{n+1})ᵀ Σ_{t=0..n} ∇L_i(θ_t)``: the accumulated-gradient estimate."""
    w = np.asarray(w, dtype=np.float64)
    thetas = task.rollout(w, lr, n)
    acc = sum(
        np.stack([task.grad(i, thetas[t]) for i in range(task.K)]) for t in range(n + 1)
    )
    return -lr * acc @ task.grad_down(thetas[-1])


def fd_rollout_hypergradient(
    task: QuadraticTask, w, lr: float, n: int, eps: float = 1e-5
) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    out = np.empty(task.K)
    for i in range(task.K):
        bump = np.zeros_like(w)
        bump[i] = eps
        plus = task.loss_down(task.rollout(w + bump, lr, n)[-1])
        minus = task.loss_down(task.rollout(w - bump, lr, n)[-1])
        out[i] = (plus - minus) / (2.0 * eps)
    return out


@dataclass
class EmaState:
    """Exponential moving average of per-loss gradients, ``m_i^0 = 0``."""

    K: int
    P: int
    beta: float = 0.9
    m: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ContractViolation(f"beta must be in [0, 1), got {self.beta}")
        if self.m is None:
            self.m = np.zeros((self.K, self.P))

    def update(self, grads: np.ndarray) -> np.ndarray:
        self.m = self.beta * self.m + (1.0 - self.beta) * np.asarray(grads)
        return self.m


def ema_multistep_approx(
    task: QuadraticTask, w, lr: float, n: int, beta: float
) -> np.ndarray:
    """
    EMA alignment score after the rollout, rescaled to the first-order estimate.

    Uses ``-lr (n+1) ∇L_down(θ_{n+1})ᵀ m_i`` so that, on a constant-gradient
    trajectory in steady state, it matches :func:`firstorder_multistep_approx`.
    """
    w = np.asarray(w, dtype=np.float64)
    thetas = task.rollout(w, lr, n)
    ema = EmaState(task.K, task.theta0.shape[0], beta)
    for t in range(n + 1):
        ema.update(np.stack([task.grad(i, thetas[t]) for i in range(task.K)]))
    return -lr * (n + 1) * ema.m @ task.grad_down(thetas[-1])
