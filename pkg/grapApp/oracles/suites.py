"""
Randomized verification suites run by ``grap verify``.

Every instance draws from its own seeded substream, so a suite gives the same
verdict whether its instances run serially or on a thread pool.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from grapApp.core import make_rng
from grapApp.model import Batch, CompositeModel, full_param_grads
from grapApp.tuner import NormalizationMode, alignment_gradient, hypergradient

from .bounds import bound_check, best_cosine
from .hypergrad import (
    QuadraticTask,
    exact_multistep_hypergradient,
    fd_hypergradient,
    firstorder_multistep_approx,
    stepped_downstream_grad,
)

logger = logging.getLogger(__name__)

HYPERGRAD_RTOL = 1e-4
GRADCHECK_RTOL = 1e-5
GRADCHECK_ATOL = 1e-6
DOMINANCE_SLACK = 1e-3
BOUND_SLACK = 1e-9
SCALING_LRS = (1e-2, 5e-3, 2.5e-3, 1.25e-3)
SCALING_TOL = 0.15


class SuiteResult(BaseModel):
    name: str
    passed: bool
    n_instances: int
    n_failures: int
    worst: float  # largest error or smallest margin seen, suite-specific
    seconds: float = 0.0
    detail: str = ""


def map_instances(
    fn: Callable[[np.random.Generator], Tuple[bool, float]],
    name: str,
    n: int,
    seed: int = 0,
    workers: int = 1,
) -> List[Tuple[bool, float]]:
    """``fn`` on ``n`` independent substreams, results in instance order."""
    rngs = [make_rng(seed, "verify", name, str(i)) for i in range(n)]
    if workers <= 1:
        return [fn(rng) for rng in rngs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, rngs))


def _summarize(
    name: str,
    outcomes: List[Tuple[bool, float]],
    started: float,
    worst: Callable = max,
    detail: str = "",
) -> SuiteResult:
    failures = sum(1 for ok, _ in outcomes if not ok)
    result = SuiteResult(
        name=name,
        passed=failures == 0,
        n_instances=len(outcomes),
        n_failures=failures,
        worst=float(worst(v for _, v in outcomes)) if outcomes else 0.0,
        seconds=time.perf_counter() - started,
        detail=detail,
    )
    level = logging.INFO if result.passed else logging.ERROR
    logger.log(
        level,
        "suite %s: %s (%d/%d failures, worst=%.3e)",
        name,
        "pass" if result.passed else "FAIL",
        failures,
        len(outcomes),
        result.worst,
    )
    return result


# ----- Random instances -----


def random_model_instance(
    rng: np.random.Generator, max_K: int = 8, max_d: int = 32
) -> Tuple[CompositeModel, Batch]:
    """Small composite model with a fully labeled batch, for gradient checks."""
    K = int(rng.integers(1, max_K + 1))
    d = int(rng.integers(2, max_d + 1))
    B = int(rng.integers(4, 17))
    n_features = 5
    out_dims = [int(rng.integers(1, 4)) for _ in range(K)]
    kinds = [str(rng.choice(["squared_error", "cross_entropy"])) for _ in range(K)]
    model = CompositeModel.init(
        n_features=n_features,
        d=d,
        head_out_dims=[max(o, 2) if kind == "cross_entropy" else o for o, kind in zip(out_dims, kinds)],
        loss_kinds=kinds,
        downstream_out_dim=2,
        downstream_loss_kind="cross_entropy",
        rng=rng,
        hidden=(8,),
    )
    targets = []
    for head, kind in zip(model.heads, kinds):
        out = head.fan_out
        if kind == "cross_entropy":
            targets.append(np.eye(out)[rng.integers(0, out, size=B)])
        else:
            targets.append(rng.standard_normal((B, out)))
    batch = Batch(
        inputs=rng.standard_normal((B, n_features)),
        targets=targets,
        labels=np.eye(2)[rng.integers(0, 2, size=B)],
        labeled_mask=np.ones(B, dtype=bool),
    )
    return model, batch


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


# ----- Suites -----


def hypergradient_exactness(seed: int = 0, n_instances: int = 100, workers: int = 1) -> SuiteResult:
    """
    One-step hypergradient with ``g'_down`` against finite differences, plus the
    linear-in-lr shrinkage of the ``g_down``-at-θ approximation.
    """
    started = time.perf_counter()
    lr = 0.1
    halvings = [0.02 / 2**j for j in range(5)]

    def instance(rng):
        model, batch = random_model_instance(rng)
        w = rng.uniform(0.2, 1.5, size=model.K)
        G, g_down = full_param_grads(model, batch)
        analytic = hypergradient(G, stepped_downstream_grad(model, batch, w, lr), lr)
        err = _rel_err(fd_hypergradient(model, batch, w, lr), analytic)

        devs = []
        for eta in halvings:
            exact = hypergradient(G, stepped_downstream_grad(model, batch, w, eta), eta)
            devs.append(_rel_err(hypergradient(G, g_down, eta), exact) + 1e-300)
        slope = float(np.polyfit(np.log(halvings), np.log(devs), 1)[0])
        return err <= HYPERGRAD_RTOL and slope >= 0.9, err

    outcomes = map_instances(instance, "hypergradient", n_instances, seed, workers)
    return _summarize("hypergradient_exactness", outcomes, started)


def gradients_agree(
    fd: np.ndarray, analytic: np.ndarray, atol: float, rtol: float = GRADCHECK_RTOL
) -> Tuple[bool, float]:
    """
    Per-coordinate check ``|fd - analytic| <= rtol * |fd| + atol``.

    Returns the verdict and the worst ratio of error to allowance.
    """
    allowance = rtol * np.abs(fd) + atol
    ratio = float(np.max(np.abs(fd - analytic) / allowance))
    return ratio <= 1.0, ratio


def weight_step_gradcheck(
    seed: int = 0, n_instances: int = 100, workers: int = 1, eps: float = 1e-6
) -> SuiteResult:
    """Analytic composite-grad objective gradient against central differences, both detach modes."""
    started = time.perf_counter()

    def instance(rng):
        K = int(rng.integers(1, 9))
        D = int(rng.integers(2, 33))
        G = rng.standard_normal((K, D))
        g_down = rng.standard_normal(D)
        w = rng.uniform(0.1, 2.0, size=K)
        a = G @ g_down
        worst, ok = 0.0, True
        for detach in (False, True):
            mode = NormalizationMode(kind="composite_grad", detach_norm=detach)
            frozen = np.linalg.norm(G.T @ w)

            def objective(v):
                norm = frozen if detach else np.linalg.norm(G.T @ v)
                return float(v @ a / norm)

            analytic = alignment_gradient(w, G, g_down, mode)
            fd = np.empty(K)
            for k in range(K):
                bump = np.zeros(K)
                bump[k] = eps
                fd[k] = (objective(w + bump) - objective(w - bump)) / (2 * eps)
            # scale-invariant objectives have near-zero gradients; floor in units of a/||u||
            agree, ratio = gradients_agree(fd, analytic, GRADCHECK_ATOL * np.linalg.norm(a) / frozen)
            worst = max(worst, ratio)
            ok = ok and agree
        return ok, worst

    outcomes = map_instances(instance, "gradcheck", n_instances, seed, workers)
    return _summarize("weight_step_gradcheck", outcomes, started)


def normalization_dominance(seed: int = 0, n_instances: int = 50, workers: int = 1) -> SuiteResult:
    """K=2 grid oracle: composite-grad cosine beats weight_sum and weight_norm, and hits 1 in the cone."""
    started = time.perf_counter()
    modes = {
        kind: NormalizationMode(kind=kind)
        for kind in ("composite_grad", "weight_sum", "weight_norm")
    }

    def instance(rng):
        D = int(rng.integers(2, 9))
        G = rng.standard_normal((2, D))
        g_down = rng.uniform(0.1, 1.0, size=2) @ G
        g_down = g_down / np.linalg.norm(g_down)
        cos = {kind: best_cosine(G, g_down, mode) for kind, mode in modes.items()}
        margin = min(
            cos["composite_grad"] - cos["weight_sum"],
            cos["composite_grad"] - cos["weight_norm"],
        )
        ok = margin >= -DOMINANCE_SLACK and cos["composite_grad"] >= 1.0 - 1e-6
        return ok, margin

    outcomes = map_instances(instance, "dominance", n_instances, seed, workers)
    return _summarize("normalization_dominance", outcomes, started, worst=min)


def jacobian_bounds(seed: int = 0, n_instances: int = 500, workers: int = 1) -> SuiteResult:
    """Both embedding-to-parameter bounds on random Jacobians; equality of the first at J=I."""
    started = time.perf_counter()

    def instance(rng):
        K = int(rng.integers(1, 6))
        D = int(rng.integers(2, 13))
        P = int(rng.integers(2, 17))
        J = rng.standard_normal((D, P)) * rng.uniform(0.1, 3.0)
        G_tilde = rng.standard_normal((K, D))
        g_tilde_down = rng.standard_normal(D)
        w = rng.uniform(0.0, 1.0, size=K)
        if (G_tilde.T @ w) @ g_tilde_down < 0:
            g_tilde_down = -g_tilde_down
        report = bound_check(J, G_tilde, g_tilde_down, w, slack=BOUND_SLACK)
        return report.holds, report.mismatch_param - report.mismatch_bound

    outcomes = map_instances(instance, "bounds", n_instances, seed, workers)

    rng = make_rng(seed, "verify", "bounds", "identity")
    G_tilde, g_tilde_down = rng.standard_normal((3, 6)), rng.standard_normal(6)
    report = bound_check(np.eye(6), G_tilde, g_tilde_down, np.ones(3))
    gap = abs(report.mismatch_param - report.mismatch_bound)
    outcomes.append((gap <= 1e-12 * max(1.0, report.mismatch_bound), gap))
    return _summarize("jacobian_bounds", outcomes, started)


def multistep_scaling(
    seed: int = 0,
    n_instances: int = 10,
    steps: Sequence[int] = (2, 4, 8),
    workers: int = 1,
) -> SuiteResult:
    """Gap between exact and first-order multi-step hypergradients shrinks as lr²."""
    started = time.perf_counter()
    lrs = np.asarray(SCALING_LRS)

    def instance(rng):
        task = QuadraticTask.random(rng)
        w = np.full(task.K, 1.0 / task.K)
        base_gap = np.abs(
            exact_multistep_hypergradient(task, w, lrs[0], 0)
            - firstorder_multistep_approx(task, w, lrs[0], 0)
        ).max()
        ok, worst = base_gap <= 1e-10, 0.0
        for n in steps:
            gaps = [
                np.linalg.norm(
                    exact_multistep_hypergradient(task, w, lr, n)
                    - firstorder_multistep_approx(task, w, lr, n)
                )
                for lr in lrs
            ]
            slope = float(np.polyfit(np.log(lrs), np.log(gaps), 1)[0])
            worst = max(worst, abs(slope - 2.0))
            ok = ok and abs(slope - 2.0) <= SCALING_TOL
        return ok, worst

    outcomes = map_instances(instance, "scaling", n_instances, seed, workers)
    return _summarize("multistep_scaling", outcomes, started)


SUITES: Dict[str, Callable[..., SuiteResult]] = {
    "hypergradient": hypergradient_exactness,
    "gradcheck": weight_step_gradcheck,
    "dominance": normalization_dominance,
    "bounds": jacobian_bounds,
    "scaling": multistep_scaling,
}


def run_suites(
    names: Optional[Sequence[str]] = None, seed: int = 0, workers: int = 1
) -> List[SuiteResult]:
    names = list(names or SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown verification suites: {unknown}")
    return [SUITES[name](seed=seed, workers=workers) for name in names]
