"""
Per-step cost of the three training paths as the number of losses grows.

plain      equal weights, one combined backward through the backbone
embedding  grap weight step on embedding-space gradients, one backbone backward
naive      grap weight step on parameter-space gradients, one full forward and
           backward pass through the backbone per loss
"""

import logging
import time
from typing import Callable, Dict, List, Literal, Sequence

import numpy as np
from pydantic import BaseModel

from grapApp.config import config as settings
from grapApp.core import make_rng
from grapApp.model import (
    CompositeModel,
    apply_cotangent_update,
    apply_param_update,
    compute_embedding_grads,
    separate_param_grads,
)
from grapApp.tasks import TaskSpec, batches, generate
from grapApp.tuner import WeightVector, weight_step

from .runner import build_model
from .utils.methods import create_method
from .utils.state import MethodSpec, ModelSpec, RunConfig

logger = logging.getLogger(__name__)

Variant = Literal["plain", "embedding", "naive"]
VARIANTS: List[Variant] = ["plain", "embedding", "naive"]

MAX_BATCH_DOUBLINGS = 6


class VariantTiming(BaseModel):
    K: int
    variant: str
    batch_size: int
    median_step_us: float


class CostReport(BaseModel):
    timings: List[VariantTiming]
    overhead: Dict[str, Dict[int, float]]  # variant -> K -> ratio over plain
    slopes: Dict[str, float]  # log-log slope of median step time in K

    def ratio(self, variant: str, K: int) -> float:
        return self.overhead[variant][K]


def benchmark_config(K: int, base: RunConfig = None) -> RunConfig:
    """K useful losses on a backbone wide enough that it dominates the step."""
    base = base or RunConfig(model=ModelSpec(hidden=[256, 256]))
    task = TaskSpec.with_useful_losses(
        K,
        n_features=base.task.n_features,
        d=base.task.d,
        n_train=base.task.n_train,
        n_val=base.task.n_val,
        seed=base.task.seed,
    )
    return base.model_copy(update={"task": task, "method": MethodSpec(name="grap")})


def _stepper(variant: Variant, config: RunConfig) -> Callable:
    model_box = {"model": build_model(config)}
    if variant == "plain":
        method = create_method(MethodSpec(name="equal"), config.task.K, 0.0, make_rng(0))
    elif variant == "embedding":
        method = create_method(config.method, config.task.K, config.lr_w, make_rng(0))
    else:
        weights = {"w": WeightVector.ones(config.task.K, config.lr_w, config.method.floor)}

    def step(batch, index):
        model: CompositeModel = model_box["model"]
        if variant == "naive":
            grads = separate_param_grads(model, batch, require_downstream=False)
            weights["w"], diag = weight_step(
                weights["w"], grads.G, grads.g_down, config.method.normalization
            )
            model = apply_param_update(model, grads, diag.w_bar @ grads.G, config.lr)
        else:
            grads = compute_embedding_grads(model, batch, require_downstream=False)
            out = method.step(grads, index)
            model = apply_cotangent_update(model, grads, out.cotangent, config.lr)
        model_box["model"] = model

    return step


def time_variant(variant: Variant, config: RunConfig, steps: int, warmup: int) -> float:
    """Median wall time in microseconds of one training step after ``warmup`` steps."""
    data = generate(config.task)
    step = _stepper(variant, config)
    rng = make_rng(config.seed, "benchmark", variant)
    timings, index = [], 0
    while len(timings) < steps:
        for batch in batches(data.train, config.batch_size, rng):
            index += 1
            started = time.perf_counter_ns()
            step(batch, index)
            elapsed = (time.perf_counter_ns() - started) / 1000.0
            if index > warmup:
                timings.append(elapsed)
            if len(timings) >= steps:
                break
    return float(np.median(timings))


def log_log_slope(ks: Sequence[int], values: Sequence[float]) -> float:
    return float(np.polyfit(np.log(ks), np.log(values), 1)[0])


def benchmark(
    ks: Sequence[int] = (2, 4, 8, 16),
    steps: int = 200,
    warmup: int = 50,
    base: RunConfig = None,
    variants: Sequence[Variant] = VARIANTS,
) -> CostReport:
    """
    Times each variant for each K and fits the growth of step time in K.

    Batches too fast to time reliably are doubled (with a warning) until the
    plain step exceeds ``MIN_TIMED_STEP_US``.
    """
    timings: List[VariantTiming] = []
    for K in ks:
        config = benchmark_config(K, base)
        median = {v: time_variant(v, config, steps, warmup) for v in variants}
        doublings = 0
        while min(median.values()) < settings.MIN_TIMED_STEP_US and doublings < MAX_BATCH_DOUBLINGS:
            new_size = 2 * (config.batch_size or config.task.n_train)
            logger.warning(
                "K=%d: steps take %.1fus, below timer floor; batch size -> %d",
                K,
                min(median.values()),
                new_size,
            )
            config = config.model_copy(update={"batch_size": new_size})
            median = {v: time_variant(v, config, steps, warmup) for v in variants}
            doublings += 1
        for v in variants:
            timings.append(
                VariantTiming(K=K, variant=v, batch_size=config.batch_size or 0, median_step_us=median[v])
            )
        logger.info(
            "K=%d: %s",
            K,
            ", ".join(f"{v}={median[v]:.0f}us" for v in variants),
        )

    per_variant = {v: [t for t in timings if t.variant == v] for v in variants}
    overhead: Dict[str, Dict[int, float]] = {}
    if "plain" in variants:
        plain = {t.K: t.median_step_us for t in per_variant["plain"]}
        overhead = {
            v: {t.K: t.median_step_us / plain[t.K] for t in per_variant[v]}
            for v in variants
            if v != "plain"
        }
    slopes = {}
    if len(ks) > 1:
        slopes = {
            v: log_log_slope([t.K for t in ts], [t.median_step_us for t in ts])
            for v, ts in per_variant.items()
        }
    return CostReport(timings=timings, overhead=overhead, slopes=slopes)
