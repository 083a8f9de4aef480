"""
Weighting strategies the training loop can run.

Each strategy turns one step's :class:`EmbeddingGrads` into the cotangent that
is propagated into the backbone, plus the weights and alignment numbers that
go into the trajectory. Every strategy sees the same gradient information.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Type

import numpy as np

from grapApp.errors import DegenerateNormError
from grapApp.model import EmbeddingGrads
from grapApp.tuner import (
    DwaState,
    GradNormState,
    WeightVector,
    cosine,
    dwa_weights,
    gradnorm_step,
    mgda_weights,
    pcgrad_combine,
    scaled_weights,
    weight_step,
)

from .state import MethodSpec

logger = logging.getLogger(__name__)


@dataclass
class MethodStep:
    cotangent: np.ndarray  # (B, d)
    weights: np.ndarray  # logged loss weights, length K
    cosine: float
    comp_norm: float
    degenerate: bool = False


METHODS: Dict[str, Type["WeightingMethod"]] = {}


def register(name: str) -> Callable:
    def deco(cls):
        METHODS[name] = cls
        return cls

    return deco


def create_method(spec: MethodSpec, K: int, lr_w: float, rng: np.random.Generator):
    return METHODS[spec.name](spec, K, lr_w, rng)


class WeightingMethod:
    def __init__(self, spec: MethodSpec, K: int, lr_w: float, rng: np.random.Generator):
        self.spec = spec
        self.K = K
        self.lr_w = lr_w
        self.rng = rng

    def step(self, grads: EmbeddingGrads, step: int) -> MethodStep:
        raise NotImplementedError

    @staticmethod
    def _weighted(
        grads: EmbeddingGrads, applied: np.ndarray, logged: np.ndarray, degenerate=False
    ) -> MethodStep:
        u = applied @ grads.flat()
        return MethodStep(
            cotangent=np.tensordot(applied, grads.g_tilde, axes=1),
            weights=logged,
            cosine=cosine(u, grads.flat_down()),
            comp_norm=float(np.linalg.norm(u)),
            degenerate=degenerate,
        )


@register("equal")
class EqualWeights(WeightingMethod):
    def _base_weights(self) -> np.ndarray:
        return np.ones(self.K)

    def step(self, grads, step):
        w = self._base_weights()
        applied, degenerate = w, False
        if self.spec.normalize_cotangent:
            try:
                applied = scaled_weights(w, grads.flat(), self.spec.normalization.kind)
            except DegenerateNormError as exc:
                logger.warning("step %d: cotangent not normalized: %s", step, exc)
                degenerate = True
        return self._weighted(grads, applied, w, degenerate)


@register("fixed")
class FixedWeights(EqualWeights):
    def _base_weights(self) -> np.ndarray:
        return np.asarray(self.spec.fixed_weights, dtype=np.float64)


@register("grap")
class GrapWeights(WeightingMethod):
    def __init__(self, spec, K, lr_w, rng):
        super().__init__(spec, K, lr_w, rng)
        self.weights = WeightVector.ones(K, lr_w=lr_w, floor=spec.floor)

    def step(self, grads, step):
        G = grads.flat()
        if not grads.has_downstream:
            # nothing to align with; keep the weights and still normalize
            logger.debug("step %d: no labeled rows, weights unchanged", step)
            try:
                w_bar = scaled_weights(self.weights.w, G, self.spec.normalization.kind)
                degenerate = False
            except DegenerateNormError:
                w_bar, degenerate = self.weights.w, True
            return self._weighted(grads, w_bar, self.weights.w.copy(), degenerate)

        self.weights, diag = weight_step(
            self.weights, G, grads.flat_down(), self.spec.normalization
        )
        return self._weighted(
            grads, diag.w_bar, self.weights.w.copy(), self.weights.degenerate
        )


@register("gradnorm")
class GradNormWeights(WeightingMethod):
    def __init__(self, spec, K, lr_w, rng):
        super().__init__(spec, K, lr_w, rng)
        self.state = GradNormState(K, alpha=spec.gradnorm_alpha)

    def step(self, grads, step):
        applied = self.state.weights.copy()
        norms = np.linalg.norm(grads.flat(), axis=1)
        gradnorm_step(self.state, norms, grads.losses, self.lr_w)
        return self._weighted(grads, applied, applied)


@register("dwa")
class DwaWeights(WeightingMethod):
    def __init__(self, spec, K, lr_w, rng):
        super().__init__(spec, K, lr_w, rng)
        self.state = DwaState(K, temperature=spec.dwa_temperature, window=spec.dwa_window)

    def step(self, grads, step):
        w = dwa_weights(self.state)
        self.state.record(grads.losses)
        return self._weighted(grads, w, w)


@register("mgda")
class MgdaWeights(WeightingMethod):
    def step(self, grads, step):
        w = mgda_weights(grads.flat())
        return self._weighted(grads, w, w)


@register("pcgrad")
class PcGradCombine(WeightingMethod):
    def step(self, grads, step):
        combined = pcgrad_combine(grads.flat(), self.rng)
        return MethodStep(
            cotangent=combined.reshape(grads.z.shape),
            weights=np.ones(self.K),
            cosine=cosine(combined, grads.flat_down()),
            comp_norm=float(np.linalg.norm(combined)),
        )
