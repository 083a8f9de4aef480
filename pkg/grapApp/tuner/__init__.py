from .baselines import (
    DwaState,
    GradNormState,
    dwa_weights,
    gradnorm_step,
    median_weights,
    mgda_weights,
    pcgrad_combine,
)
from .grap import (
    NormalizationMode,
    StepDiagnostics,
    WeightVector,
    alignment_gradient,
    alignment_objective,
    cosine,
    distance_objective,
    hypergradient,
    normalized_weights,
    scaled_weights,
    weight_step,
)

__all__ = [
    "DwaState",
    "GradNormState",
    "NormalizationMode",
    "StepDiagnostics",
    "WeightVector",
    "alignment_gradient",
    "alignment_objective",
    "cosine",
    "distance_objective",
    "dwa_weights",
    "gradnorm_step",
    "hypergradient",
    "median_weights",
    "mgda_weights",
    "normalized_weights",
    "pcgrad_combine",
    "scaled_weights",
    "weight_step",
]
