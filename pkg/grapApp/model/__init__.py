from .checkpoint import load_checkpoint, save_checkpoint
from .composite import (
    Batch,
    CompositeModel,
    EmbeddingGrads,
    ParamGrads,
    apply_composite_update,
    apply_cotangent_update,
    apply_param_update,
    backbone_jacobian,
    compute_embedding_grads,
    downstream_loss,
    evaluate_downstream,
    full_param_grads,
    separate_param_grads,
)
from .losses import LossKind, loss_and_grad
from .probe import evaluate_probe, fit_linear_probe, probe_metric

__all__ = [
    "Batch",
    "CompositeModel",
    "EmbeddingGrads",
    "ParamGrads",
    "LossKind",
    "apply_composite_update",
    "apply_cotangent_update",
    "apply_param_update",
    "backbone_jacobian",
    "compute_embedding_grads",
    "downstream_loss",
    "evaluate_downstream",
    "evaluate_probe",
    "fit_linear_probe",
    "full_param_grads",
    "load_checkpoint",
    "loss_and_grad",
    "probe_metric",
    "save_checkpoint",
    "separate_param_grads",
]
