"""Dense float64 linear algebra and a small MLP with exact VJPs."""

from .linalg import as_mat, as_vec, check_finite, make_rng, spectral_norm
from .mlp import ForwardTape, Layer, MlpParams, mlp_forward, mlp_vjp

__all__ = [
    "ForwardTape",
    "Layer",
    "MlpParams",
    "as_mat",
    "as_vec",
    "check_finite",
    "make_rng",
    "mlp_forward",
    "mlp_vjp",
    "spectral_norm",
]
