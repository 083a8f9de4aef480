"""
Small multilayer perceptron with hand-written vector-Jacobian products.

Layers compute ``act(x @ W + b)`` on row-major batches, so ``W`` has shape
``(fan_in, fan_out)``. The forward pass records a tape holding exactly what
the backward pass needs; nothing is recomputed there.
"""

from dataclasses import dataclass, field
from typing import List, Literal, Sequence, Tuple

import numpy as np

from grapApp.errors import ContractViolation

from .linalg import as_mat, check_finite

Activation = Literal["tanh", "relu", "identity"]
ACTIVATIONS = ("tanh", "relu", "identity")


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: Activation = "identity"

    def __post_init__(self):
        self.weight = as_mat(self.weight, "layer weight")
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64).reshape(-1)
        if self.bias.shape[0] != self.weight.shape[1]:
            raise ContractViolation(
                f"bias length {self.bias.shape[0]} != fan_out {self.weight.shape[1]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ContractViolation(f"unknown activation {self.activation!r}")

    @property
    def fan_in(self) -> int:
        return self.weight.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weight.shape[1]


@dataclass
class MlpParams:
    """Parameter blocks of one MLP. Also used as the container for its gradients."""

    layers: List[Layer] = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise ContractViolation("an MLP needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.fan_out != nxt.fan_in:
                raise ContractViolation(
                    f"layer shapes do not chain: {prev.fan_out} -> {nxt.fan_in}"
                )

    @classmethod
    def init(
        cls,
        sizes: Sequence[int],
        activations: Sequence[Activation],
        rng: np.random.Generator,
        scale: float = 1.0,
    ) -> "MlpParams":
        """Glorot-style random init; ``sizes`` includes input and output widths."""
        if len(activations) != len(sizes) - 1:
            raise ContractViolation("need one activation per layer")
        layers = []
        for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
            std = scale * np.sqrt(2.0 / (fan_in + fan_out))
            layers.append(
                Layer(
                    weight=rng.standard_normal((fan_in, fan_out)) * std,
                    bias=np.zeros(fan_out),
                    activation=act,
                )
            )
        return cls(layers)

    @property
    def fan_in(self) -> int:
        return self.layers[0].fan_in

    @property
    def fan_out(self) -> int:
        return self.layers[-1].fan_out

    @property
    def n_params(self) -> int:
        return sum(layer.weight.size + layer.bias.size for layer in self.layers)

    def flatten(self) -> np.ndarray:
        return np.concatenate(
            [np.concatenate([l.weight.ravel(), l.bias]) for l in self.layers]
        )

    def with_flat(self, flat: np.ndarray) -> "MlpParams":
        """Same architecture, parameters taken from a flat vector."""
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise ContractViolation(
                f"flat vector has shape {flat.shape}, expected ({self.n_params},)"
            )
        layers, offset = [], 0
        for l in self.layers:
            w_end = offset + l.weight.size
            b_end = w_end + l.bias.size
            layers.append(
                Layer(
                    weight=flat[offset:w_end].reshape(l.weight.shape).copy(),
                    bias=flat[w_end:b_end].copy(),
                    activation=l.activation,
                )
            )
            offset = b_end
        return MlpParams(layers)

    def copy(self) -> "MlpParams":
        return self.with_flat(self.flatten())

    def sgd_step(self, grads: "MlpParams", lr: float) -> "MlpParams":
        """Returns ``self - lr * grads``; the original is left untouched."""
        layers = [
            Layer(
                weight=l.weight - lr * g.weight,
                bias=l.bias - lr * g.bias,
                activation=l.activation,
            )
            for l, g in zip(self.layers, grads.layers)
        ]
        return MlpParams(layers)


@dataclass(frozen=True)
class ForwardTape:
    params: MlpParams
    inputs: Tuple[np.ndarray, ...]  # input to each layer
    outputs: Tuple[np.ndarray, ...]  # post-activation output of each layer

    @property
    def output(self) -> np.ndarray:
        return self.outputs[-1]


def _activate(pre: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        return np.tanh(pre)
    if activation == "relu":
        return np.maximum(pre, 0.0)
    return pre


def _activation_vjp(out: np.ndarray, cot: np.ndarray, activation: str) -> np.ndarray:
    # derivatives expressed through the layer output, which the tape keeps
    if activation == "tanh":
        return cot * (1.0 - out * out)
    if activation == "relu":
        return cot * (out > 0.0)
    return cot


def mlp_forward(params: MlpParams, inputs) -> Tuple[np.ndarray, ForwardTape]:
    x = as_mat(inputs, "mlp input")
    if x.shape[1] != params.fan_in:
        raise ContractViolation(
            f"input has {x.shape[1]} columns, first layer expects {params.fan_in}"
        )
    layer_inputs, layer_outputs = [], []
    for layer in params.layers:
        layer_inputs.append(x)
        x = _activate(x @ layer.weight + layer.bias, layer.activation)
        layer_outputs.append(x)
    return x, ForwardTape(params, tuple(layer_inputs), tuple(layer_outputs))


def mlp_vjp(tape: ForwardTape, cotangent) -> Tuple[MlpParams, np.ndarray]:
    """Gradients of ``<output, cotangent>`` w.r.t. parameters and input."""
    cot = as_mat(cotangent, "cotangent")
    if cot.shape != tape.output.shape:
        raise ContractViolation(
            f"cotangent shape {cot.shape} != forward output shape {tape.output.shape}"
        )
    grad_layers = []
    for layer, x_in, out in zip(
        reversed(tape.params.layers), reversed(tape.inputs), reversed(tape.outputs)
    ):
        delta = _activation_vjp(out, cot, layer.activation)
        grad_layers.append(
            Layer(weight=x_in.T @ delta, bias=delta.sum(axis=0), activation=layer.activation)
        )
        cot = delta @ layer.weight.T
    grads = MlpParams(list(reversed(grad_layers)))
    check_finite(grads.flatten(), "mlp gradients")
    return grads, cot
