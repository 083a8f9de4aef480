"""
Backbone + K pretraining heads + a detached downstream head.

``compute_embedding_grads`` does the single backbone forward and the K+1
head-level backward passes of one training step. The ``apply_*`` functions
turn those gradients into the parameter updates: the backbone receives a
caller-chosen cotangent on the embedding, every head is trained on its own
unweighted loss, and the downstream gradient never reaches the backbone.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from grapApp.core import MlpParams, as_mat, mlp_forward, mlp_vjp
from grapApp.core.mlp import Activation, ForwardTape
from grapApp.errors import ContractViolation, NonFiniteError

from .losses import LossKind, loss_and_grad

logger = logging.getLogger(__name__)

DOWNSTREAM_INDEX = -1  # loss_index reported for downstream failures


@dataclass
class Batch:
    inputs: np.ndarray
    targets: List[np.ndarray]
    labels: np.ndarray
    labeled_mask: np.ndarray

    def __post_init__(self):
        self.inputs = as_mat(self.inputs, "batch inputs")
        self.targets = [as_mat(t, "loss target") for t in self.targets]
        self.labels = as_mat(self.labels, "downstream labels")
        self.labeled_mask = np.asarray(self.labeled_mask, dtype=bool).reshape(-1)
        rows = {self.inputs.shape[0], self.labels.shape[0], self.labeled_mask.shape[0]}
        rows.update(t.shape[0] for t in self.targets)
        if len(rows) != 1:
            raise ContractViolation(f"batch row counts disagree: {sorted(rows)}")

    @property
    def size(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_labeled(self) -> int:
        return int(self.labeled_mask.sum())

    def take(self, index) -> "Batch":
        index = np.asarray(index)
        return Batch(
            inputs=self.inputs[index],
            targets=[t[index] for t in self.targets],
            labels=self.labels[index],
            labeled_mask=self.labeled_mask[index],
        )


@dataclass
class CompositeModel:
    backbone: MlpParams
    heads: List[MlpParams]
    downstream_head: MlpParams
    loss_kinds: List[LossKind]
    downstream_loss_kind: LossKind = "cross_entropy"

    def __post_init__(self):
        if not self.heads:
            raise ContractViolation("a composite model needs K >= 1 heads")
        if len(self.loss_kinds) != len(self.heads):
            raise ContractViolation("one loss kind per head is required")
        for k, head in enumerate(self.heads + [self.downstream_head]):
            if head.fan_in != self.backbone.fan_out:
                raise ContractViolation(
                    f"head {k} fan-in {head.fan_in} != embedding dim {self.backbone.fan_out}"
                )

    @classmethod
    def init(
        cls,
        n_features: int,
        d: int,
        head_out_dims: Sequence[int],
        loss_kinds: Sequence[LossKind],
        downstream_out_dim: int,
        downstream_loss_kind: LossKind,
        rng: np.random.Generator,
        hidden: Sequence[int] = (32,),
        activation: Activation = "tanh",
        head_hidden: Sequence[int] = (),
    ) -> "CompositeModel":
        sizes = [n_features, *hidden, d]
        backbone = MlpParams.init(sizes, [activation] * (len(sizes) - 1), rng)

        def _head(out_dim: int) -> MlpParams:
            head_sizes = [d, *head_hidden, out_dim]
            acts = [activation] * len(head_hidden) + ["identity"]
            return MlpParams.init(head_sizes, acts, rng)

        heads = [_head(out) for out in head_out_dims]
        return cls(
            backbone=backbone,
            heads=heads,
            downstream_head=_head(downstream_out_dim),
            loss_kinds=list(loss_kinds),
            downstream_loss_kind=downstream_loss_kind,
        )

    @property
    def K(self) -> int:
        return len(self.heads)

    @property
    def d(self) -> int:
        return self.backbone.fan_out

    def with_backbone_flat(self, flat: np.ndarray) -> "CompositeModel":
        return CompositeModel(
            backbone=self.backbone.with_flat(flat),
            heads=self.heads,
            downstream_head=self.downstream_head,
            loss_kinds=self.loss_kinds,
            downstream_loss_kind=self.downstream_loss_kind,
        )

    def copy(self) -> "CompositeModel":
        return CompositeModel(
            backbone=self.backbone.copy(),
            heads=[h.copy() for h in self.heads],
            downstream_head=self.downstream_head.copy(),
            loss_kinds=list(self.loss_kinds),
            downstream_loss_kind=self.downstream_loss_kind,
        )


@dataclass
class EmbeddingGrads:
    """
    Per-loss gradients w.r.t. the embedding matrix ``z`` (shape ``(B, d)``).

    ``g_tilde[k]`` is the full ``(B, d)`` gradient of the batch-mean loss
    ``L_k``; :meth:`flat` gives the ``(K, B*d)`` matrix used by the alignment
    algebra. ``g_tilde_down`` is zero on unlabeled rows and entirely zero when
    the batch has no labeled rows (``has_downstream`` is then False).
    """

    g_tilde: np.ndarray
    g_tilde_down: np.ndarray
    losses: np.ndarray
    loss_down: float
    z: np.ndarray
    backbone_tape: ForwardTape
    head_tapes: List[ForwardTape]
    head_param_grads: List[MlpParams]
    down_param_grads: Optional[MlpParams] = None
    has_downstream: bool = True
    head_output_grads: List[np.ndarray] = field(default_factory=list)

    @property
    def K(self) -> int:
        return self.g_tilde.shape[0]

    def flat(self) -> np.ndarray:
        return self.g_tilde.reshape(self.K, -1)

    def flat_down(self) -> np.ndarray:
        return self.g_tilde_down.reshape(-1)


def compute_embedding_grads(
    model: CompositeModel, batch: Batch, require_downstream: bool = True
) -> EmbeddingGrads:
    """One backbone forward, K+1 head forwards and K+1 head-level backwards."""
    if len(batch.targets) != model.K:
        raise ContractViolation(
            f"batch carries {len(batch.targets)} targets for K={model.K} losses"
        )
    z, backbone_tape = mlp_forward(model.backbone, batch.inputs)

    g_tilde = np.empty((model.K, *z.shape))
    losses = np.empty(model.K)
    head_tapes, head_param_grads, head_output_grads = [], [], []
    for k, (head, kind, target) in enumerate(
        zip(model.heads, model.loss_kinds, batch.targets)
    ):
        out, tape = mlp_forward(head, z)
        value, out_grad = loss_and_grad(kind, out, target)
        if not np.isfinite(value):
            raise NonFiniteError("pretraining loss is not finite", loss_index=k)
        param_grads, g_tilde[k] = mlp_vjp(tape, out_grad)
        losses[k] = value
        head_tapes.append(tape)
        head_param_grads.append(param_grads)
        head_output_grads.append(out_grad)

    has_downstream = batch.n_labeled > 0
    if not has_downstream and require_downstream:
        raise ContractViolation("downstream gradient requested but no labeled rows")

    g_tilde_down = np.zeros_like(z)
    loss_down, down_param_grads = float("nan"), None
    if has_downstream:
        out, tape = mlp_forward(model.downstream_head, z)
        loss_down, out_grad = loss_and_grad(
            model.downstream_loss_kind, out, batch.labels, batch.labeled_mask
        )
        if not np.isfinite(loss_down):
            raise NonFiniteError(
                "downstream loss is not finite", loss_index=DOWNSTREAM_INDEX
            )
        down_param_grads, g_tilde_down = mlp_vjp(tape, out_grad)

    return EmbeddingGrads(
        g_tilde=g_tilde,
        g_tilde_down=g_tilde_down,
        losses=losses,
        loss_down=loss_down,
        z=z,
        backbone_tape=backbone_tape,
        head_tapes=head_tapes,
        head_param_grads=head_param_grads,
        down_param_grads=down_param_grads,
        has_downstream=has_downstream,
        head_output_grads=head_output_grads,
    )


def _updated_model(
    model: CompositeModel,
    grads: "Union[EmbeddingGrads, ParamGrads]",
    backbone: MlpParams,
    lr: float,
    head_lr: Optional[float],
    down_lr: Optional[float],
) -> CompositeModel:
    head_lr = lr if head_lr is None else head_lr
    down_lr = lr if down_lr is None else down_lr
    heads = [
        head.sgd_step(g, head_lr) for head, g in zip(model.heads, grads.head_param_grads)
    ]
    downstream_head = model.downstream_head
    if grads.down_param_grads is not None:
        downstream_head = downstream_head.sgd_step(grads.down_param_grads, down_lr)

    updated = CompositeModel(
        backbone=backbone,
        heads=heads,
        downstream_head=downstream_head,
        loss_kinds=model.loss_kinds,
        downstream_loss_kind=model.downstream_loss_kind,
    )
    for name, params in [("backbone", backbone), ("downstream head", downstream_head)] + [
        (f"head {k}", h) for k, h in enumerate(heads)
    ]:
        if not np.all(np.isfinite(params.flatten())):
            raise NonFiniteError(f"non-finite parameters after update of {name}")
    return updated


def apply_cotangent_update(
    model: CompositeModel,
    grads: EmbeddingGrads,
    cotangent: np.ndarray,
    lr: float,
    head_lr: Optional[float] = None,
    down_lr: Optional[float] = None,
) -> CompositeModel:
    """SGD step with ``cotangent`` (shape ``(B, d)``) propagated into the backbone."""
    if lr <= 0:
        raise ContractViolation(f"lr must be > 0, got {lr}")
    backbone_grads, _ = mlp_vjp(grads.backbone_tape, np.asarray(cotangent).reshape(grads.z.shape))
    return _updated_model(
        model, grads, model.backbone.sgd_step(backbone_grads, lr), lr, head_lr, down_lr
    )


def apply_composite_update(
    model: CompositeModel,
    grads: EmbeddingGrads,
    w_bar,
    lr: float,
    head_lr: Optional[float] = None,
    down_lr: Optional[float] = None,
) -> CompositeModel:
    """Backbone gets ``w_barᵀ G̃``; heads get their own unweighted gradients."""
    w_bar = np.asarray(w_bar, dtype=np.float64).reshape(-1)
    if w_bar.shape[0] != grads.K:
        raise ContractViolation(f"w_bar has {w_bar.shape[0]} entries for K={grads.K}")
    cotangent = np.tensordot(w_bar, grads.g_tilde, axes=1)
    return apply_cotangent_update(model, grads, cotangent, lr, head_lr, down_lr)


def apply_param_update(
    model: CompositeModel,
    grads: "Union[EmbeddingGrads, ParamGrads]",
    backbone_grad: np.ndarray,
    lr: float,
    head_lr: Optional[float] = None,
    down_lr: Optional[float] = None,
) -> CompositeModel:
    """
    Like :func:`apply_cotangent_update` but with a ready parameter-space gradient.

    ``grads`` only supplies the head and downstream-head gradients.
    """
    if lr <= 0:
        raise ContractViolation(f"lr must be > 0, got {lr}")
    flat = model.backbone.flatten() - lr * np.asarray(backbone_grad, dtype=np.float64)
    return _updated_model(
        model, grads, model.backbone.with_flat(flat), lr, head_lr, down_lr
    )


@dataclass
class ParamGrads:
    """
    Parameter-space gradients of every loss w.r.t. the shared backbone.

    ``G`` is ``(K, P)`` and ``g_down`` is ``(P,)``. The head gradients are
    kept so a training step can be taken from this object alone.
    """

    G: np.ndarray
    g_down: np.ndarray
    losses: np.ndarray
    head_param_grads: List[MlpParams]
    down_param_grads: Optional[MlpParams] = None
    has_downstream: bool = True


def _single_loss_pass(
    model: CompositeModel,
    inputs: np.ndarray,
    head: MlpParams,
    kind: LossKind,
    targets: np.ndarray,
    mask: Optional[np.ndarray] = None,
) -> Tuple[float, MlpParams, np.ndarray]:
    """Forward through backbone and one head, then backward through both."""
    z, backbone_tape = mlp_forward(model.backbone, inputs)
    out, head_tape = mlp_forward(head, z)
    value, out_grad = loss_and_grad(kind, out, targets, mask)
    head_grads, z_grad = mlp_vjp(head_tape, out_grad)
    backbone_grads, _ = mlp_vjp(backbone_tape, z_grad)
    return value, head_grads, backbone_grads.flatten()


def separate_param_grads(
    model: CompositeModel, batch: Batch, require_downstream: bool = True
) -> ParamGrads:
    """
    One full forward and backward pass through the backbone per loss.

    This is the reference path whose cost grows with K; the training loop
    uses :func:`compute_embedding_grads` instead.
    """
    if len(batch.targets) != model.K:
        raise ContractViolation(
            f"batch carries {len(batch.targets)} targets for K={model.K} losses"
        )
    G = np.empty((model.K, model.backbone.n_params))
    losses = np.empty(model.K)
    head_param_grads = []
    for k, (head, kind, target) in enumerate(
        zip(model.heads, model.loss_kinds, batch.targets)
    ):
        losses[k], head_grads, G[k] = _single_loss_pass(model, batch.inputs, head, kind, target)
        if not np.isfinite(losses[k]):
            raise NonFiniteError("pretraining loss is not finite", loss_index=k)
        head_param_grads.append(head_grads)

    has_downstream = batch.n_labeled > 0
    if not has_downstream and require_downstream:
        raise ContractViolation("downstream gradient requested but no labeled rows")
    g_down = np.zeros(model.backbone.n_params)
    down_param_grads = None
    if has_downstream:
        loss_down, down_param_grads, g_down = _single_loss_pass(
            model,
            batch.inputs,
            model.downstream_head,
            model.downstream_loss_kind,
            batch.labels,
            batch.labeled_mask,
        )
        if not np.isfinite(loss_down):
            raise NonFiniteError(
                "downstream loss is not finite", loss_index=DOWNSTREAM_INDEX
            )
    return ParamGrads(
        G=G,
        g_down=g_down,
        losses=losses,
        head_param_grads=head_param_grads,
        down_param_grads=down_param_grads,
        has_downstream=has_downstream,
    )


def full_param_grads(
    model: CompositeModel, batch: Batch, require_downstream: bool = True
) -> Tuple[np.ndarray, np.ndarray]:
    """``(G, g_down)`` in parameter space, each row from its own backward pass."""
    grads = separate_param_grads(model, batch, require_downstream)
    return grads.G, grads.g_down


def backbone_jacobian(model: CompositeModel, inputs) -> np.ndarray:
    """Exact Jacobian of the flattened embedding w.r.t. backbone parameters, ``(B*d, P)``."""
    z, tape = mlp_forward(model.backbone, inputs)
    jac = np.empty((z.size, model.backbone.n_params))
    basis = np.zeros(z.size)
    for i in range(z.size):
        basis[i] = 1.0
        jac[i] = mlp_vjp(tape, basis.reshape(z.shape))[0].flatten()
        basis[i] = 0.0
    return jac


def downstream_loss(model: CompositeModel, batch: Batch) -> float:
    """Downstream loss over the labeled rows of ``batch``."""
    z, _ = mlp_forward(model.backbone, batch.inputs)
    out, _ = mlp_forward(model.downstream_head, z)
    value, _ = loss_and_grad(
        model.downstream_loss_kind, out, batch.labels, batch.labeled_mask
    )
    return value


def evaluate_downstream(model: CompositeModel, batch: Batch) -> Tuple[float, float]:
    """
    Loss and metric of the downstream head on every row of ``batch``.

    The metric is accuracy for cross-entropy heads and RMSE otherwise.
    """
    z, _ = mlp_forward(model.backbone, batch.inputs)
    out, _ = mlp_forward(model.downstream_head, z)
    value, _ = loss_and_grad(model.downstream_loss_kind, out, batch.labels)
    if model.downstream_loss_kind == "cross_entropy":
        metric = float(np.mean(out.argmax(axis=1) == batch.labels.argmax(axis=1)))
    else:
        metric = float(np.sqrt(np.mean((out - batch.labels) ** 2)))
    return value, metric
