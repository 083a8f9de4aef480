"""
Synthetic multi-loss pretraining tasks.

Inputs are standard normal. A low-dimensional latent ``s = X P`` drives every
useful pretraining target and the downstream label; redundant targets are
affine copies of a useful target and noise targets are driven by input
directions orthogonal to the latent, so they are learnable yet independent of
the latent and the label. Random draws for each loss come from a stream keyed by the loss
name, so reordering the loss list only permutes the targets.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from grapApp.core import make_rng
from grapApp.errors import ContractViolation
from grapApp.model import Batch, LossKind

logger = logging.getLogger(__name__)


class LossSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    kind: LossKind = "squared_error"
    link: Literal["useful", "redundant", "noise"] = "useful"
    out_dim: int = Field(4, ge=1)
    source: Optional[str] = None  # useful loss a redundant loss copies
    noise: float = Field(0.1, ge=0.0)


def default_losses() -> List[LossSpec]:
    return [
        LossSpec(name="useful_a"),
        LossSpec(name="useful_b"),
        LossSpec(name="useful_c", kind="cross_entropy"),
        LossSpec(name="redundant_a", link="redundant", source="useful_a", noise=0.05),
        LossSpec(name="redundant_b", link="redundant", source="useful_b", noise=0.05),
        LossSpec(name="noise", link="noise", noise=0.3),
    ]


class TaskSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_features: int = Field(20, ge=1)
    d: int = Field(16, ge=1)
    latent_dim: int = Field(4, ge=1)
    losses: List[LossSpec] = Field(default_factory=default_losses)
    downstream_kind: Literal["binary", "regression"] = "binary"
    label_sharpness: float = Field(10.0, gt=0.0)
    label_noise: float = Field(0.1, ge=0.0)
    labeled_fraction: float = Field(1.0, gt=0.0, le=1.0)
    n_train: int = Field(4096, ge=1)
    n_val: int = Field(1024, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_losses(self) -> "TaskSpec":
        names = [loss.name for loss in self.losses]
        if len(set(names)) != len(names):
            raise ValueError("loss names must be unique")
        useful = {l.name: l for l in self.losses if l.link == "useful"}
        if not useful:
            raise ValueError("at least one useful loss is required")
        for loss in self.losses:
            if loss.link != "redundant":
                continue
            src = useful.get(loss.source)
            if src is None:
                raise ValueError(f"redundant loss {loss.name!r} needs a useful source")
            if loss.kind != "squared_error" or src.kind != "squared_error":
                raise ValueError("redundant losses copy squared-error targets only")
            if loss.out_dim != src.out_dim:
                raise ValueError(f"redundant loss {loss.name!r} must match source out_dim")
        return self

    @property
    def K(self) -> int:
        return len(self.losses)

    @property
    def downstream_out_dim(self) -> int:
        return 2 if self.downstream_kind == "binary" else 1

    @property
    def downstream_loss_kind(self) -> LossKind:
        return "cross_entropy" if self.downstream_kind == "binary" else "squared_error"

    @classmethod
    def with_useful_losses(cls, K: int, **kwargs) -> "TaskSpec":
        """K useful squared-error losses; used by the cost benchmark."""
        return cls(losses=[LossSpec(name=f"useful_{k}") for k in range(K)], **kwargs)


@dataclass
class Dataset:
    spec: TaskSpec
    train: Batch
    val: Batch
    latent_train: np.ndarray
    latent_val: np.ndarray
    generative: Dict[str, np.ndarray] = field(default_factory=dict)


def _one_hot(index: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((index.shape[0], n))
    out[np.arange(index.shape[0]), index] = 1.0
    return out


def _orthogonal_projection(proj: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    Random input directions orthogonal to the columns of ``proj``.

    For standard normal inputs ``X @ result`` is independent of ``X @ proj``.
    """
    n_features, latent_dim = proj.shape
    raw = rng.standard_normal((n_features, latent_dim)) / np.sqrt(n_features)
    basis, _ = np.linalg.qr(proj)
    return raw - basis @ (basis.T @ raw)


def generate(spec: TaskSpec) -> Dataset:
    n = spec.n_train + spec.n_val
    base = make_rng(spec.seed, "tasks", "inputs")
    X = base.standard_normal((n, spec.n_features))
    proj = base.standard_normal((spec.n_features, spec.latent_dim)) / np.sqrt(spec.n_features)
    s = X @ proj
    generative = {"projection": proj}
    distractor = _orthogonal_projection(proj, make_rng(spec.seed, "tasks", "distractor"))
    generative["distractor_projection"] = distractor
    r = X @ distractor

    useful_targets: Dict[str, np.ndarray] = {}
    for loss in spec.losses:
        if loss.link != "useful":
            continue
        rng = make_rng(spec.seed, "tasks", "loss", loss.name)
        mix = rng.standard_normal((spec.latent_dim, loss.out_dim))
        generative[f"mix/{loss.name}"] = mix
        signal = np.tanh(s @ mix)
        if loss.kind == "cross_entropy":
            logits = signal + loss.noise * rng.gumbel(size=signal.shape)
            useful_targets[loss.name] = _one_hot(logits.argmax(axis=1), loss.out_dim)
        else:
            useful_targets[loss.name] = signal + loss.noise * rng.standard_normal(signal.shape)

    targets = []
    for loss in spec.losses:
        if loss.link == "useful":
            targets.append(useful_targets[loss.name])
            continue
        rng = make_rng(spec.seed, "tasks", "loss", loss.name)
        if loss.link == "redundant":
            scale = rng.uniform(0.5, 2.0)
            shift = rng.standard_normal(loss.out_dim)
            src = useful_targets[loss.source]
            targets.append(scale * src + shift + loss.noise * rng.standard_normal(src.shape))
        else:
            # learnable, but independent of the latent and hence of the label
            mix = rng.standard_normal((r.shape[1], loss.out_dim))
            generative[f"mix/{loss.name}"] = mix
            signal = np.tanh(r @ mix)
            if loss.kind == "cross_entropy":
                logits = signal + loss.noise * rng.gumbel(size=signal.shape)
                targets.append(_one_hot(logits.argmax(axis=1), loss.out_dim))
            else:
                targets.append(signal + loss.noise * rng.standard_normal(signal.shape))

    down = make_rng(spec.seed, "tasks", "downstream")
    direction = down.standard_normal(spec.latent_dim)
    direction /= np.linalg.norm(direction)
    generative["downstream_direction"] = direction
    score = s @ direction
    score = score / score.std()
    if spec.downstream_kind == "binary":
        prob = 1.0 / (1.0 + np.exp(-spec.label_sharpness * score))
        labels = _one_hot((down.random(n) < prob).astype(int), 2)
    else:
        labels = (score + spec.label_noise * down.standard_normal(n)).reshape(-1, 1)

    mask_rng = make_rng(spec.seed, "tasks", "labeled")
    mask = np.ones(n, dtype=bool)
    if spec.labeled_fraction < 1.0:
        mask = mask_rng.random(n) < spec.labeled_fraction
        if not mask[: spec.n_train].any():
            mask[0] = True

    full = Batch(inputs=X, targets=targets, labels=labels, labeled_mask=mask)
    train_idx = np.arange(spec.n_train)
    val_idx = np.arange(spec.n_train, n)
    val = full.take(val_idx)
    # every validation row carries its label for evaluation
    val.labeled_mask = np.ones(spec.n_val, dtype=bool)
    logger.debug(
        "generated task: K=%d, n_train=%d, labeled=%d",
        spec.K,
        spec.n_train,
        int(mask[: spec.n_train].sum()),
    )
    return Dataset(
        spec=spec,
        train=full.take(train_idx),
        val=val,
        latent_train=s[train_idx],
        latent_val=s[val_idx],
        generative=generative,
    )


def shuffle_indices(n: int, rng: np.random.Generator) -> np.ndarray:
    """Fisher-Yates shuffle driven by ``rng.integers``."""
    idx = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        idx[i], idx[j] = idx[j], idx[i]
    return idx


def batches(
    data: Batch, batch_size: Optional[int], rng: np.random.Generator
) -> Iterator[Batch]:
    """
    One epoch of shuffled minibatches; the last batch may be smaller.

    ``batch_size=None`` (or ``>= len``) yields the full batch once, unshuffled.
    """
    if batch_size is not None and batch_size < 1:
        raise ContractViolation(f"batch_size must be >= 1, got {batch_size}")
    if batch_size is None or batch_size >= data.size:
        yield data
        return
    order = shuffle_indices(data.size, rng)
    for start in range(0, data.size, batch_size):
        yield data.take(order[start : start + batch_size])
