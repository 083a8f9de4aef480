"""
Checkpoint files for a CompositeModel.

A checkpoint is a ``numpy.savez`` archive. Every parameter block lives under
``<part>/<layer>/<weight|bias>`` and a JSON ``__meta__`` entry records the
format version, the architecture (activations, loss kinds) and the hash of
the run config that produced it. Arrays are stored as raw float64, so a
save/load cycle is bit-exact.
"""

import json
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from grapApp.core.mlp import Layer, MlpParams
from grapApp.errors import ContractViolation

from .composite import CompositeModel

FORMAT_VERSION = 1


def _parts(model: CompositeModel):
    yield "backbone", model.backbone
    for k, head in enumerate(model.heads):
        yield f"head_{k}", head
    yield "downstream", model.downstream_head


def save_checkpoint(
    model: CompositeModel, path: Union[str, Path], config_hash: str = ""
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {}
    activations = {}
    for part, params in _parts(model):
        activations[part] = [layer.activation for layer in params.layers]
        for i, layer in enumerate(params.layers):
            arrays[f"{part}/{i}/weight"] = layer.weight
            arrays[f"{part}/{i}/bias"] = layer.bias
    meta = {
        "format_version": FORMAT_VERSION,
        "config_hash": config_hash,
        "K": model.K,
        "loss_kinds": list(model.loss_kinds),
        "downstream_loss_kind": model.downstream_loss_kind,
        "activations": activations,
    }
    arrays["__meta__"] = np.array(json.dumps(meta, sort_keys=True))
    # write through a handle so numpy keeps the exact file name
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(
    path: Union[str, Path], expected_hash: Optional[str] = None
) -> Tuple[CompositeModel, str]:
    """Returns the model and the config hash stored with it."""
    with np.load(Path(path), allow_pickle=False) as archive:
        meta = json.loads(str(archive["__meta__"]))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ContractViolation(
                f"unsupported checkpoint version {meta.get('format_version')}"
            )
        if expected_hash is not None and meta["config_hash"] != expected_hash:
            raise ContractViolation(
                f"checkpoint config hash {meta['config_hash']} != {expected_hash}"
            )

        def _load(part: str) -> MlpParams:
            return MlpParams(
                [
                    Layer(
                        weight=archive[f"{part}/{i}/weight"],
                        bias=archive[f"{part}/{i}/bias"],
                        activation=act,
                    )
                    for i, act in enumerate(meta["activations"][part])
                ]
            )

        model = CompositeModel(
            backbone=_load("backbone"),
            heads=[_load(f"head_{k}") for k in range(meta["K"])],
            downstream_head=_load("downstream"),
            loss_kinds=meta["loss_kinds"],
            downstream_loss_kind=meta["downstream_loss_kind"],
        )
    return model, meta["config_hash"]
