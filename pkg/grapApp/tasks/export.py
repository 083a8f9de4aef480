"""
Columnar text export of a Dataset.

One CSV row per sample with a ``split`` column; inputs as ``x_<j>``, targets as
``t_<loss>_<j>``, downstream labels as ``y_<j>`` and the ``labeled`` flag.
Floats use 17 significant digits, so import reproduces every value exactly.
"""

from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from grapApp.model import Batch

from .generator import Dataset, TaskSpec

FLOAT_FORMAT = "%.17g"


def _frame(batch: Batch, spec: TaskSpec, split: str) -> pd.DataFrame:
    columns = {"split": [split] * batch.size}
    for j in range(batch.inputs.shape[1]):
        columns[f"x_{j}"] = batch.inputs[:, j]
    for loss, target in zip(spec.losses, batch.targets):
        for j in range(target.shape[1]):
            columns[f"t_{loss.name}_{j}"] = target[:, j]
    for j in range(batch.labels.shape[1]):
        columns[f"y_{j}"] = batch.labels[:, j]
    columns["labeled"] = batch.labeled_mask.astype(int)
    return pd.DataFrame(columns)


def export_dataset(dataset: Dataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.concat(
        [
            _frame(dataset.train, dataset.spec, "train"),
            _frame(dataset.val, dataset.spec, "val"),
        ],
        ignore_index=True,
    )
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def _batch(frame: pd.DataFrame, spec: TaskSpec) -> Batch:
    inputs = frame[[f"x_{j}" for j in range(spec.n_features)]].to_numpy(np.float64)
    targets = []
    for loss in spec.losses:
        cols = [f"t_{loss.name}_{j}" for j in range(loss.out_dim)]
        targets.append(frame[cols].to_numpy(np.float64))
    labels = frame[[f"y_{j}" for j in range(spec.downstream_out_dim)]].to_numpy(np.float64)
    return Batch(
        inputs=inputs,
        targets=targets,
        labels=labels,
        labeled_mask=frame["labeled"].to_numpy().astype(bool),
    )


def import_batches(path: Union[str, Path], spec: TaskSpec) -> tuple[Batch, Batch]:
    """Reads back the (train, val) batches written by :func:`export_dataset`."""
    frame = pd.read_csv(path, float_precision="round_trip")
    train = frame[frame["split"] == "train"].reset_index(drop=True)
    val = frame[frame["split"] == "val"].reset_index(drop=True)
    return _batch(train, spec), _batch(val, spec)
