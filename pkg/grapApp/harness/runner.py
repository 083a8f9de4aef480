"""
The per-minibatch training loop.

Every method goes through the same three stages per step: embedding-space
gradients, a method-specific cotangent, and the composite parameter update.
The downstream head trains throughout; its gradient never reaches the backbone.
"""

import logging
import time
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd

from grapApp.core import make_rng
from grapApp.errors import NonFiniteError, NumericalError
from grapApp.model import (
    CompositeModel,
    apply_cotangent_update,
    compute_embedding_grads,
    evaluate_downstream,
    evaluate_probe,
    save_checkpoint,
)
from grapApp.tasks import Dataset, batches, generate
from grapApp.tuner import median_weights

from .utils.methods import create_method
from .utils.state import FLOAT_FORMAT, RunConfig, RunResult, RunSummary, Trajectory

logger = logging.getLogger(__name__)


def build_model(config: RunConfig) -> CompositeModel:
    task = config.task
    return CompositeModel.init(
        n_features=task.n_features,
        d=task.d,
        head_out_dims=[loss.out_dim for loss in task.losses],
        loss_kinds=[loss.kind for loss in task.losses],
        downstream_out_dim=task.downstream_out_dim,
        downstream_loss_kind=task.downstream_loss_kind,
        rng=make_rng(config.seed, "model", "init"),
        hidden=config.model.hidden,
        activation=config.model.activation,
        head_hidden=config.model.head_hidden,
    )


def run(config: RunConfig, dataset: Optional[Dataset] = None) -> RunResult:
    """Trains one model under ``config`` and returns its trajectory and summary."""
    dataset = dataset or generate(config.task)
    K = config.task.K
    model = build_model(config)
    method = create_method(config.method, K, config.lr_w, make_rng(config.seed, "method"))
    batch_rng = make_rng(config.seed, "batches")
    trajectory = Trajectory(K)

    logger.info(
        "run start: method=%s K=%d steps=%d seed=%d",
        config.method.name,
        K,
        config.steps,
        config.seed,
    )
    step, degenerate_events, timings = 0, 0, []
    while step < config.steps:
        for batch in batches(dataset.train, config.batch_size, batch_rng):
            step += 1
            started = time.perf_counter_ns()
            try:
                grads = compute_embedding_grads(model, batch, require_downstream=False)
                out = method.step(grads, step)
                model = apply_cotangent_update(
                    model, grads, out.cotangent, config.lr, config.head_lr, config.down_lr
                )
            except NonFiniteError as exc:
                raise NumericalError(
                    "training diverged", loss_index=exc.loss_index, step=step
                ) from exc
            elapsed_us = (time.perf_counter_ns() - started) / 1000.0
            timings.append(elapsed_us)
            degenerate_events += int(out.degenerate)

            if step % config.eval_every == 0 or step == config.steps:
                loss_val, metric_val = evaluate_downstream(model, dataset.val)
                if not np.isfinite(loss_val):
                    raise NumericalError("validation loss is not finite", step=step)
                trajectory.append(
                    step=step,
                    weights=out.weights,
                    losses=grads.losses,
                    loss_down_train=grads.loss_down,
                    loss_down_val=loss_val,
                    metric_val=metric_val,
                    cosine=out.cosine,
                    comp_norm=out.comp_norm,
                    step_us=elapsed_us if config.record_timing else 0.0,
                )
                logger.debug(
                    "step %d: val_loss=%.4f metric=%.4f cosine=%.4f",
                    step,
                    loss_val,
                    metric_val,
                    out.cosine,
                )
            if step >= config.steps:
                break

    last = trajectory.rows[-1]
    probe_metric_val, _ = evaluate_probe(model, dataset.train, dataset.val)
    summary = RunSummary(
        method=config.method.name,
        seed=config.seed,
        labeled_fraction=config.task.labeled_fraction,
        steps=config.steps,
        final_loss_val=last["loss_down_val"],
        final_metric_val=last["metric_val"],
        probe_metric_val=probe_metric_val,
        median_weights=median_weights(
            trajectory.weights(), config.method.burn_in
        ).tolist(),
        degenerate_events=degenerate_events,
        mean_step_us=float(np.mean(timings)) if config.record_timing else 0.0,
        config_hash=config.config_hash(),
    )
    logger.info(
        "run end: method=%s metric_val=%.4f probe=%.4f degenerate_events=%d",
        summary.method,
        summary.final_metric_val,
        summary.probe_metric_val,
        degenerate_events,
    )
    return RunResult(config=config, trajectory=trajectory, model=model, summary=summary)


def write_outputs(result: RunResult, output_dir: Union[str, Path]) -> Dict[str, Path]:
    """trajectory.csv, summary.csv, config.yaml (resolved, with hash) and model.npz."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "trajectory": result.trajectory.to_csv(out / "trajectory.csv"),
        "summary": out / "summary.csv",
        "config": out / "config.yaml",
        "model": save_checkpoint(
            result.model, out / "model.npz", result.summary.config_hash
        ),
    }
    pd.DataFrame([result.summary.to_row()]).to_csv(
        paths["summary"], index=False, float_format=FLOAT_FORMAT
    )
    paths["config"].write_text(result.config.to_yaml(), encoding="utf-8")
    return paths
