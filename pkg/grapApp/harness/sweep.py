"""
Multi-run sweeps: seeds, labeled fractions and a coarse fixed-weight grid.

Runs are independent and may execute on a thread pool; results come back in
input order so the aggregated table does not depend on scheduling.
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import pandas as pd

from grapApp.config import config as settings
from grapApp.database import RunRepository

from .runner import run
from .utils.state import FLOAT_FORMAT, MethodSpec, RunConfig, RunSummary

logger = logging.getLogger(__name__)

SweepEntry = Tuple[str, RunConfig]

SUMMARY_METRICS = ["final_metric_val", "probe_metric_val", "final_loss_val", "degenerate_events"]


# ----- Config builders -----


def seed_configs(base: RunConfig, seeds: Sequence[int], label: Optional[str] = None) -> List[SweepEntry]:
    label = label or base.method.name
    return [(label, base.with_seed(seed)) for seed in seeds]


def labeled_fraction_configs(
    base: RunConfig, fractions: Sequence[float], seeds: Sequence[int] = (0,)
) -> List[SweepEntry]:
    entries = []
    for fraction in fractions:
        task = base.task.model_copy(update={"labeled_fraction": float(fraction)})
        config = base.model_copy(update={"task": task})
        entries += seed_configs(config, seeds, f"{base.method.name}@{fraction:g}")
    return entries


def grid_search_configs(
    base: RunConfig, levels: Sequence[float] = (0.0, 0.5, 1.0)
) -> List[SweepEntry]:
    """One fixed-weight run per grid point in ``levels ** K``, skipping the all-zero point."""
    entries = []
    for point in itertools.product(levels, repeat=base.task.K):
        if not any(v > 0 for v in point):
            continue
        method = MethodSpec(
            **{**base.method.model_dump(), "name": "fixed", "fixed_weights": list(point)}
        )
        label = "fixed:" + ",".join(f"{v:g}" for v in point)
        entries.append((label, base.model_copy(update={"method": method})))
    return entries


# ----- Execution -----


def run_cached(config: RunConfig, repository: Optional[RunRepository] = None) -> RunSummary:
    """Summary of ``config``, from the repository when that run already finished."""
    if repository is not None:
        cached = repository.get(config.config_hash())
        if cached is not None:
            logger.debug("cache hit for %s", config.config_hash()[:12])
            return cached
    summary = run(config).summary
    if repository is not None:
        repository.save(summary)
    return summary


def run_rows(
    entries: Sequence[SweepEntry],
    workers: Optional[int] = None,
    repository: Optional[RunRepository] = None,
) -> pd.DataFrame:
    """One row per run, in the order of ``entries``."""
    workers = workers or settings.SWEEP_WORKERS
    total = len(entries)

    def _one(index: int, entry: SweepEntry) -> dict:
        label, config = entry
        summary = run_cached(config, repository)
        logger.info("sweep %d/%d done: %s seed=%d", index + 1, total, label, config.seed)
        return {"label": label, **summary.to_row()}

    if workers <= 1:
        rows = [_one(i, e) for i, e in enumerate(entries)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_one, range(total), entries))
    return pd.DataFrame(rows)


def aggregate(rows: pd.DataFrame) -> pd.DataFrame:
    """
    Mean and sample standard deviation per label (std is 0 for a single run).
    """
    weight_cols = [c for c in rows.columns if c.startswith("median_w_")]
    metrics = [c for c in SUMMARY_METRICS + weight_cols if c in rows.columns]
    grouped = rows.groupby("label", sort=False)
    means = grouped[metrics].mean()
    stds = grouped[metrics].std(ddof=1).fillna(0.0)
    table = pd.DataFrame({"n_runs": grouped.size()})
    for col in metrics:
        table[f"{col}_mean"] = means[col]
        table[f"{col}_std"] = stds[col]
    return table.reset_index()


def sweep(
    entries: Sequence[SweepEntry],
    workers: Optional[int] = None,
    repository: Optional[RunRepository] = None,
    output_dir: Optional[Union[str, Path]] = None,
) -> pd.DataFrame:
    """Runs every entry and returns the aggregated table (also written when ``output_dir`` is set)."""
    rows = run_rows(entries, workers, repository)
    table = aggregate(rows)
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows.to_csv(out / "runs.csv", index=False, float_format=FLOAT_FORMAT)
        table.to_csv(out / "sweep_summary.csv", index=False, float_format=FLOAT_FORMAT)
    return table
