"""
Desk-scale experiments run by ``grap verify --experiments``.

These train real models for minutes, so the unit tests only run shrunken
versions of them.
"""

import logging
import time
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from grapApp.database import RunRepository
from grapApp.errors import ConfigError, VerificationError
from grapApp.oracles import SuiteResult
from grapApp.tuner import median_weights

from .benchmark import benchmark
from .graph import run_tuned
from .runner import run
from .sweep import labeled_fraction_configs, run_rows, seed_configs
from .utils.state import FLOAT_FORMAT, MethodSpec, RunConfig

logger = logging.getLogger(__name__)

SEEDS = (0, 1, 2, 3)
FRACTIONS = (0.05, 0.1, 0.2, 0.5, 1.0)
ACCURACY_POINT = 0.01
EXPERIMENT_LR_W = 2.0


def default_base() -> RunConfig:
    """Desk-scale grap config the experiments run when no base is given."""
    return RunConfig(method=MethodSpec(name="grap", lr_w=EXPERIMENT_LR_W))


def _result(name: str, passed: bool, n: int, failures: int, worst: float, started: float, detail: str) -> SuiteResult:
    result = SuiteResult(
        name=name,
        passed=passed,
        n_instances=n,
        n_failures=failures,
        worst=float(worst),
        seconds=time.perf_counter() - started,
        detail=detail,
    )
    logger.log(
        logging.INFO if passed else logging.ERROR,
        "experiment %s: %s (%s)",
        name,
        "pass" if passed else "FAIL",
        detail,
    )
    return result


def _with_method(base: RunConfig, name: str) -> RunConfig:
    return base.model_copy(update={"method": base.method.model_copy(update={"name": name})})


def redundant_suppression(base: Optional[RunConfig] = None, seeds: Sequence[int] = SEEDS, **_) -> SuiteResult:
    """Noise-loss median weight over the second half stays below a tenth of the useful mean."""
    started = time.perf_counter()
    base = _with_method(base or default_base(), "grap")
    links = [loss.link for loss in base.task.losses]
    noise = [k for k, link in enumerate(links) if link == "noise"]
    useful = [k for k, link in enumerate(links) if link == "useful"]
    if not noise:
        raise ConfigError("redundant_suppression needs a task with a noise loss")
    ratios = []
    for seed in seeds:
        result = run(base.with_seed(seed))
        w = median_weights(result.trajectory.weights(), burn_in=0.5)
        ratios.append(float(w[noise].max() / max(w[useful].mean(), 1e-12)))
    hits = sum(r < 0.1 for r in ratios)
    needed = len(seeds) - 1 if len(seeds) > 1 else 1
    return _result(
        "redundant_suppression",
        hits >= needed,
        len(seeds),
        len(seeds) - hits,
        max(ratios),
        started,
        "noise/useful ratios " + ", ".join(f"{r:.3f}" for r in ratios),
    )


def downstream_benefit(
    base: Optional[RunConfig] = None,
    seeds: Sequence[int] = SEEDS,
    workers: int = 1,
    repository: Optional[RunRepository] = None,
) -> SuiteResult:
    """
    grap >= equal - 0.5 points, and tuned >= grap - 0.5 points, averaged over seeds.

    Scored by the linear probe on the final frozen embeddings.
    """
    started = time.perf_counter()
    base = base or default_base()
    means: Dict[str, float] = {}
    for name in ("equal", "grap"):
        rows = run_rows(seed_configs(_with_method(base, name), seeds), workers, repository)
        means[name] = float(rows["probe_metric_val"].mean())
    tuned = []
    for seed in seeds:
        state = run_tuned(_with_method(base, "grap").with_seed(seed))
        if state.get("error"):
            raise VerificationError(f"tuned flow failed for seed {seed}: {state['error']}")
        tuned.append(state["retrain_result"].summary.probe_metric_val)
    means["tuned"] = float(np.mean(tuned))
    tol = 0.5 * ACCURACY_POINT
    gaps = [means["grap"] - means["equal"], means["tuned"] - means["grap"]]
    passed = all(g >= -tol for g in gaps)
    return _result(
        "downstream_benefit",
        passed,
        len(seeds),
        sum(g < -tol for g in gaps),
        min(gaps),
        started,
        ", ".join(f"{k}={v:.4f}" for k, v in means.items()),
    )


def labeled_fraction_robustness(
    base: Optional[RunConfig] = None,
    seeds: Sequence[int] = SEEDS,
    fractions: Sequence[float] = FRACTIONS,
    workers: int = 1,
    repository: Optional[RunRepository] = None,
) -> SuiteResult:
    """Seed-averaged grap probe metric varies by at most 3 points across labeled fractions."""
    started = time.perf_counter()
    base = _with_method(base or default_base(), "grap")
    rows = run_rows(labeled_fraction_configs(base, fractions, seeds), workers, repository)
    per_fraction = rows.groupby("labeled_fraction", sort=True)["probe_metric_val"].mean()
    spread = float(per_fraction.max() - per_fraction.min())
    return _result(
        "labeled_fraction_robustness",
        spread <= 3 * ACCURACY_POINT,
        len(per_fraction),
        int(spread > 3 * ACCURACY_POINT),
        spread,
        started,
        ", ".join(f"{f:g}:{m:.4f}" for f, m in per_fraction.items()),
    )


def cost_scaling(base: Optional[RunConfig] = None, ks: Sequence[int] = (2, 4, 8, 16), **_) -> SuiteResult:
    """Naive per-step cost grows with K (slope >= 0.7); embedding-space cost barely does (<= 0.2)."""
    started = time.perf_counter()
    report = benchmark(ks=ks, base=base)
    naive, embedding = report.slopes["naive"], report.slopes["embedding"]
    overhead = report.overhead["embedding"]
    passed = naive >= 0.7 and embedding <= 0.2
    return _result(
        "cost_scaling",
        passed,
        len(ks),
        int(naive < 0.7) + int(embedding > 0.2),
        embedding,
        started,
        f"slopes naive={naive:.2f} embedding={embedding:.2f}; embedding overhead "
        + ", ".join(f"K={k}:{r:.2f}x" for k, r in overhead.items()),
    )


def determinism(base: Optional[RunConfig] = None, seeds: Sequence[int] = (0,), **_) -> SuiteResult:
    """Two runs of the same config give byte-identical trajectory CSV text."""
    started = time.perf_counter()
    base = base or RunConfig(steps=200)
    mismatches = 0
    for seed in seeds:
        config = base.with_seed(seed)
        texts = [
            run(config).trajectory.to_frame().to_csv(index=False, float_format=FLOAT_FORMAT)
            for _ in range(2)
        ]
        mismatches += int(texts[0] != texts[1])
    return _result(
        "determinism",
        mismatches == 0,
        len(seeds),
        mismatches,
        mismatches,
        started,
        f"{mismatches} differing trajectories",
    )


EXPERIMENTS: Dict[str, Callable[..., SuiteResult]] = {
    "redundant": redundant_suppression,
    "downstream": downstream_benefit,
    "fraction": labeled_fraction_robustness,
    "cost": cost_scaling,
    "determinism": determinism,
}


def run_experiments(
    names: Optional[Sequence[str]] = None,
    base: Optional[RunConfig] = None,
    workers: int = 1,
    repository: Optional[RunRepository] = None,
) -> List[SuiteResult]:
    names = list(names or EXPERIMENTS)
    unknown = [n for n in names if n not in EXPERIMENTS]
    if unknown:
        raise KeyError(f"unknown experiments: {unknown}")
    return [
        EXPERIMENTS[name](base=base, workers=workers, repository=repository)
        for name in names
    ]
