import pytest

from grapApp.errors import ConfigError
from grapApp.harness.experiments import (
    EXPERIMENT_LR_W,
    EXPERIMENTS,
    SEEDS,
    cost_scaling,
    default_base,
    determinism,
    downstream_benefit,
    labeled_fraction_robustness,
    redundant_suppression,
    run_experiments,
)
from grapApp.tasks import LossSpec, TaskSpec

pytestmark = pytest.mark.slow


def test_determinism_passes_on_a_small_run(small_config):
    result = determinism(small_config, seeds=(0, 3))
    assert result.name == "determinism"
    assert result.passed
    assert result.n_instances == 2
    assert result.n_failures == 0


def test_redundant_suppression_needs_a_noise_loss(small_config):
    task = TaskSpec(
        n_features=6,
        d=4,
        n_train=64,
        n_val=32,
        losses=[LossSpec(name="a"), LossSpec(name="b")],
    )
    with pytest.raises(ConfigError):
        redundant_suppression(small_config.model_copy(update={"task": task}))


def test_redundant_suppression_reports_one_ratio_per_seed(small_config):
    result = redundant_suppression(small_config, seeds=(0, 1))
    assert result.n_instances == 2
    assert result.worst >= 0.0
    assert result.detail.startswith("noise/useful ratios")


def test_labeled_fraction_robustness_groups_by_fraction(small_config):
    result = labeled_fraction_robustness(small_config, seeds=(0,), fractions=(0.5, 1.0))
    assert result.n_instances == 2
    assert result.worst >= 0.0
    assert "0.5:" in result.detail and "1:" in result.detail


def test_downstream_benefit_reports_all_three_means(small_config):
    result = downstream_benefit(small_config, seeds=(0,))
    for name in ("equal=", "grap=", "tuned="):
        assert name in result.detail


def test_run_experiments_by_name(small_config):
    results = run_experiments(["determinism"], base=small_config)
    assert [r.name for r in results] == ["determinism"]
    assert results[0].passed


def test_default_base_tunes_weights_faster():
    base = default_base()
    assert base.method.name == "grap"
    assert base.lr_w == EXPERIMENT_LR_W


# ----- full-size runs -----


def test_noise_loss_is_suppressed_on_most_seeds():
    result = redundant_suppression(seeds=SEEDS)
    assert result.passed, result.detail


def test_grap_and_tuned_weights_do_not_hurt_downstream():
    result = downstream_benefit(seeds=SEEDS)
    assert result.passed, result.detail


def test_probe_metric_is_flat_across_labeled_fractions():
    result = labeled_fraction_robustness(seeds=SEEDS)
    assert result.passed, result.detail


def test_naive_cost_grows_with_K_and_embedding_cost_does_not():
    result = cost_scaling()
    assert result.passed, result.detail


def test_unknown_experiment_raises():
    with pytest.raises(KeyError):
        run_experiments(["nope"])
    assert set(EXPERIMENTS) == {"redundant", "downstream", "fraction", "cost", "determinism"}
