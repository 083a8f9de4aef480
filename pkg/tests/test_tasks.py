import numpy as np
import pytest
from pydantic import ValidationError

from grapApp.core import make_rng
from grapApp.errors import ContractViolation
from grapApp.model import fit_linear_probe, probe_metric
from grapApp.tasks import (
    LossSpec,
    TaskSpec,
    batches,
    export_dataset,
    generate,
    import_batches,
    shuffle_indices,
)


@pytest.fixture
def spec():
    return TaskSpec(n_features=6, d=4, n_train=300, n_val=100, seed=3)


def test_generation_is_deterministic(spec):
    a, b = generate(spec), generate(spec)
    np.testing.assert_array_equal(a.train.inputs, b.train.inputs)
    for ta, tb in zip(a.train.targets, b.train.targets):
        np.testing.assert_array_equal(ta, tb)
    np.testing.assert_array_equal(a.val.labels, b.val.labels)


def test_seed_changes_data(spec):
    other = spec.model_copy(update={"seed": 4})
    assert not np.array_equal(generate(spec).train.inputs, generate(other).train.inputs)


def test_splits_have_requested_sizes(spec):
    data = generate(spec)
    assert data.train.size == 300
    assert data.val.size == 100
    assert len(data.train.targets) == spec.K
    assert data.train.labels.shape == (300, 2)
    # train and val rows are different samples
    assert not np.any(np.all(data.train.inputs[:, None, :] == data.val.inputs[None, :, :], axis=2))


def test_labeled_fraction(spec):
    data = generate(spec.model_copy(update={"labeled_fraction": 0.1, "n_train": 2000}))
    assert 0.05 < data.train.labeled_mask.mean() < 0.15
    assert data.val.labeled_mask.all()


def test_redundant_targets_track_their_source():
    data = generate(TaskSpec(n_train=2000, n_val=10))
    names = [loss.name for loss in data.spec.losses]
    src = data.train.targets[names.index("useful_a")]
    red = data.train.targets[names.index("redundant_a")]
    noise = data.train.targets[names.index("noise")]
    for j in range(src.shape[1]):
        assert abs(np.corrcoef(src[:, j], red[:, j])[0, 1]) > 0.95
        assert abs(np.corrcoef(src[:, j], noise[:, j])[0, 1]) < 0.15


def test_noise_targets_carry_no_label_information():
    data = generate(TaskSpec(n_train=100_000, n_val=10, seed=1))
    names = [loss.name for loss in data.spec.losses]
    noise = data.train.targets[names.index("noise")]
    label = data.train.labels[:, 1]
    for j in range(noise.shape[1]):
        assert abs(np.corrcoef(noise[:, j], label)[0, 1]) < 0.02
    # but they are learnable from the inputs
    coef = fit_linear_probe(data.train.inputs, noise)
    assert probe_metric("squared_error", coef, data.train.inputs, noise) < noise.std()


def test_latent_predicts_the_label_linearly():
    data = generate(TaskSpec(n_train=20_000, n_val=20_000, seed=2))
    coef = fit_linear_probe(data.latent_train, data.train.labels)
    assert probe_metric("cross_entropy", coef, data.latent_val, data.val.labels) >= 0.9


def test_reordering_losses_permutes_targets():
    spec = TaskSpec(n_train=80, n_val=20, seed=5)
    flipped = spec.model_copy(update={"losses": list(reversed(spec.losses))})
    a, b = generate(spec), generate(flipped)
    for k, target in enumerate(a.train.targets):
        np.testing.assert_array_equal(target, b.train.targets[spec.K - 1 - k])
    np.testing.assert_array_equal(a.train.labels, b.train.labels)
    np.testing.assert_array_equal(a.train.inputs, b.train.inputs)


def test_cross_entropy_targets_are_one_hot():
    data = generate(TaskSpec(n_train=50, n_val=10))
    kinds = [loss.kind for loss in data.spec.losses]
    target = data.train.targets[kinds.index("cross_entropy")]
    np.testing.assert_array_equal(target.sum(axis=1), np.ones(50))


def test_regression_downstream():
    data = generate(TaskSpec(n_train=40, n_val=10, downstream_kind="regression"))
    assert data.train.labels.shape == (40, 1)


@pytest.mark.parametrize(
    "losses",
    [
        [LossSpec(name="a"), LossSpec(name="a")],
        [LossSpec(name="n", link="noise")],
        [LossSpec(name="a"), LossSpec(name="r", link="redundant", source="missing")],
        [LossSpec(name="a", out_dim=2), LossSpec(name="r", link="redundant", source="a", out_dim=3)],
    ],
)
def test_invalid_loss_lists(losses):
    with pytest.raises(ValidationError):
        TaskSpec(losses=losses)


def test_unknown_fields_are_rejected():
    with pytest.raises(ValidationError):
        TaskSpec(n_rows=3)


def test_useful_loss_factory():
    spec = TaskSpec.with_useful_losses(5, n_train=10, n_val=5)
    assert spec.K == 5
    assert all(loss.link == "useful" for loss in spec.losses)


# ----- batching -----


def test_shuffle_is_a_permutation():
    idx = shuffle_indices(50, make_rng(0, "batches"))
    np.testing.assert_array_equal(np.sort(idx), np.arange(50))


def test_shuffle_matches_reference_fisher_yates():
    reference = make_rng(5, "batches")
    expected = list(range(30))
    for i in range(29, 0, -1):
        j = int(reference.integers(0, i + 1))
        expected[i], expected[j] = expected[j], expected[i]
    assert shuffle_indices(30, make_rng(5, "batches")).tolist() == expected


def test_batches_cover_every_row_once(spec):
    data = generate(spec)
    parts = list(batches(data.train, 64, make_rng(0, "batches")))
    assert [p.size for p in parts] == [64, 64, 64, 64, 44]
    seen = np.concatenate([p.inputs for p in parts])
    order = np.lexsort(seen.T)
    np.testing.assert_array_equal(seen[order], data.train.inputs[np.lexsort(data.train.inputs.T)])


def test_full_batch(spec):
    data = generate(spec)
    parts = list(batches(data.train, None, make_rng(0)))
    assert len(parts) == 1
    assert parts[0] is data.train


def test_bad_batch_size(spec):
    with pytest.raises(ContractViolation):
        list(batches(generate(spec).train, 0, make_rng(0)))


# ----- export -----


def test_export_reads_back_exactly(spec, tmp_path):
    data = generate(spec.model_copy(update={"labeled_fraction": 0.5}))
    path = export_dataset(data, tmp_path / "data.csv")
    train, val = import_batches(path, spec)
    np.testing.assert_array_equal(train.inputs, data.train.inputs)
    for a, b in zip(train.targets, data.train.targets):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(train.labeled_mask, data.train.labeled_mask)
    np.testing.assert_array_equal(val.labels, data.val.labels)
