import numpy as np
import pytest

from conftest import numerical_grad
from grapApp.errors import ContractViolation, DegenerateNormError
from grapApp.tuner import (
    NormalizationMode,
    WeightVector,
    alignment_gradient,
    alignment_objective,
    distance_objective,
    hypergradient,
    normalized_weights,
    weight_step,
)

COMPOSITE = NormalizationMode(kind="composite_grad")
DETACHED = NormalizationMode(kind="composite_grad", detach_norm=True)


# ----- hypergradient -----


def test_hypergradient_single_step():
    G = np.array([[1.0, 2.0, 0.0]])
    np.testing.assert_allclose(hypergradient(G, [3.0, -1.0, 1.0], lr=0.1), [-0.1])


def test_hypergradient_zero_downstream():
    G = np.arange(6.0).reshape(2, 3)
    assert not hypergradient(G, np.zeros(3), lr=0.5).any()


def test_hypergradient_orthogonal_rows():
    G = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0]])
    out = hypergradient(G, G[0], lr=0.1)
    assert out[0] != 0.0
    assert out[1] == 0.0 and out[2] == 0.0


@pytest.mark.parametrize("lr", [0.0, -1.0])
def test_hypergradient_rejects_nonpositive_lr(lr):
    with pytest.raises(ContractViolation):
        hypergradient(np.eye(2), np.ones(2), lr)


def test_hypergradient_shape_mismatch():
    with pytest.raises(ContractViolation):
        hypergradient(np.eye(2), np.ones(3), 0.1)


# ----- alignment objective -----


def test_objective_single_loss_is_projection_length():
    G = np.array([[3.0, 4.0]])
    g_down = np.array([1.0, 2.0])
    assert alignment_objective([1.0], G, g_down, COMPOSITE) == pytest.approx(11.0 / 5.0)


def test_objective_perfect_alignment():
    G = np.eye(2)
    g_down = np.array([3.0, 4.0]) / 5.0
    assert alignment_objective([3.0, 4.0], G, g_down, COMPOSITE) == pytest.approx(1.0, abs=1e-12)
    assert alignment_objective([1.0, 1.0], G, g_down, COMPOSITE) == pytest.approx(
        7.0 / (5.0 * np.sqrt(2.0)), abs=1e-12
    )


def test_objective_normalization_modes():
    G = np.array([[1.0, 0.0], [0.0, 2.0]])
    g_down = np.array([1.0, 1.0])
    w = np.array([1.0, 3.0])
    a = G @ g_down
    assert alignment_objective(w, G, g_down, NormalizationMode(kind="none")) == pytest.approx(w @ a)
    assert alignment_objective(w, G, g_down, NormalizationMode(kind="weight_sum")) == pytest.approx(w @ a / 4.0)
    assert alignment_objective(w, G, g_down, NormalizationMode(kind="weight_norm")) == pytest.approx(
        w @ a / np.sqrt(10.0)
    )


def test_objective_is_scale_invariant(rng):
    G = rng.standard_normal((4, 9))
    g_down = rng.standard_normal(9)
    w = rng.uniform(0.1, 2.0, 4)
    base = alignment_objective(w, G, g_down, COMPOSITE)
    for c in (1e-3, 0.5, 7.0, 1e4):
        assert alignment_objective(c * w, G, g_down, COMPOSITE) == pytest.approx(base, abs=1e-12)


def test_objective_rejects_negative_weights():
    with pytest.raises(ContractViolation):
        alignment_objective([1.0, -0.1], np.eye(2), np.ones(2), COMPOSITE)


def test_objective_degenerate_norm():
    with pytest.raises(DegenerateNormError):
        alignment_objective([1.0, 1.0], np.zeros((2, 3)), np.ones(3), COMPOSITE)


def test_distance_form_matches_objective(rng):
    for _ in range(20):
        G = rng.standard_normal((3, 5))
        g_down = rng.standard_normal(5)
        w = rng.uniform(0.0, 2.0, 3)
        expected = 1.0 + g_down @ g_down - 2.0 * alignment_objective(w, G, g_down, COMPOSITE)
        assert distance_objective(w, G, g_down) == pytest.approx(expected, abs=1e-10)


# ----- normalized weights -----


def test_normalized_weights_single_loss():
    np.testing.assert_allclose(normalized_weights([1.0], [[0.0, 2.0]]), [0.5])


def test_normalized_weights_unit_composite(rng):
    G = rng.standard_normal((5, 12))
    w = rng.uniform(0.0, 3.0, 5)
    w_bar = normalized_weights(w, G)
    assert np.linalg.norm(w_bar @ G) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(normalized_weights(4.0 * w, G), w_bar, rtol=1e-12)


# ----- gradients -----


@pytest.mark.parametrize("kind", ["composite_grad", "weight_sum", "weight_norm", "none"])
def test_alignment_gradient_matches_finite_differences(rng, kind):
    G = rng.standard_normal((4, 7))
    g_down = rng.standard_normal(7)
    w = rng.uniform(0.3, 2.0, 4)
    mode = NormalizationMode(kind=kind)
    analytic = alignment_gradient(w, G, g_down, mode)
    fd = numerical_grad(lambda v: alignment_objective(v, G, g_down, mode), w.copy())
    np.testing.assert_allclose(analytic, fd, rtol=1e-5, atol=1e-8)


def test_detached_gradient_freezes_normalizer(rng):
    G = rng.standard_normal((3, 6))
    g_down = rng.standard_normal(6)
    w = rng.uniform(0.3, 2.0, 3)
    frozen = np.linalg.norm(G.T @ w)
    fd = numerical_grad(lambda v: float(v @ (G @ g_down)) / frozen, w.copy())
    np.testing.assert_allclose(alignment_gradient(w, G, g_down, DETACHED), fd, rtol=1e-5, atol=1e-8)


# ----- weight step -----


def test_weight_step_identity_instance():
    weights = WeightVector.ones(2, lr_w=0.1)
    g_down = np.array([1.0, 0.0])
    updated, diag = weight_step(weights, np.eye(2), g_down, COMPOSITE)
    np.testing.assert_allclose(diag.gradient, [0.35355339, -0.35355339], atol=1e-8)
    assert updated.w[0] > 1.0 > updated.w[1]

    _, diag = weight_step(weights, np.eye(2), g_down, DETACHED)
    np.testing.assert_allclose(diag.gradient, [1 / np.sqrt(2.0), 0.0], atol=1e-12)


@pytest.mark.parametrize("mode", [COMPOSITE, DETACHED])
def test_weight_step_zero_downstream_leaves_weights(rng, mode):
    weights = WeightVector(rng.uniform(0.5, 1.5, 3), lr_w=0.3)
    updated, _ = weight_step(weights, rng.standard_normal((3, 5)), np.zeros(5), mode)
    np.testing.assert_array_equal(updated.w, weights.w)


def test_weight_step_uses_pre_update_weights(rng):
    G = rng.standard_normal((3, 4))
    weights = WeightVector(rng.uniform(0.5, 1.5, 3), lr_w=0.5)
    _, diag = weight_step(weights, G, rng.standard_normal(4), COMPOSITE)
    np.testing.assert_allclose(diag.w_bar, normalized_weights(weights.w, G))
    assert np.linalg.norm(diag.w_bar @ G) == pytest.approx(1.0, abs=1e-12)


def test_weight_step_degenerate_norm_falls_back():
    weights = WeightVector.ones(2, lr_w=0.1)
    updated, diag = weight_step(weights, np.zeros((2, 3)), np.ones(3), COMPOSITE)
    assert diag.degenerate and updated.degenerate
    np.testing.assert_array_equal(updated.w, [1.0, 1.0])
    np.testing.assert_array_equal(diag.w_bar, [1.0, 1.0])


def test_weight_step_resets_all_zero_weights():
    weights = WeightVector.ones(2, lr_w=10.0)
    updated, diag = weight_step(weights, np.eye(2), [-1.0, -1.0], NormalizationMode(kind="none"))
    assert diag.reset
    np.testing.assert_array_equal(updated.w, [0.5, 0.5])


def test_weight_step_respects_floor(rng):
    weights = WeightVector.ones(4, lr_w=2.0, floor=0.05)
    for _ in range(30):
        weights, _ = weight_step(weights, rng.standard_normal((4, 6)), rng.standard_normal(6), COMPOSITE)
        assert weights.w.min() >= 0.05


def test_weight_step_commutes_with_loss_order(rng):
    G = rng.standard_normal((4, 9))
    g_down = rng.standard_normal(9)
    w = rng.uniform(0.5, 1.5, 4)
    perm = np.array([2, 0, 3, 1])
    updated, diag = weight_step(WeightVector(w, lr_w=0.4), G, g_down)
    permuted, permuted_diag = weight_step(WeightVector(w[perm], lr_w=0.4), G[perm], g_down)
    np.testing.assert_allclose(permuted.w, updated.w[perm], rtol=1e-12)
    np.testing.assert_allclose(permuted_diag.w_bar, diag.w_bar[perm], rtol=1e-12)
    assert permuted_diag.cosine == pytest.approx(diag.cosine, rel=1e-12)


def test_weight_step_zero_rate_is_identity(rng):
    weights = WeightVector(rng.uniform(0.5, 1.5, 3), lr_w=0.0)
    updated, _ = weight_step(weights, rng.standard_normal((3, 5)), rng.standard_normal(5), COMPOSITE)
    np.testing.assert_array_equal(updated.w, weights.w)


def test_small_step_does_not_decrease_objective(rng):
    for _ in range(10):
        G = rng.standard_normal((3, 8))
        g_down = rng.standard_normal(8)
        w = rng.uniform(0.5, 1.5, 3)
        before = alignment_objective(w, G, g_down, COMPOSITE)
        lr_w = 1.0
        for _ in range(20):
            updated, _ = weight_step(WeightVector(w, lr_w=lr_w), G, g_down, COMPOSITE)
            if alignment_objective(updated.w, G, g_down, COMPOSITE) >= before - 1e-15:
                break
            lr_w /= 2
        else:
            pytest.fail("no ascent step found within 20 halvings")


def test_weight_vector_validation():
    with pytest.raises(ContractViolation):
        WeightVector.ones(2, lr_w=-0.1)
    with pytest.raises(ContractViolation):
        WeightVector.ones(2, lr_w=0.1, floor=-1.0)
    with pytest.raises(ContractViolation):
        weight_step(WeightVector.ones(3, lr_w=0.1), np.eye(2), np.ones(2))
