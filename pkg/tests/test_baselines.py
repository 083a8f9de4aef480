import numpy as np
import pytest

from grapApp.errors import ContractViolation, NonFiniteError
from grapApp.tuner import (
    DwaState,
    GradNormState,
    dwa_weights,
    gradnorm_step,
    median_weights,
    mgda_weights,
    pcgrad_combine,
)


# ----- MGDA -----


def test_mgda_orthogonal_pair():
    np.testing.assert_allclose(mgda_weights([[1.0, 0.0], [0.0, 1.0]]), [0.5, 0.5])


def test_mgda_shorter_gradient_dominates():
    np.testing.assert_allclose(mgda_weights([[2.0, 0.0], [1.0, 0.0]]), [0.0, 1.0])


@pytest.mark.parametrize("K", [2, 3, 5])
def test_mgda_identical_rows_give_uniform(K):
    G = np.tile([1.0, -2.0, 0.5], (K, 1))
    np.testing.assert_allclose(mgda_weights(G), np.full(K, 1.0 / K), atol=1e-12)


def test_mgda_single_loss():
    np.testing.assert_array_equal(mgda_weights([[3.0, 1.0]]), [1.0])


def test_mgda_interior_optimum(rng):
    scales = np.array([1.0, 1.2, 1.5])
    G = np.diag(scales)
    w = mgda_weights(G)
    expected = scales**-2 / np.sum(scales**-2)

    def value(v):
        return float(np.sum((v @ G) ** 2))

    assert w.min() >= 0.0
    assert w.sum() == pytest.approx(1.0, abs=1e-10)
    assert value(w) <= value(expected) + 1e-6
    np.testing.assert_allclose(w, expected, atol=1e-3)
    random_points = rng.dirichlet(np.ones(3), size=200)
    assert value(w) <= min(value(p) for p in random_points) + 1e-8


def test_mgda_rejects_non_finite():
    with pytest.raises(NonFiniteError):
        mgda_weights([[np.nan, 0.0], [1.0, 0.0]])
    with pytest.raises(ContractViolation):
        mgda_weights(np.ones(3))


# ----- PCGrad -----


def test_pcgrad_projects_conflict():
    np.testing.assert_allclose(pcgrad_combine([[1.0, 0.0], [-1.0, 1.0]]), [-0.5, 1.5])


def test_pcgrad_full_conflict():
    np.testing.assert_allclose(pcgrad_combine([[1.0, 2.0], [-1.0, -2.0]]), [-1.0, -2.0])


def test_pcgrad_without_conflicts_is_plain_sum(rng):
    G = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, -3.0]])
    np.testing.assert_array_equal(pcgrad_combine(G, rng), G.sum(axis=0))


def test_pcgrad_skips_zero_rows(rng):
    G = np.array([[0.0, 0.0], [1.0, -1.0]])
    np.testing.assert_array_equal(pcgrad_combine(G, rng), [1.0, -1.0])


def test_pcgrad_does_not_modify_input():
    G = np.array([[1.0, 0.0], [-1.0, 1.0]])
    pcgrad_combine(G)
    np.testing.assert_array_equal(G, [[1.0, 0.0], [-1.0, 1.0]])


# ----- GradNorm -----


def test_gradnorm_symmetric_stays_uniform():
    state = GradNormState(K=3)
    for _ in range(5):
        w = gradnorm_step(state, [1.0, 1.0, 1.0], [2.0, 2.0, 2.0], lr_w=0.1)
    np.testing.assert_allclose(w, np.ones(3))


def test_gradnorm_equalizes_weighted_norms():
    state = GradNormState(K=2, alpha=0.0)
    w = gradnorm_step(state, [2.0, 1.0], [1.0, 1.0], lr_w=0.1)
    np.testing.assert_allclose(w, np.array([0.8, 1.1]) * 2 / 1.9)
    assert w[0] * 2.0 - w[1] < 2.0 - 1.0


def test_gradnorm_renormalizes_to_K(rng):
    state = GradNormState(K=4)
    for _ in range(10):
        w = gradnorm_step(state, rng.uniform(0.1, 3.0, 4), rng.uniform(0.5, 2.0, 4), lr_w=0.05)
        assert w.sum() == pytest.approx(4.0)
        assert w.min() > 0.0


# ----- DWA -----


def test_dwa_uniform_before_two_windows():
    state = DwaState(K=3, window=2)
    for _ in range(3):
        state.record([1.0, 2.0, 3.0])
        np.testing.assert_array_equal(dwa_weights(state), np.ones(3))
    assert len(state.history) == 1


def test_dwa_softmax_of_loss_ratios():
    state = DwaState(K=2, window=1)
    state.record([1.0, 1.0])
    state.record([1.0, 1.1])
    logits = np.array([0.5, 0.55])
    expected = 2 * np.exp(logits) / np.exp(logits).sum()
    np.testing.assert_allclose(dwa_weights(state, T=2.0), expected)


def test_dwa_equal_ratios_and_high_temperature():
    state = DwaState(K=3, window=1)
    state.record([2.0, 4.0, 8.0])
    state.record([1.0, 2.0, 4.0])
    np.testing.assert_allclose(dwa_weights(state), np.ones(3))

    state = DwaState(K=2, window=1)
    state.record([1.0, 1.0])
    state.record([1.0, 3.0])
    np.testing.assert_allclose(dwa_weights(state, T=1e9), np.ones(2), atol=1e-8)


def test_dwa_keeps_last_two_windows():
    state = DwaState(K=1, window=1)
    for value in (1.0, 2.0, 3.0, 4.0):
        state.record([value])
    assert [h[0] for h in state.history] == [3.0, 4.0]


# ----- median -----


def test_median_of_constant_trajectory():
    np.testing.assert_array_equal(median_weights(np.tile([0.2, 1.5], (7, 1))), [0.2, 1.5])


def test_median_per_coordinate():
    np.testing.assert_array_equal(median_weights([[0.0], [1.0], [2.0]]), [1.0])


def test_median_matches_sort(rng):
    traj = rng.uniform(size=(11, 4))
    expected = np.sort(traj, axis=0)[5]
    np.testing.assert_array_equal(median_weights(traj), expected)


def test_median_burn_in():
    traj = np.array([[100.0], [100.0], [1.0], [2.0], [3.0]]).repeat(2, axis=0)
    np.testing.assert_array_equal(median_weights(traj, burn_in=0.4), [2.0])


def test_median_errors():
    with pytest.raises(ContractViolation):
        median_weights(np.empty((0, 2)))
    with pytest.raises(ContractViolation):
        median_weights([[1.0]], burn_in=1.0)
