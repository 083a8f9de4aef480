import numpy as np
import pytest

from conftest import compare
from grapApp.core import make_rng
from grapApp.errors import ContractViolation
from grapApp.oracles import (
    EmaState,
    QuadraticTask,
    bound_check,
    best_cosine,
    exact_multistep_hypergradient,
    fd_hypergradient,
    fd_rollout_hypergradient,
    firstorder_multistep_approx,
    grid_argmax_weights,
    run_suites,
    stepped_downstream_grad,
)
from grapApp.oracles.suites import (
    gradients_agree,
    hypergradient_exactness,
    jacobian_bounds,
    multistep_scaling,
    normalization_dominance,
    random_model_instance,
    weight_step_gradcheck,
)
from grapApp.model import backbone_jacobian, compute_embedding_grads, full_param_grads
from grapApp.tuner import NormalizationMode, hypergradient

COMPOSITE = NormalizationMode(kind="composite_grad")


# ----- one-step hypergradient -----


def test_fd_hypergradient_zero_lr(rng):
    model, batch = random_model_instance(rng, max_K=3, max_d=6)
    out = fd_hypergradient(model, batch, np.ones(model.K), lr=0.0)
    np.testing.assert_array_equal(out, np.zeros(model.K))


def test_fd_hypergradient_matches_analytic(rng):
    model, batch = random_model_instance(rng, max_K=4, max_d=8)
    w = rng.uniform(0.2, 1.5, model.K)
    G, _ = full_param_grads(model, batch)
    analytic = hypergradient(G, stepped_downstream_grad(model, batch, w, 0.1), 0.1)
    compare(fd_hypergradient(model, batch, w, 0.1), analytic, abs_tol=1e-9, rel_tol=1e-4)


@pytest.mark.parametrize("eps", [1e-8, 1e-2])
def test_fd_hypergradient_eps_range(rng, eps):
    model, batch = random_model_instance(rng, max_K=2, max_d=4)
    with pytest.raises(ContractViolation):
        fd_hypergradient(model, batch, np.ones(model.K), 0.1, eps=eps)


# ----- multi-step hypergradients on quadratic tasks -----


def test_zero_extra_steps_equals_first_order(rng):
    task = QuadraticTask.random(rng)
    w = np.full(task.K, 1.0 / task.K)
    np.testing.assert_allclose(
        exact_multistep_hypergradient(task, w, 0.05, 0),
        firstorder_multistep_approx(task, w, 0.05, 0),
        atol=1e-14,
    )


@pytest.mark.parametrize("n", [0, 1, 4])
def test_exact_multistep_matches_rollout_differences(rng, n):
    task = QuadraticTask.random(rng, K=2, P=5)
    w = np.array([0.7, 0.4])
    compare(
        fd_rollout_hypergradient(task, w, 0.05, n),
        exact_multistep_hypergradient(task, w, 0.05, n),
        abs_tol=1e-9,
        rel_tol=1e-6,
    )


def test_first_order_gap_shrinks_quadratically():
    result = multistep_scaling(seed=1, n_instances=3, steps=(2,))
    assert result.passed, result


def test_ema_of_constant_gradient():
    ema = EmaState(K=1, P=2, beta=0.5)
    g = np.array([[2.0, -4.0]])
    for _ in range(3):
        m = ema.update(g)
    np.testing.assert_allclose(m, (1 - 0.5**3) * g)


@pytest.mark.parametrize("beta", [-0.1, 1.0])
def test_ema_beta_range(beta):
    with pytest.raises(ContractViolation):
        EmaState(K=1, P=1, beta=beta)


# ----- Jacobian bounds -----


@pytest.mark.parametrize("scale", [1.0, 2.0])
def test_bounds_are_tight_for_scaled_identity(rng, scale):
    G_tilde = rng.standard_normal((3, 5))
    g_tilde_down = rng.standard_normal(5)
    report = bound_check(scale * np.eye(5), G_tilde, g_tilde_down, np.ones(3))
    assert report.sigma_max == pytest.approx(scale, rel=1e-9)
    assert report.mismatch_param == pytest.approx(report.mismatch_bound, rel=1e-9)
    assert report.holds


def test_bounds_hold_on_random_jacobians():
    result = jacobian_bounds(seed=2, n_instances=50)
    assert result.passed, result
    assert result.n_instances == 51


def test_bound_check_shape_mismatch(rng):
    with pytest.raises(ContractViolation):
        bound_check(np.eye(4), rng.standard_normal((2, 5)), rng.standard_normal(5), np.ones(2))


# ----- grid argmax -----


def test_grid_argmax_single_loss():
    np.testing.assert_array_equal(grid_argmax_weights([[1.0, 2.0]], [1.0, 0.0], COMPOSITE), [1.0])


def test_grid_argmax_recovers_aligned_direction():
    g_down = np.array([3.0, 4.0]) / 5.0
    w = grid_argmax_weights(np.eye(2), g_down, COMPOSITE)
    np.testing.assert_allclose(w / np.linalg.norm(w), [0.6, 0.8], atol=1e-6)
    assert best_cosine(np.eye(2), g_down, COMPOSITE) >= 1 - 1e-6


def test_grid_argmax_outside_cone_lands_on_boundary():
    w = grid_argmax_weights(np.eye(2), np.array([1.0, -1.0]) / np.sqrt(2.0), COMPOSITE)
    assert w[1] <= 1e-9
    assert w[0] > 0.0


def test_grid_argmax_three_losses():
    g_down = np.ones(3) / np.sqrt(3.0)
    assert best_cosine(np.eye(3), g_down, COMPOSITE) > 0.999


def test_grid_argmax_rejects_large_K():
    with pytest.raises(ContractViolation):
        grid_argmax_weights(np.eye(4), np.ones(4), COMPOSITE)


# ----- suites -----


def test_small_suites_pass():
    for result in (
        hypergradient_exactness(seed=0, n_instances=3),
        weight_step_gradcheck(seed=0, n_instances=20),
        normalization_dominance(seed=0, n_instances=5),
    ):
        assert result.passed, result


def test_gradcheck_tolerance_is_per_coordinate():
    analytic = np.array([100.0, 1e-3])
    # a 10% error on the small coordinate is invisible next to the large one
    ok, ratio = gradients_agree(np.array([100.0, 1.1e-3]), analytic, atol=1e-8)
    assert not ok
    assert ratio > 1.0
    ok, ratio = gradients_agree(np.array([100.0 + 1e-5, 1e-3 + 1e-9]), analytic, atol=1e-8)
    assert ok
    assert ratio <= 1.0


def test_suite_verdict_does_not_depend_on_workers():
    serial = weight_step_gradcheck(seed=3, n_instances=12, workers=1)
    pooled = weight_step_gradcheck(seed=3, n_instances=12, workers=4)
    assert (serial.n_failures, serial.worst) == (pooled.n_failures, pooled.worst)


def test_run_suites_by_name():
    results = run_suites(["gradcheck"], seed=5)
    assert [r.name for r in results] == ["weight_step_gradcheck"]
    with pytest.raises(KeyError):
        run_suites(["nope"])


def test_instance_streams_are_independent():
    a = make_rng(0, "verify", "gradcheck", "0").standard_normal(3)
    b = make_rng(0, "verify", "gradcheck", "1").standard_normal(3)
    assert not np.array_equal(a, b)


def test_bounds_hold_on_a_real_backbone(rng):
    model, batch = random_model_instance(rng, max_K=3, max_d=4)
    J = backbone_jacobian(model, batch.inputs)
    grads = compute_embedding_grads(model, batch)
    report = bound_check(J, grads.flat(), grads.flat_down(), np.ones(model.K))
    assert report.mismatch_holds
    assert report.alignment_holds
