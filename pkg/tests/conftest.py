import os

os.environ.setdefault("ENV_STATE", "test")

import numpy as np
import pytest

from grapApp.harness.utils.state import ModelSpec, RunConfig
from grapApp.tasks import TaskSpec


def compare(nd_value, ad_value, abs_tol=1e-7, rel_tol=1e-5):
    nd_value, ad_value = np.asarray(nd_value), np.asarray(ad_value)
    assert nd_value.shape == ad_value.shape
    np.testing.assert_allclose(nd_value, ad_value, atol=abs_tol, rtol=rel_tol)


def numerical_grad(fn, x, eps=1e-6):
    """Central differences of scalar ``fn`` at every coordinate of ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for index in np.ndindex(x.shape):
        orig = x[index]
        x[index] = orig + eps
        plus = fn(x)
        x[index] = orig - eps
        minus = fn(x)
        x[index] = orig
        grad[index] = (plus - minus) / (2 * eps)
    return grad


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_config():
    """A run that finishes in well under a second."""
    return RunConfig(
        task=TaskSpec(n_features=6, d=4, n_train=192, n_val=64, seed=0),
        model=ModelSpec(hidden=[8]),
        lr=0.05,
        steps=24,
        batch_size=64,
        eval_every=4,
    )
