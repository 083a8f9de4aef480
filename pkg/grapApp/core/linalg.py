"""
Array plumbing for the compute core.

Vectors and matrices are plain ``numpy.ndarray`` objects in float64, C order.
The helpers here enforce the shape and finiteness contracts once so the rest
of the package can stay free of ad-hoc checks.
"""

import hashlib
import logging

import numpy as np

from grapApp.errors import ContractViolation, ConvergenceError, NonFiniteError

logger = logging.getLogger(__name__)

POWER_ITERATION_MAX_ITER = 10_000
# largest Gram side that falls back to a dense SVD when power iteration stalls
DENSE_FALLBACK_DIM = 512


def as_mat(x, name: str = "matrix") -> np.ndarray:
    """Returns ``x`` as a contiguous 2-D float64 array."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ContractViolation(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def as_vec(x, name: str = "vector") -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ContractViolation(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


def check_finite(arr: np.ndarray, what: str, loss_index=None) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {what}", loss_index=loss_index)
    return arr


def make_rng(seed: int, *labels: str) -> np.random.Generator:
    """
    Independent generator for a (seed, labels...) pair.

    The labels are hashed into the SeedSequence spawn key, so every
    (module, purpose) label gets its own stream and equal inputs always give
    a bit-identical stream.
    """
    key = []
    for label in labels:
        digest = hashlib.sha256(str(label).encode("utf-8")).digest()
        key.append(int.from_bytes(digest[:4], "little"))
    seq = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(key))
    return np.random.Generator(np.random.PCG64(seq))


def spectral_norm(m, tol: float = 1e-12, max_iter: int = POWER_ITERATION_MAX_ITER) -> float:
    """
    Largest singular value by power iteration on the smaller Gram matrix.

    The start vector is seeded, so the result is deterministic. Nearly equal
    top singular values make the iteration stall; if the Rayleigh quotient has
    not settled to a relative change below ``tol`` within ``max_iter``
    iterations, a Gram side of at most ``DENSE_FALLBACK_DIM`` falls back to a
    dense SVD and anything larger raises ``ConvergenceError``.
    """
    m = as_mat(m)
    if m.size == 0:
        raise ContractViolation("spectral_norm needs a nonempty matrix")
    check_finite(m, "spectral_norm input")

    gram = m.T @ m if m.shape[1] <= m.shape[0] else m @ m.T
    x = make_rng(0, "spectral_norm").standard_normal(gram.shape[0])
    x /= np.linalg.norm(x)

    lam = float(x @ gram @ x)
    for _ in range(max_iter):
        y = gram @ x
        y_norm = np.linalg.norm(y)
        if y_norm == 0.0:
            # start vector in the null space of a rank-deficient gram
            if not np.any(gram):
                return 0.0
            x = np.roll(x, 1) + 1.0
            x /= np.linalg.norm(x)
            continue
        x = y / y_norm
        lam_new = float(x @ gram @ x)
        if abs(lam_new - lam) <= tol * max(abs(lam_new), np.finfo(float).tiny):
            return float(np.sqrt(max(lam_new, 0.0)))
        lam = lam_new

    if gram.shape[0] <= DENSE_FALLBACK_DIM:
        logger.debug("power iteration stalled at sigma^2=%.6e, using dense SVD", lam)
        return float(np.linalg.norm(m, 2))
    raise ConvergenceError(
        f"power iteration did not reach tol={tol} in {max_iter} iterations"
    )
