"""Numerical primitives: activation, loss, and a small symmetric eigensolver.

Everything here is a pure function over float64 numpy arrays.  Inputs are
validated at this public surface; batched fast paths used internally by the
network live next to their callers and skip re-validation.
"""
from __future__ import annotations

import numpy as np

# Floor applied inside log() so that a zero probability cannot produce -inf.
LOG_CLAMP = 1e-12

# Largest symmetric problem the dense eigensolver accepts.  Discriminant
# projections never need more than the feature dimension (16) plus headroom.
MAX_EIG_DIM = 32


class NotPositiveDefiniteError(ValueError):
    """Raised when the right-hand matrix of a generalized eigenproblem is not
    positive-definite even after the one-shot ridge fallback."""


def relu(t):
    """max(0, t), elementwise over scalars or arrays."""
    arr = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("relu input must be finite")
    out = np.maximum(arr, 0.0)
    return float(out) if np.isscalar(t) or arr.ndim == 0 else out


def softmax(z) -> np.ndarray:
    """Probability vector exp(z_i) / sum_j exp(z_j), computed shift-invariantly.

    The max is subtracted before exponentiation so large logits cannot
    overflow; the result is unchanged because the ratio is shift-invariant.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.size < 2:
        raise ValueError("softmax expects a vector with at least 2 components")
    if not np.all(np.isfinite(z)):
        raise ValueError("softmax input must be finite")
    e = np.exp(z - z.max())
    return e / e.sum()


def softmax_rows(Z: np.ndarray) -> np.ndarray:
    """Row-wise softmax for 2-D arrays; no validation (internal hot path)."""
    e = np.exp(Z - Z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(pred, target) -> float:
    """-sum(target * log(pred)) with predictions clamped at LOG_CLAMP.

    ``pred`` must be a probability vector and ``target`` one-hot.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 1:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    if abs(pred.sum() - 1.0) > 1e-9:
        raise ValueError("pred must sum to 1 within 1e-9")
    hot = np.flatnonzero(target)
    if hot.size != 1 or target[hot[0]] != 1.0:
        raise ValueError("target must be one-hot")
    return float(-np.sum(target * np.log(np.clip(pred, LOG_CLAMP, 1.0))))


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Integer labels -> one-hot rows."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError("labels out of range")
    return np.eye(num_classes, dtype=np.float64)[labels]


def _check_symmetric(M: np.ndarray, name: str) -> None:
    if not np.allclose(M, M.T, rtol=1e-10, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")


def symmetric_generalized_eig(A: np.ndarray, B: np.ndarray):
    """Solve A v = lambda B v for symmetric A and positive-definite B.

    Reduction: Cholesky B = L L^T turns the problem into the standard
    symmetric one C y = lambda y with C = L^-1 A L^-T and v = L^-T y.  If the
    factorization fails, a single ridge of 1e-9 * trace(B)/n is added to the
    diagonal and the factorization retried; a second failure raises
    NotPositiveDefiniteError.

    Returns (eigenvalues, eigenvectors) with eigenvalues sorted descending and
    eigenvector columns B-orthonormal (V^T B V = I).
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != B.shape:
        raise ValueError("A and B must be square matrices of the same size")
    n = A.shape[0]
    if n > MAX_EIG_DIM:
        raise ValueError(f"problem size {n} exceeds supported maximum {MAX_EIG_DIM}")
    _check_symmetric(A, "A")
    _check_symmetric(B, "B")

    try:
        L = np.linalg.cholesky(B)
    except np.linalg.LinAlgError:
        ridge = 1e-9 * np.trace(B) / n
        try:
            L = np.linalg.cholesky(B + ridge * np.eye(n))
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(
                "B is not positive-definite (Cholesky failed after ridge fallback)"
            ) from exc

    Linv_A = np.linalg.solve(L, A)
    C = np.linalg.solve(L, Linv_A.T).T
    C = 0.5 * (C + C.T)
    eigvals, Y = np.linalg.eigh(C)
    V = np.linalg.solve(L.T, Y)

    order = np.argsort(eigvals)[::-1]
    return eigvals[order], V[:, order]
