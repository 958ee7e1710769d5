"""Dense complex Hermitian linear algebra kernel.

All heavy spectral work in the package funnels through this module:
eigendecomposition, functional calculus, and operator norms. The solver is
LAPACK's Hermitian eigensolver (Householder tridiagonalization plus implicit
shifts) as exposed by numpy, pinned to a single BLAS thread per matrix so
that callers can parallelize across matrices without oversubscription and
results do not depend on the ambient thread pool.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable

import numpy as np
from threadpoolctl import threadpool_limits

__all__ = [
    "HermitianMatrix",
    "hermitize",
    "eigh",
    "eigh_stack",
    "eigvalsh_stack",
    "func_calc",
    "opnorm",
    "pinned_blas",
]

# Below this dimension LAPACK stays single-threaded anyway and the
# threadpoolctl context costs more than the solve.
_PIN_THRESHOLD = 128

_pin_lock = threading.Lock()
_pin_depth = 0
_pin_state = None


@contextmanager
def pinned_blas():
    """Process-wide single-threaded BLAS, safe to nest across threads.

    threadpoolctl limits are process-global; naive nested contexts entered
    from concurrent workers race each other's restores and can leave BLAS
    multi-threaded mid-solve, breaking bitwise determinism. This guard
    counts entrants: the first pins, the last restores.
    """
    global _pin_depth, _pin_state
    with _pin_lock:
        _pin_depth += 1
        if _pin_depth == 1:
            _pin_state = threadpool_limits(limits=1)
    try:
        yield
    finally:
        with _pin_lock:
            _pin_depth -= 1
            if _pin_depth == 0:
                _pin_state.unregister()
                _pin_state = None


def hermitize(a: np.ndarray) -> np.ndarray:
    """Return (a + a†)/2, which is exactly Hermitian in IEEE arithmetic."""
    a = np.asarray(a, dtype=np.complex128)
    return (a + a.conj().swapaxes(-1, -2)) / 2


class HermitianMatrix:
    """A square complex matrix symmetrized at construction.

    The stored array satisfies ``A == A.conj().T`` bit for bit.
    """

    __slots__ = ("data",)

    def __init__(self, a):
        a = np.asarray(a, dtype=np.complex128)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        self.data = hermitize(a)

    @property
    def dimension(self) -> int:
        return self.data.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is not None:
            return self.data.astype(dtype)
        return self.data


def _as_matrix(a) -> np.ndarray:
    if isinstance(a, HermitianMatrix):
        return a.data
    return np.asarray(a, dtype=np.complex128)


def eigh(a) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix.

    Returns ``(w, v)`` with eigenvalues ``w`` ascending and orthonormal
    eigenvector columns ``v``; ``a @ v == v @ diag(w)`` to 1e-10 * ||a||.
    Input is symmetrized first, so slightly non-Hermitian input is accepted.
    """
    h = hermitize(_as_matrix(a))
    if h.shape[0] >= _PIN_THRESHOLD:
        with pinned_blas():
            return np.linalg.eigh(h)
    return np.linalg.eigh(h)


def eigh_stack(hs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``eigh`` over a stack of matrices of shape (..., n, n)."""
    hs = hermitize(np.asarray(hs, dtype=np.complex128))
    if hs.shape[-1] >= _PIN_THRESHOLD:
        with pinned_blas():
            return np.linalg.eigh(hs)
    return np.linalg.eigh(hs)


def eigvalsh_stack(hs: np.ndarray) -> np.ndarray:
    """Eigenvalues only, vectorized over a stack of Hermitian matrices."""
    hs = hermitize(np.asarray(hs, dtype=np.complex128))
    if hs.shape[-1] >= _PIN_THRESHOLD:
        with pinned_blas():
            return np.linalg.eigvalsh(hs)
    return np.linalg.eigvalsh(hs)


def func_calc(a, f: Callable[[float], complex]) -> np.ndarray:
    """Apply a scalar function to a Hermitian matrix: V f(Lambda) V†."""
    w, v = eigh(a)
    fw = np.array([f(x) for x in w], dtype=np.complex128)
    return (v * fw) @ v.conj().T


def opnorm(a) -> float:
    """Operator (spectral) norm: the largest singular value.

    Hermitian inputs take the exact eigenvalue route, everything else a
    full singular value decomposition.
    """
    m = _as_matrix(a)
    if m.size == 0:
        return 0.0
    if np.array_equal(m, m.conj().T):
        if m.shape[0] >= _PIN_THRESHOLD:
            with pinned_blas():
                return float(np.abs(np.linalg.eigvalsh(m)).max())
        return float(np.abs(np.linalg.eigvalsh(m)).max())
    if m.shape[0] >= _PIN_THRESHOLD:
        with pinned_blas():
            return float(np.linalg.svd(m, compute_uv=False)[0])
    return float(np.linalg.svd(m, compute_uv=False)[0])
