"""Small dense linear algebra with operation counting.

Matrices are plain 2-D ``float64`` numpy arrays. Every product goes through
:func:`matvec` so the global :data:`op_counter` sees it; the inversion-free
tracking path only ever calls :func:`matvec` and :func:`gram_apply`, while
the reference path also calls :func:`solve_spd`.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from .errors import DimensionError, SingularityError

# relative pivot floor below which J J^T is treated as singular
PIVOT_RTOL = 1e-14


class OpCounter:
    """Running counts of matrix-vector products, Gram applications and SPD solves.

    ``flops`` accumulates multiply-add counts: ``rows*cols`` per matvec,
    ``p**3/3 + 2*p**2`` per SPD solve, ``p*p*n`` per explicitly formed Gram
    matrix. Counts are exact for single-threaded use only; concurrent sweeps
    should run with the counter paused.
    """

    def __init__(self):
        self._paused = 0
        self.reset()

    def reset(self):
        self.matvec = 0
        self.gram = 0
        self.solve = 0
        self.flops = 0

    def add(self, *, matvec=0, gram=0, solve=0, flops=0):
        if self._paused:
            return
        self.matvec += matvec
        self.gram += gram
        self.solve += solve
        self.flops += flops

    @contextmanager
    def paused(self):
        """Suspend counting, e.g. while computing diagnostics."""
        self._paused += 1
        try:
            yield self
        finally:
            self._paused -= 1

    def snapshot(self):
        return {"matvec": self.matvec, "gram": self.gram, "solve": self.solve, "flops": self.flops}

    def since(self, before):
        now = self.snapshot()
        return {k: now[k] - before[k] for k in now}


op_counter = OpCounter()


def as_matrix(A, rows=None, cols=None):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {A.shape}")
    if (rows is not None and A.shape[0] != rows) or (cols is not None and A.shape[1] != cols):
        raise DimensionError(f"expected shape ({rows}, {cols}), got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DimensionError("matrix has non-finite entries")
    return A


def _array(a):
    return a if isinstance(a, np.ndarray) else np.asarray(a, dtype=float)


def matvec(A, w):
    """Dense product ``A @ w``."""
    A, w = _array(A), _array(w)
    if A.ndim != 2 or w.ndim != 1 or A.shape[1] != w.shape[0]:
        raise DimensionError(f"cannot multiply {A.shape} by {w.shape}")
    # hot path: inline of op_counter.add
    if not op_counter._paused:
        op_counter.matvec += 1
        op_counter.flops += A.size
    return A @ w


def gram_apply(J, w):
    """Return ``J J^T w`` as ``J (J^T w)`` without forming ``J J^T``."""
    J, w = _array(J), _array(w)
    if J.ndim != 2 or w.ndim != 1 or J.shape[0] != w.shape[0]:
        raise DimensionError(f"cannot apply Gram of {J.shape} to {w.shape}")
    if not op_counter._paused:
        op_counter.gram += 1
    return matvec(J, matvec(J.T, w))


def cholesky(A):
    """Lower-triangular ``L`` with ``L L^T = A``; no pivoting.

    Raises :class:`SingularityError` on a non-positive (or numerically
    vanishing) pivot, which for ``A = J J^T`` means ``J`` lost full row rank.
    """
    A = np.asarray(A, dtype=float)
    p = A.shape[0]
    L = np.zeros_like(A)
    floor = PIVOT_RTOL * max(1.0, float(np.max(np.abs(np.diag(A))))) if p else 0.0
    for j in range(p):
        pivot = A[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > floor:
            raise SingularityError(f"non-positive pivot {pivot:.3e} at column {j}")
        L[j, j] = np.sqrt(pivot)
        L[j + 1:, j] = (A[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def _forward(L, b):
    y = np.zeros_like(b)
    for i in range(len(b)):
        y[i] = (b[i] - L[i, :i] @ y[:i]) / L[i, i]
    return y


def _backward(L, y):
    x = np.zeros_like(y)
    for i in reversed(range(len(y))):
        x[i] = (y[i] - L[i + 1:, i] @ x[i + 1:]) / L[i, i]
    return x


def solve_spd(A, b):
    """Solve ``A x = b`` for symmetric positive-definite ``A``."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or b.shape != (A.shape[0],):
        raise DimensionError(f"cannot solve {A.shape} system with rhs {b.shape}")
    scale = 1.0 + (float(np.max(np.abs(A))) if A.size else 0.0)
    if A.size and np.max(np.abs(A - A.T)) > 1e-12 * scale:
        raise DimensionError("matrix is not symmetric")
    p = A.shape[0]
    op_counter.add(solve=1, flops=p ** 3 // 3 + 2 * p * p)
    L = cholesky(A)
    return _backward(L, _forward(L, b))


def gram_matrix(J):
    """Explicit ``J J^T``; reference path only."""
    J = np.asarray(J, dtype=float)
    op_counter.add(flops=J.shape[0] * J.shape[0] * J.shape[1])
    return J @ J.T


def project_tangent(J, v):
    """Orthogonal projection of ``v`` onto ``ker J``: ``v - J^T (J J^T)^{-1} J v``."""
    J = np.asarray(J, dtype=float)
    v = np.asarray(v, dtype=float)
    if J.ndim != 2 or v.shape != (J.shape[1],):
        raise DimensionError(f"cannot project {v.shape} with Jacobian {J.shape}")
    if J.shape[0] == 0:
        return v.copy()
    return v - matvec(J.T, solve_spd(gram_matrix(J), matvec(J, v)))
