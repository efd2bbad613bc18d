"""Dense and Kronecker-structured linear operators.

All vectorization in this package is column-major: ``vec(X)`` stacks the
columns of ``X``.  With that convention ``(A kron B) vec(X) = vec(B X A^T)``,
and a Kronecker operator ``A_1 kron ... kron A_k`` acts on a vector reshaped
(C-order) into a tensor of shape ``(n_1, ..., n_k)``, one mode per factor.

Random sensing matrices are drawn from numpy's PCG64 bit generator
(``numpy.random.default_rng``), which is portable and seedable.
"""

from __future__ import annotations

from functools import reduce

import numpy as np

__all__ = [
    "DEFAULT_MATERIALIZE_CAP",
    "LinearOperator",
    "MatrixOperator",
    "KroneckerOperator",
    "DiagonalOperator",
    "ComposedOperator",
    "aslinearoperator",
    "make_rng",
    "derive_seed",
    "dct_matrix",
    "gaussian_sensing",
    "vec",
    "unvec",
    "kron_apply",
    "kron_materialize",
    "materialize",
    "pseudo_inverse",
    "scale_columns",
]

DEFAULT_MATERIALIZE_CAP = 2**24


def make_rng(seed):
    """Return an independent PCG64 generator for ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def derive_seed(*keys):
    """Hash a tuple of non-negative integers into a 64-bit seed.

    Uses numpy's ``SeedSequence`` entropy mixing, so the result does not
    depend on the platform or Python's string hash randomization.
    """
    ss = np.random.SeedSequence([int(k) for k in keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def dct_matrix(n):
    """Orthonormal DCT-II synthesis basis.

    Column ``k`` holds the ``k``-th DCT basis vector, so ``x = Psi @ s`` maps
    coefficients to samples and ``Psi.T`` is the forward transform.
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"DCT size must be >= 1, got {n}")
    i = np.arange(n)[:, None]
    k = np.arange(n)[None, :]
    psi = np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    psi[:, 0] *= np.sqrt(1.0 / n)
    psi[:, 1:] *= np.sqrt(2.0 / n)
    return psi


def gaussian_sensing(m, n, rng):
    """``m x n`` matrix with i.i.d. N(0, 1/m) entries."""
    m, n = int(m), int(n)
    if m < 1 or n < 1:
        raise ValueError(f"sensing matrix dims must be positive, got {m}x{n}")
    if m > n:
        raise ValueError(f"more measurements than unknowns ({m} > {n})")
    return rng.standard_normal((m, n)) / np.sqrt(m)


def vec(X):
    """Column-major stacking of a 2-D array."""
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError("vec expects a 2-D array")
    return X.reshape(-1, order="F")


def unvec(x, rows, cols):
    x = np.asarray(x)
    if x.ndim != 1 or x.size != rows * cols:
        raise ValueError(f"cannot unvec length {x.size} into {rows}x{cols}")
    return x.reshape((rows, cols), order="F")


class LinearOperator:
    """Minimal real linear operator: ``matvec``, ``rmatvec`` and ``shape``."""

    shape: tuple

    @property
    def input_dim(self):
        return self.shape[1]

    @property
    def output_dim(self):
        return self.shape[0]

    def matvec(self, x):
        raise NotImplementedError

    def rmatvec(self, y):
        raise NotImplementedError

    def _check(self, x, dim, what):
        x = np.asarray(x, dtype=float)
        if x.shape != (dim,):
            raise ValueError(f"{what}: expected vector of length {dim}, got shape {x.shape}")
        return x

    def __matmul__(self, other):
        if isinstance(other, LinearOperator):
            return ComposedOperator(self, other)
        return self.matvec(other)

    @property
    def T(self):
        return _Adjoint(self)


class _Adjoint(LinearOperator):
    def __init__(self, op):
        self.op = op
        self.shape = (op.shape[1], op.shape[0])

    def matvec(self, x):
        return self.op.rmatvec(x)

    def rmatvec(self, y):
        return self.op.matvec(y)

    @property
    def T(self):
        return self.op


class MatrixOperator(LinearOperator):
    def __init__(self, A):
        A = np.array(A, dtype=float)
        if A.ndim != 2:
            raise ValueError("MatrixOperator needs a 2-D array")
        if not np.all(np.isfinite(A)):
            raise ValueError("matrix entries must be finite")
        A.flags.writeable = False
        self.A = A
        self.shape = A.shape

    def matvec(self, x):
        return self.A @ self._check(x, self.shape[1], "matvec")

    def rmatvec(self, y):
        return self.A.T @ self._check(y, self.shape[0], "rmatvec")


class KroneckerOperator(LinearOperator):
    """``A_1 kron A_2 kron ... kron A_k`` applied without forming the product."""

    def __init__(self, factors):
        if len(factors) == 0:
            raise ValueError("KroneckerOperator needs at least one factor")
        fs = []
        for f in factors:
            f = np.array(f, dtype=float, ndmin=2)
            if f.ndim != 2:
                raise ValueError("Kronecker factors must be 2-D")
            if not np.all(np.isfinite(f)):
                raise ValueError("factor entries must be finite")
            f.flags.writeable = False
            fs.append(f)
        self.factors = tuple(fs)
        self.shape = (
            int(np.prod([f.shape[0] for f in fs])),
            int(np.prod([f.shape[1] for f in fs])),
        )

    def matvec(self, x):
        x = self._check(x, self.shape[1], "matvec")
        return _kron_mode_apply(self.factors, x, transpose=False)

    def rmatvec(self, y):
        y = self._check(y, self.shape[0], "rmatvec")
        return _kron_mode_apply(self.factors, y, transpose=True)


def _kron_mode_apply(factors, x, transpose):
    dims = [f.shape[0] if transpose else f.shape[1] for f in factors]
    t = x.reshape(dims)
    for axis, f in enumerate(factors):
        m = f.T if transpose else f
        t = np.moveaxis(np.tensordot(m, t, axes=([1], [axis])), 0, axis)
    return t.reshape(-1)


class DiagonalOperator(LinearOperator):
    def __init__(self, d):
        d = np.array(d, dtype=float)
        if d.ndim != 1:
            raise ValueError("diagonal must be a vector")
        d.flags.writeable = False
        self.d = d
        self.shape = (d.size, d.size)

    def matvec(self, x):
        return self.d * self._check(x, self.shape[1], "matvec")

    def rmatvec(self, y):
        return self.d * self._check(y, self.shape[0], "rmatvec")


class ComposedOperator(LinearOperator):
    """``outer @ inner``."""

    def __init__(self, outer, inner):
        if outer.shape[1] != inner.shape[0]:
            raise ValueError(f"cannot compose {outer.shape} with {inner.shape}")
        self.outer = outer
        self.inner = inner
        self.shape = (outer.shape[0], inner.shape[1])

    def matvec(self, x):
        return self.outer.matvec(self.inner.matvec(x))

    def rmatvec(self, y):
        return self.inner.rmatvec(self.outer.rmatvec(y))


def aslinearoperator(A):
    if isinstance(A, LinearOperator):
        return A
    return MatrixOperator(A)


def kron_apply(op, x):
    """Apply a :class:`KroneckerOperator` (or a factor list) to ``x``."""
    if not isinstance(op, KroneckerOperator):
        op = KroneckerOperator(op)
    return op.matvec(x)


def kron_materialize(op, cap=DEFAULT_MATERIALIZE_CAP):
    """Explicit Kronecker product matrix, refusing anything above ``cap`` entries."""
    if not isinstance(op, KroneckerOperator):
        op = KroneckerOperator(op)
    size = op.shape[0] * op.shape[1]
    if size > cap:
        raise ValueError(f"materialized size {size} exceeds cap {cap}")
    return reduce(np.kron, op.factors)


def materialize(op, cap=DEFAULT_MATERIALIZE_CAP):
    """Dense matrix of any operator in this module."""
    op = aslinearoperator(op)
    size = op.shape[0] * op.shape[1]
    if size > cap:
        raise ValueError(f"materialized size {size} exceeds cap {cap}")
    if isinstance(op, MatrixOperator):
        return op.A.copy()
    if isinstance(op, KroneckerOperator):
        return kron_materialize(op, cap)
    if isinstance(op, DiagonalOperator):
        return np.diag(op.d)
    if isinstance(op, ComposedOperator):
        return materialize(op.outer, cap) @ materialize(op.inner, cap)
    if isinstance(op, _Adjoint):
        return materialize(op.op, cap).T
    # generic fallback: one matvec per column
    n = op.shape[1]
    return np.column_stack([op.matvec(e) for e in np.eye(n)])


def pseudo_inverse(op, cap=DEFAULT_MATERIALIZE_CAP):
    """Moore-Penrose pseudo-inverse as an operator, or ``None`` if too large.

    Kronecker operators keep their structure (the pseudo-inverse of a
    Kronecker product is the product of the factor pseudo-inverses).
    """
    if isinstance(op, KroneckerOperator):
        return KroneckerOperator([np.linalg.pinv(f) for f in op.factors])
    if isinstance(op, DiagonalOperator):
        d = op.d
        inv = np.zeros_like(d)
        nz = d != 0
        inv[nz] = 1.0 / d[nz]
        return DiagonalOperator(inv)
    if op.shape[0] * op.shape[1] > cap:
        return None
    return MatrixOperator(np.linalg.pinv(materialize(op, cap)))


def scale_columns(op, d):
    """Return ``op @ Diag(d)``, keeping Kronecker structure when ``d`` allows.

    When ``op`` is Kronecker and ``d`` is periodic with the column count of
    the last factor (as for temporally repeated weights), the scaling is
    folded into that factor.
    """
    d = np.asarray(d, dtype=float)
    if d.shape != (op.shape[1],):
        raise ValueError(f"scaling vector length {d.size} does not match {op.shape[1]} columns")
    if isinstance(op, KroneckerOperator):
        last = op.factors[-1]
        period = d.reshape(-1, last.shape[1])
        if np.all(period == period[0]):
            return KroneckerOperator(op.factors[:-1] + (last * period[0],))
    if isinstance(op, MatrixOperator):
        return MatrixOperator(op.A * d)
    return ComposedOperator(op, DiagonalOperator(d))
