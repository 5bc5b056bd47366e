"""Lazily structured linear operators.

Representation matrices of tensor representations grow as ``d**k``; this
module lets them be applied through matrix-vector (and matrix-matrix)
products without ever being materialized.  Every operator is immutable.

All operators act on column blocks: ``matmat`` takes an array of shape
``(cols, k)`` and returns ``(rows, k)``.  ``rmatmat`` applies the conjugate
transpose.
"""
from __future__ import annotations

from functools import reduce
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionError, FieldError, SizeError

__all__ = [
    "DENSE_CAP",
    "LinearOperator",
    "Dense",
    "Permutation",
    "Sparse",
    "KroneckerProduct",
    "KroneckerSum",
    "DirectSum",
    "ScaledIdentity",
    "Composition",
    "Transpose",
    "Negation",
    "OperatorSum",
    "mvm",
    "adjoint_mvm",
    "to_dense",
    "kron_permutation",
    "fuse_permutations",
]

#: Maximum number of entries ``to_dense`` will materialize by default.
DENSE_CAP = 2**26

REAL = "real"
COMPLEX = "complex"


def _field_of(dtype) -> str:
    return COMPLEX if np.issubdtype(dtype, np.complexfloating) else REAL


def _dtype_of(field: str):
    return np.complex128 if field == COMPLEX else np.float64


def _join_fields(ops) -> str:
    return COMPLEX if any(op.field == COMPLEX for op in ops) else REAL


class LinearOperator:
    """Base class.  Subclasses implement ``_matmat`` and ``_rmatmat``."""

    shape: tuple[int, int]
    field: str

    def __init__(self, shape, field=REAL):
        self.shape = (int(shape[0]), int(shape[1]))
        self.field = field

    @property
    def dtype(self):
        return _dtype_of(self.field)

    # -- public application -------------------------------------------------
    def _check(self, X, n):
        X = np.asarray(X)
        if X.shape[0] != n:
            raise DimensionError(
                f"{type(self).__name__} of shape {self.shape} cannot act on "
                f"input with leading dimension {X.shape[0]}"
            )
        if self.field == REAL and np.iscomplexobj(X):
            raise FieldError("complex input applied to a real operator")
        if self.field == COMPLEX:
            return X.astype(np.complex128, copy=False)
        return X.astype(np.float64, copy=False)

    def matvec(self, v):
        v = np.asarray(v)
        if v.ndim != 1:
            raise DimensionError(f"matvec expects a vector, got shape {v.shape}")
        return self.matmat(v[:, None])[:, 0]

    def rmatvec(self, v):
        v = np.asarray(v)
        if v.ndim != 1:
            raise DimensionError(f"rmatvec expects a vector, got shape {v.shape}")
        return self.rmatmat(v[:, None])[:, 0]

    def matmat(self, X):
        X = self._check(X, self.shape[1])
        return self._matmat(X)

    def rmatmat(self, X):
        X = self._check(X, self.shape[0])
        return self._rmatmat(X)

    def _matmat(self, X):
        raise NotImplementedError

    def _rmatmat(self, X):
        raise NotImplementedError

    def to_dense(self, cap: int = DENSE_CAP):
        rows, cols = self.shape
        if rows * cols > cap:
            raise SizeError(f"materializing {rows}x{cols} exceeds cap of {cap} entries")
        return self._to_dense(cap)

    def _to_dense(self, cap):
        return self._matmat(np.eye(self.shape[1], dtype=self.dtype))

    # -- algebra --------------------------------------------------------------
    @property
    def T(self) -> LinearOperator:
        return Transpose(self)

    @property
    def H(self) -> LinearOperator:
        """Conjugate transpose; equal to ``T`` for real operators."""
        return _Adjoint(self) if self.field == COMPLEX else Transpose(self)

    def __neg__(self):
        return Negation(self)

    def __add__(self, other):
        if not isinstance(other, LinearOperator):
            return NotImplemented
        return OperatorSum([self, other])

    def __sub__(self, other):
        if not isinstance(other, LinearOperator):
            return NotImplemented
        return OperatorSum([self, Negation(other)])

    def __matmul__(self, other):
        if isinstance(other, LinearOperator):
            return Composition([self, other])
        other = np.asarray(other)
        return self.matvec(other) if other.ndim == 1 else self.matmat(other)

    def __mul__(self, scalar):
        if isinstance(scalar, LinearOperator) or np.ndim(scalar) != 0:
            return NotImplemented
        return Composition([ScaledIdentity(scalar, self.shape[0]), self])

    __rmul__ = __mul__

    def as_scipy(self) -> spla.LinearOperator:
        """Wrap as a :class:`scipy.sparse.linalg.LinearOperator`."""
        return spla.LinearOperator(
            self.shape,
            matvec=self.matvec,
            rmatvec=self.rmatvec,
            matmat=self.matmat,
            rmatmat=self.rmatmat,
            dtype=self.dtype,
        )

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.shape}, field={self.field})"


class Dense(LinearOperator):
    def __init__(self, matrix):
        M = np.array(matrix)
        if M.ndim != 2:
            raise DimensionError(f"Dense expects a 2D array, got shape {M.shape}")
        field = _field_of(M.dtype)
        M = M.astype(_dtype_of(field))
        M.setflags(write=False)
        self.matrix = M
        super().__init__(M.shape, field)

    def _matmat(self, X):
        return self.matrix @ X

    def _rmatmat(self, X):
        return self.matrix.conj().T @ X

    def _to_dense(self, cap):
        return self.matrix.copy()


class Permutation(LinearOperator):
    """``(P v)[i] = v[perm[i]]``; exact reordering, always real."""

    def __init__(self, perm):
        p = np.asarray(perm, dtype=np.int64)
        n = p.size
        if p.ndim != 1 or not np.array_equal(np.sort(p), np.arange(n)):
            raise ValueError("Permutation requires a bijection on range(n)")
        inv = np.empty_like(p)
        inv[p] = np.arange(n)
        p.setflags(write=False)
        inv.setflags(write=False)
        self.perm = p
        self.inverse_perm = inv
        super().__init__((n, n), REAL)

    def _matmat(self, X):
        return X[self.perm]

    def _rmatmat(self, X):
        return X[self.inverse_perm]

    def inverse(self) -> Permutation:
        return Permutation(self.inverse_perm)

    def _to_dense(self, cap):
        n = self.shape[0]
        M = np.zeros((n, n))
        M[np.arange(n), self.perm] = 1.0
        return M


class Sparse(LinearOperator):
    """Coordinate-list operator backed by a CSR matrix."""

    def __init__(self, rows, cols, values, shape):
        values = np.asarray(values)
        field = _field_of(values.dtype)
        self.csr = sp.csr_matrix(
            (values.astype(_dtype_of(field)), (np.asarray(rows), np.asarray(cols))), shape=shape
        )
        self._csr_h = self.csr.conj().T.tocsr()
        super().__init__(shape, field)

    @classmethod
    def from_dense(cls, M):
        M = np.asarray(M)
        r, c = np.nonzero(M)
        return cls(r, c, M[r, c], M.shape)

    def _matmat(self, X):
        return np.asarray(self.csr @ X)

    def _rmatmat(self, X):
        return np.asarray(self._csr_h @ X)

    def _to_dense(self, cap):
        return self.csr.toarray()


def _apply_on_axis(op: LinearOperator, T, axis: int, adjoint: bool):
    """Apply ``op`` (or its adjoint) to one tensor axis of ``T``."""
    T = np.moveaxis(T, axis, 0)
    rest = T.shape[1:]
    flat = T.reshape(T.shape[0], -1)
    out = op._rmatmat(flat) if adjoint else op._matmat(flat)
    out = out.reshape((out.shape[0],) + rest)
    return np.moveaxis(out, 0, axis)


def _cast(X, field):
    return X.astype(np.complex128, copy=False) if field == COMPLEX else X


class KroneckerProduct(LinearOperator):
    """``A_1 ⊗ A_2 ⊗ ... ⊗ A_k`` applied factor by factor via reshapes."""

    def __init__(self, factors: Sequence[LinearOperator]):
        factors = tuple(factors)
        if not factors:
            raise ValueError("KroneckerProduct requires at least one factor")
        self.factors = factors
        rows = int(np.prod([f.shape[0] for f in factors]))
        cols = int(np.prod([f.shape[1] for f in factors]))
        super().__init__((rows, cols), _join_fields(factors))

    def _apply(self, X, adjoint):
        X = _cast(X, self.field)
        k = X.shape[1]
        dims_in = [f.shape[0] if adjoint else f.shape[1] for f in self.factors]
        T = X.reshape(tuple(dims_in) + (k,))
        for i, f in enumerate(self.factors):
            T = _apply_on_axis(f, T, i, adjoint)
        return T.reshape(-1, k)

    def _matmat(self, X):
        return self._apply(X, False)

    def _rmatmat(self, X):
        return self._apply(X, True)

    def _to_dense(self, cap):
        return reduce(np.kron, [f._to_dense(cap) for f in self.factors])


class KroneckerSum(LinearOperator):
    """``A_1 ⊕̄ A_2 ⊕̄ ...`` = ``Σ_i I ⊗ ... ⊗ A_i ⊗ ... ⊗ I`` for square factors."""

    def __init__(self, factors: Sequence[LinearOperator]):
        factors = tuple(factors)
        if not factors:
            raise ValueError("KroneckerSum requires at least one factor")
        for f in factors:
            if f.shape[0] != f.shape[1]:
                raise DimensionError("KroneckerSum factors must be square")
        self.factors = factors
        n = int(np.prod([f.shape[0] for f in factors]))
        super().__init__((n, n), _join_fields(factors))

    def _apply(self, X, adjoint):
        X = _cast(X, self.field)
        k = X.shape[1]
        dims = tuple(f.shape[0] for f in self.factors)
        T = X.reshape(dims + (k,))
        out = None
        for i, f in enumerate(self.factors):
            if isinstance(f, ScaledIdentity) and f.scale == 0:
                continue
            term = _apply_on_axis(f, T, i, adjoint)
            out = term if out is None else out + term
        if out is None:
            return np.zeros_like(X)
        return out.reshape(-1, k)

    def _matmat(self, X):
        return self._apply(X, False)

    def _rmatmat(self, X):
        return self._apply(X, True)

    def _to_dense(self, cap):
        mats = [f._to_dense(cap) for f in self.factors]
        dims = [m.shape[0] for m in mats]
        n = self.shape[0]
        out = np.zeros((n, n), dtype=self.dtype)
        for i, m in enumerate(mats):
            left = np.eye(int(np.prod(dims[:i])))
            right = np.eye(int(np.prod(dims[i + 1 :])))
            out = out + np.kron(np.kron(left, m), right)
        return out


class DirectSum(LinearOperator):
    """Block-diagonal operator.  ``blocks`` may repeat; multiplicities are
    given either by repeating an operator or via ``multiplicities``."""

    def __init__(self, blocks: Sequence[LinearOperator], multiplicities: Sequence[int] | None = None):
        blocks = tuple(blocks)
        if not blocks:
            raise ValueError("DirectSum requires at least one block")
        mults = tuple(int(m) for m in multiplicities) if multiplicities is not None else (1,) * len(blocks)
        if len(mults) != len(blocks) or any(m < 1 for m in mults):
            raise ValueError("multiplicities must be positive, one per block")
        self.blocks = blocks
        self.multiplicities = mults
        rows = sum(b.shape[0] * m for b, m in zip(blocks, mults))
        cols = sum(b.shape[1] * m for b, m in zip(blocks, mults))
        super().__init__((rows, cols), _join_fields(blocks))

    def _apply(self, X, adjoint):
        X = _cast(X, self.field)
        k = X.shape[1]
        outs = []
        i = 0
        for b, m in zip(self.blocks, self.multiplicities):
            n_in = b.shape[0] if adjoint else b.shape[1]
            chunk = X[i : i + m * n_in]
            i += m * n_in
            # stack the m copies side by side so the block is applied once
            chunk = chunk.reshape(m, n_in, k).transpose(1, 0, 2).reshape(n_in, m * k)
            res = b._rmatmat(chunk) if adjoint else b._matmat(chunk)
            n_out = res.shape[0]
            outs.append(res.reshape(n_out, m, k).transpose(1, 0, 2).reshape(m * n_out, k))
        return np.concatenate(outs, axis=0)

    def _matmat(self, X):
        return self._apply(X, False)

    def _rmatmat(self, X):
        return self._apply(X, True)

    def _to_dense(self, cap):
        out = np.zeros(self.shape, dtype=self.dtype)
        r = c = 0
        for b, m in zip(self.blocks, self.multiplicities):
            B = b._to_dense(cap)
            for _ in range(m):
                out[r : r + B.shape[0], c : c + B.shape[1]] = B
                r += B.shape[0]
                c += B.shape[1]
        return out


class ScaledIdentity(LinearOperator):
    def __init__(self, scale, size: int):
        scale = complex(scale) if np.iscomplexobj(scale) else float(scale)
        self.scale = scale
        super().__init__((size, size), COMPLEX if isinstance(scale, complex) else REAL)

    def _matmat(self, X):
        return self.scale * X

    def _rmatmat(self, X):
        return np.conj(self.scale) * X

    def _to_dense(self, cap):
        return self.scale * np.eye(self.shape[0], dtype=self.dtype)


class Composition(LinearOperator):
    """``ops[0] @ ops[1] @ ... @ ops[-1]``; evaluated right to left."""

    def __init__(self, ops: Sequence[LinearOperator]):
        flat: list[LinearOperator] = []
        for op in ops:
            flat.extend(op.ops if isinstance(op, Composition) else [op])
        if not flat:
            raise ValueError("Composition requires at least one operator")
        for a, b in zip(flat, flat[1:]):
            if a.shape[1] != b.shape[0]:
                raise DimensionError(f"cannot compose {a.shape} with {b.shape}")
        collapsed: list[LinearOperator] = []
        for op in flat:
            if collapsed and isinstance(op, ScaledIdentity) and isinstance(collapsed[-1], ScaledIdentity):
                collapsed[-1] = ScaledIdentity(collapsed[-1].scale * op.scale, op.shape[0])
            else:
                collapsed.append(op)
        self.ops = tuple(collapsed)
        super().__init__((collapsed[0].shape[0], collapsed[-1].shape[1]), _join_fields(collapsed))

    def _matmat(self, X):
        X = _cast(X, self.field)
        for op in reversed(self.ops):
            X = op._matmat(X)
        return X

    def _rmatmat(self, X):
        X = _cast(X, self.field)
        for op in self.ops:
            X = op._rmatmat(X)
        return X


class Transpose(LinearOperator):
    """Plain (unconjugated) transpose of ``inner``."""

    def __init__(self, inner: LinearOperator):
        self.inner = inner
        super().__init__((inner.shape[1], inner.shape[0]), inner.field)

    def _matmat(self, X):
        if self.field == REAL:
            return self.inner._rmatmat(X)
        return np.conj(self.inner._rmatmat(np.conj(X)))

    def _rmatmat(self, X):
        if self.field == REAL:
            return self.inner._matmat(X)
        return np.conj(self.inner._matmat(np.conj(X)))

    def _to_dense(self, cap):
        return self.inner._to_dense(cap).T.copy()

    @property
    def T(self):
        return self.inner


class _Adjoint(LinearOperator):
    def __init__(self, inner: LinearOperator):
        self.inner = inner
        super().__init__((inner.shape[1], inner.shape[0]), inner.field)

    def _matmat(self, X):
        return self.inner._rmatmat(X)

    def _rmatmat(self, X):
        return self.inner._matmat(X)

    def _to_dense(self, cap):
        return self.inner._to_dense(cap).conj().T.copy()

    @property
    def H(self):
        return self.inner


class Negation(LinearOperator):
    def __init__(self, inner: LinearOperator):
        self.inner = inner
        super().__init__(inner.shape, inner.field)

    def _matmat(self, X):
        return -self.inner._matmat(X)

    def _rmatmat(self, X):
        return -self.inner._rmatmat(X)

    def _to_dense(self, cap):
        return -self.inner._to_dense(cap)

    def __neg__(self):
        return self.inner


class OperatorSum(LinearOperator):
    """Elementwise sum ``Σ ops``, e.g. ``ρ(h) - I``."""

    def __init__(self, ops: Sequence[LinearOperator]):
        ops = tuple(ops)
        if not ops:
            raise ValueError("OperatorSum requires at least one operator")
        for op in ops[1:]:
            if op.shape != ops[0].shape:
                raise DimensionError(f"cannot add {ops[0].shape} and {op.shape}")
        self.ops = ops
        super().__init__(ops[0].shape, _join_fields(ops))

    def _matmat(self, X):
        X = _cast(X, self.field)
        return sum(op._matmat(X) for op in self.ops)

    def _rmatmat(self, X):
        X = _cast(X, self.field)
        return sum(op._rmatmat(X) for op in self.ops)

    def _to_dense(self, cap):
        return sum(op._to_dense(cap) for op in self.ops)


def mvm(op: LinearOperator, v):
    """``op @ v`` for a vector or a block of column vectors."""
    v = np.asarray(v)
    return op.matvec(v) if v.ndim == 1 else op.matmat(v)


def adjoint_mvm(op: LinearOperator, v):
    """``op^H @ v`` (plain transpose for real operators)."""
    v = np.asarray(v)
    return op.rmatvec(v) if v.ndim == 1 else op.rmatmat(v)


def to_dense(op: LinearOperator, cap: int = DENSE_CAP):
    return op.to_dense(cap)


def kron_permutation(perms: Sequence[np.ndarray]) -> np.ndarray:
    """Index array of the Kronecker product of permutations."""
    idx = np.asarray(perms[0], dtype=np.int64)
    for p in perms[1:]:
        p = np.asarray(p, dtype=np.int64)
        idx = (idx[:, None] * p.size + p[None, :]).ravel()
    return idx


def fuse_permutations(op: LinearOperator) -> LinearOperator:
    """Collapse nested Kronecker/direct-sum/transpose structure whose leaves are
    all permutations into a single :class:`Permutation`.  Other operators are
    returned unchanged."""
    idx = _perm_index(op)
    return op if idx is None else Permutation(idx)


def _perm_index(op):
    if isinstance(op, Permutation):
        return op.perm
    if isinstance(op, ScaledIdentity) and op.scale == 1:
        return np.arange(op.shape[0])
    if isinstance(op, (Transpose, _Adjoint)):
        inner = _perm_index(op.inner)
        if inner is None:
            return None
        inv = np.empty_like(inner)
        inv[inner] = np.arange(inner.size)
        return inv
    if isinstance(op, KroneckerProduct):
        parts = [_perm_index(f) for f in op.factors]
        if any(p is None for p in parts):
            return None
        return kron_permutation(parts)
    if isinstance(op, DirectSum):
        pieces = []
        offset = 0
        for b, m in zip(op.blocks, op.multiplicities):
            p = _perm_index(b)
            if p is None:
                return None
            for _ in range(m):
                pieces.append(p + offset)
                offset += p.size
        return np.concatenate(pieces)
    if isinstance(op, Composition):
        parts = [_perm_index(o) for o in op.ops]
        if any(p is None for p in parts):
            return None
        # (A B v)[i] = (B v)[a[i]] = v[b[a[i]]]
        idx = parts[-1]
        for p in reversed(parts[:-1]):
            idx = idx[p]
        return idx
    return None
