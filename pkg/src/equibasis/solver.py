"""Equivariant bases as nullspaces of stacked generator constraints.

A vector ``v`` of a rep is fixed by the whole group iff ``dρ(A_i) v = 0`` for
every Lie generator and ``(ρ(h_k) - I) v = 0`` for every discrete generator.
Stacking these blocks gives a constraint matrix ``C`` whose nullspace is the
symmetric subspace.  Small problems use a dense SVD; large ones use the
MVM-only iteration ``X <- X - η Cᴴ C X`` followed by a small SVD, doubling
the column cap until the detected rank falls below it.

Reps are first brought to canonical form, so a direct sum is solved one
distinct tensor term at a time and reassembled in user coordinates.
"""
from __future__ import annotations

import hashlib
import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import basis_io
from .errors import ConvergenceError, DimensionError, SizeError, SolverError
from .groups import Group
from .linop import (
    DENSE_CAP,
    LinearOperator,
    Negation,
    OperatorSum,
    Permutation,
    ScaledIdentity,
    fuse_permutations,
)
from .reps import Rep, drho, hom_rep, rho, term_expr

logger = logging.getLogger(__name__)

__all__ = [
    "ConstraintMatrix",
    "EquivariantBasis",
    "BasisBlock",
    "BasisCache",
    "Solver",
    "KrylovInfo",
    "assemble_constraints",
    "nullspace_dense",
    "capped_krylov_nullspace",
    "krylov_nullspace",
    "solve_basis",
    "solve_hom_basis",
    "product_group_basis",
    "projector_apply",
    "principal_angles",
    "sampled_residual",
    "fix_signs",
]

#: Singular values below ``TAU * max(σ_1, 1)`` are treated as zero.
TAU = 1e-5
DENSE_MAX_DIM = 1024


class _PermMinusIdentity(LinearOperator):
    """``P - I`` for a permutation ``P``; the common discrete constraint."""

    def __init__(self, perm: Permutation):
        self.perm = perm
        super().__init__(perm.shape, "real")

    def _matmat(self, X):
        return X[self.perm.perm] - X

    def _rmatmat(self, X):
        return X[self.perm.inverse_perm] - X

    def _to_dense(self, cap):
        return self.perm._to_dense(cap) - np.eye(self.shape[0])


class ConstraintMatrix:
    """Vertical stack of ``dρ(A_1), ..., dρ(A_D), ρ(h_1) - I, ..., ρ(h_M) - I``."""

    def __init__(self, blocks: Sequence[LinearOperator]):
        blocks = tuple(blocks)
        if not blocks:
            raise ValueError("a constraint matrix needs at least one block")
        n = blocks[0].shape[1]
        for b in blocks:
            if b.shape[1] != n:
                raise DimensionError("constraint blocks must share the column dimension")
        self.blocks = blocks
        self.field = "complex" if any(b.field == "complex" for b in blocks) else "real"

    @property
    def shape(self):
        return (sum(b.shape[0] for b in self.blocks), self.blocks[0].shape[1])

    @property
    def dtype(self):
        return np.complex128 if self.field == "complex" else np.float64

    def matmat_blocks(self, X) -> list[np.ndarray]:
        return [b.matmat(X) for b in self.blocks]

    def matmat(self, X):
        return np.concatenate(self.matmat_blocks(X), axis=0)

    def rmatmat_blocks(self, Ys) -> np.ndarray:
        out = None
        for b, Y in zip(self.blocks, Ys):
            t = b.rmatmat(Y)
            out = t if out is None else out + t
        return out

    def rmatmat(self, Y):
        Ys, i = [], 0
        for b in self.blocks:
            Ys.append(Y[i : i + b.shape[0]])
            i += b.shape[0]
        return self.rmatmat_blocks(Ys)

    def normal_matmat(self, X):
        """``Cᴴ C X`` and ``‖C X‖_F²``, one block at a time to bound memory."""
        out = None
        loss = 0.0
        for b in self.blocks:
            c = b.matmat(X)
            loss += float(np.vdot(c, c).real)
            t = b.rmatmat(c)
            del c
            if out is None:
                out = t
            else:
                out += t
        return out, loss

    def to_dense(self, cap: int = DENSE_CAP):
        rows, cols = self.shape
        if rows * cols > cap:
            raise SizeError(
                f"dense constraint matrix {rows}x{cols} exceeds cap; use the Krylov solver"
            )
        return np.concatenate([b.to_dense(cap) for b in self.blocks], axis=0)

    def residuals(self, Q) -> list[float]:
        return [float(np.linalg.norm(b.matmat(Q))) for b in self.blocks]


def assemble_constraints(rep: Rep) -> ConstraintMatrix:
    group = rep.group
    n = rep.dim
    blocks: list[LinearOperator] = [drho(rep, i) for i in range(group.D)]
    for k in range(group.M):
        op = fuse_permutations(rho(rep, k))
        if isinstance(op, Permutation):
            blocks.append(_PermMinusIdentity(op))
        else:
            blocks.append(OperatorSum([op, Negation(ScaledIdentity(1.0, n))]))
    return ConstraintMatrix(blocks)


def fix_signs(Q: np.ndarray) -> np.ndarray:
    """Make the first non-negligible entry of every column real positive."""
    Q = np.array(Q, copy=True)
    for j in range(Q.shape[1]):
        col = Q[:, j]
        big = np.flatnonzero(np.abs(col) > 1e-8 * max(np.abs(col).max(), 1e-300))
        if big.size:
            z = col[big[0]]
            Q[:, j] = col * (np.conj(z) / abs(z))
    return Q


def _rank_cut(s: np.ndarray, tau: float) -> int:
    if s.size == 0:
        return 0
    return int(np.sum(s > tau * max(s[0], 1.0)))


def nullspace_dense(C: ConstraintMatrix, tol: float = TAU, cap: int = DENSE_CAP) -> np.ndarray:
    """Orthonormal nullspace basis by SVD of the materialized constraint matrix."""
    A = C.to_dense(cap)
    n = A.shape[1]
    if A.shape[0] > 2 * n:
        # same right singular vectors, far smaller SVD
        A = np.linalg.qr(A, mode="r")
    _, s, Vh = np.linalg.svd(A, full_matrices=True)
    full = np.zeros(n)
    full[: s.size] = s
    r = n - _rank_cut(full, tol)
    Q = Vh[n - r :].conj().T
    return fix_signs(Q)


@dataclass
class KrylovInfo:
    losses: list = field(default_factory=list)
    iterations: int = 0
    eta: float = 0.0
    r_max: int = 0
    converged_at: int | None = None
    singular_values: np.ndarray | None = None


def _sigma_max_sq(C: ConstraintMatrix, rng: np.random.Generator, iters: int = 30) -> float:
    n = C.shape[1]
    v = rng.standard_normal((n, 1))
    if C.field == "complex":
        v = v + 1j * rng.standard_normal((n, 1))
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w, _ = C.normal_matmat(v)
        est = float(np.linalg.norm(w))
        if est == 0.0:
            return 0.0
        v = w / est
    return est


def capped_krylov_nullspace(
    C: ConstraintMatrix,
    r_max: int,
    eps: float | None = None,
    seed: int = 0,
    max_iter: int = 10000,
    momentum: bool = False,
    info: KrylovInfo | None = None,
    polish: float = 1e-10,
) -> np.ndarray:
    """Minimize ``‖C X‖_F²`` from a Gaussian start; return the final ``X``.

    Plain gradient descent ``X <- X - η Cᴴ(C X)`` with ``η = 1.8/σ̂²_max``
    (``σ̂_max`` from 30 power iterations).  With ``momentum=True`` a Nesterov
    step with gradient restarts is used instead; both leave the nullspace
    component of ``X`` untouched.

    Convergence means the loss dropped to ``eps``.  The iteration then keeps
    going until the loss reaches ``eps * polish`` or stops improving, so that
    the slowly decaying non-null directions fall well below the rank cutoff;
    ``polish=0`` stops right at ``eps``.

    Raises :class:`ConvergenceError` if the loss stays above ``eps`` after
    ``max_iter`` steps.
    """
    if r_max < 1:
        raise ValueError("r_max must be >= 1")
    n = C.shape[1]
    eps = 1e-10 * n if eps is None else eps
    if eps <= 0:
        raise ValueError("eps must be positive")
    info = info if info is not None else KrylovInfo()
    info.r_max = r_max
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, r_max))
    if C.field == "complex":
        X = X + 1j * rng.standard_normal((n, r_max))
    s2 = _sigma_max_sq(C, rng)
    if s2 == 0.0:
        info.converged_at = 0
        return X
    # accelerated steps are only stable below 1/L
    eta = (0.95 if momentum else 1.8) / s2

    target = eps * polish
    X_prev = X
    k = 0
    prev_loss = np.inf
    best, best_at = np.inf, 0
    for it in range(max_iter + 1):
        Y = X + (k / (k + 3.0)) * (X - X_prev) if momentum and k else X
        G, loss = C.normal_matmat(Y)
        info.losses.append(loss)
        if info.converged_at is None and loss <= eps:
            info.converged_at = it
        if info.converged_at is not None:
            if loss < 0.5 * best:
                best, best_at = loss, it
            stalled = it - best_at > max(50, info.converged_at // 2)
            budget = it - info.converged_at > 2 * info.converged_at + 100
            if loss <= target or stalled or budget:
                X = Y
                break
        if it == max_iter:
            X = Y
            break
        if not momentum and loss > prev_loss:
            eta *= 0.5
        prev_loss = loss
        X_new = Y - eta * G
        if momentum and np.vdot(G, X_new - X).real > 0:
            # gradient restart: drop the accumulated velocity
            X_prev, X, k = X_new, X_new, 0
            continue
        X_prev, X = X, X_new
        k += 1
    info.iterations = len(info.losses) - 1
    info.eta = eta
    if info.converged_at is None:
        raise ConvergenceError(
            f"Krylov iteration stalled at loss {loss:.3e} > eps {eps:.3e} after {max_iter} steps",
            loss=loss,
            iterations=max_iter,
        )
    return X


def _svd_rank(X: np.ndarray, tau: float):
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    return U, s, _rank_cut(s, tau)


def krylov_nullspace(
    C: ConstraintMatrix,
    eps: float | None = None,
    seed: int = 0,
    r_start: int = 10,
    tau: float = TAU,
    max_iter: int = 10000,
    momentum: bool = False,
    infos: list | None = None,
) -> np.ndarray:
    """Nullspace basis via rank doubling of :func:`capped_krylov_nullspace`."""
    n = C.shape[1]
    r_max = min(r_start, n)
    while True:
        info = KrylovInfo()
        X = capped_krylov_nullspace(C, r_max, eps, seed + r_max, max_iter, momentum, info)
        U, s, r = _svd_rank(X, tau)
        info.singular_values = s
        if infos is not None:
            infos.append(info)
        if r < r_max or r_max >= n:
            return fix_signs(U[:, :r])
        r_max = min(2 * r_max, n)


# ---------------------------------------------------------------------------
# bases
# ---------------------------------------------------------------------------


@dataclass
class BasisBlock:
    """Basis ``Q`` of one canonical term, replicated at every copy's coordinates."""

    term: str
    Q: np.ndarray
    copies: list

    @property
    def rank(self):
        return self.Q.shape[1] * len(self.copies)


class EquivariantBasis:
    """Orthonormal basis of the symmetric subspace of ``rep``.

    Stored block-wise; ``Q`` materializes the full ``dim x r`` matrix on
    demand.  Columns are ordered by canonical term, then copy, then the
    term's own basis vectors.
    """

    def __init__(self, rep: Rep, blocks: Sequence[BasisBlock], residual: float = 0.0):
        self.rep = rep
        self.blocks = list(blocks)
        self.residual = float(residual)
        self._Q = None

    @classmethod
    def from_matrix(cls, rep: Rep, Q: np.ndarray, residual: float | None = None):
        Q = np.asarray(Q)
        if Q.shape[0] != rep.dim:
            raise DimensionError(f"basis has {Q.shape[0]} rows, rep has dim {rep.dim}")
        block = BasisBlock(rep.key, Q, [np.arange(rep.dim)])
        if residual is None:
            residual = max(assemble_constraints(rep).residuals(Q), default=0.0) if Q.size else 0.0
        return cls(rep, [block], residual)

    @property
    def dim(self) -> int:
        return self.rep.dim

    @property
    def rank(self) -> int:
        return sum(b.rank for b in self.blocks)

    r = rank

    @property
    def field(self) -> str:
        return "complex" if any(np.iscomplexobj(b.Q) for b in self.blocks) else "real"

    @property
    def dtype(self):
        return np.complex128 if self.field == "complex" else np.float64

    @property
    def Q(self) -> np.ndarray:
        if self._Q is None:
            Q = np.zeros((self.dim, self.rank), dtype=self.dtype)
            col = 0
            for b in self.blocks:
                rb = b.Q.shape[1]
                for idx in b.copies:
                    Q[idx, col : col + rb] = b.Q
                    col += rb
            self._Q = Q
        return self._Q

    def expand(self, beta) -> np.ndarray:
        """``Q β`` without materializing ``Q``."""
        beta = np.asarray(beta)
        if beta.shape[0] != self.rank:
            raise DimensionError(f"expected {self.rank} coefficients, got {beta.shape[0]}")
        dtype = np.result_type(self.dtype, beta.dtype)
        out = np.zeros((self.dim,) + beta.shape[1:], dtype=dtype)
        col = 0
        for b in self.blocks:
            rb = b.Q.shape[1]
            for idx in b.copies:
                out[idx] += b.Q @ beta[col : col + rb]
                col += rb
        return out

    def coefficients(self, v) -> np.ndarray:
        """``Qᴴ v``."""
        v = np.asarray(v)
        if v.shape[0] != self.dim:
            raise DimensionError(f"expected length {self.dim}, got {v.shape[0]}")
        parts = [b.Q.conj().T @ v[idx] for b in self.blocks for idx in b.copies]
        if not parts:
            return np.zeros((0,) + v.shape[1:], dtype=np.result_type(self.dtype, v.dtype))
        return np.concatenate(parts, axis=0)

    def project(self, v) -> np.ndarray:
        """``Q Qᴴ v``."""
        return self.expand(self.coefficients(v))

    def to_bytes(self) -> bytes:
        return basis_io.encode_basis(self.Q, self.rep.key)

    def write(self, path) -> None:
        basis_io.write_basis(path, self.Q, self.rep.key)

    def __repr__(self):
        return f"EquivariantBasis({self.rep.key}, dim={self.dim}, rank={self.rank})"


def projector_apply(basis: EquivariantBasis, v0) -> np.ndarray:
    return basis.project(v0)


def principal_angles(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Principal angles between ``span(A)`` and ``span(B)`` (columns orthonormalized).

    Subspaces of different dimension get ``π/2`` for every unmatched direction.
    """
    if A.shape[1] == 0 and B.shape[1] == 0:
        return np.zeros(0)
    if A.shape[1] == 0 or B.shape[1] == 0:
        return np.full(max(A.shape[1], B.shape[1]), np.pi / 2)
    qa, _ = np.linalg.qr(A)
    qb, _ = np.linalg.qr(B)
    s = np.linalg.svd(qa.conj().T @ qb, compute_uv=False)
    s = np.clip(s, -1.0, 1.0)
    # sines are more accurate than arccos near zero
    small = min(qa.shape[1], qb.shape[1])
    proj = qb - qa @ (qa.conj().T @ qb) if qa.shape[1] >= qb.shape[1] else qa - qb @ (qb.conj().T @ qa)
    sines = np.linalg.svd(proj, compute_uv=False)[:small]
    angles = np.arcsin(np.clip(np.sort(sines), 0.0, 1.0))
    extra = abs(qa.shape[1] - qb.shape[1])
    return np.concatenate([angles, np.full(extra, np.pi / 2)])


# ---------------------------------------------------------------------------
# cache and solver front end
# ---------------------------------------------------------------------------


class BasisCache:
    """In-memory map backed by an optional directory of EQB1 files."""

    def __init__(self, directory=None):
        if directory is None:
            directory = os.environ.get("EQUIBASIS_CACHE") or None
        self.directory = Path(directory) if directory else None
        self._mem: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def _path(self, key):
        return self.directory / (hashlib.sha256(key.encode()).hexdigest()[:32] + ".eqb")

    def get(self, key):
        with self._lock:
            if key in self._mem:
                return self._mem[key]
        if self.directory is not None:
            p = self._path(key)
            if p.exists():
                try:
                    Q, stored = basis_io.read_basis(p)
                except Exception:  # corrupt entry: recompute
                    return None
                if stored == key:
                    with self._lock:
                        self._mem[key] = Q
                    return Q
        return None

    def put(self, key, Q):
        with self._lock:
            self._mem[key] = Q
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            p = self._path(key)
            tmp = p.with_suffix(f".{os.getpid()}.{threading.get_ident()}.tmp")
            basis_io.write_basis(tmp, Q, key)
            os.replace(tmp, p)

    def clear(self):
        with self._lock:
            self._mem.clear()


@dataclass
class Solver:
    """Configurable front end.

    ``method`` is ``"auto"`` (dense up to ``dense_max_dim``, Krylov beyond),
    ``"dense"`` or ``"krylov"``.  ``eps=None`` means ``1e-10 * dim`` per term.
    ``momentum=None`` runs the plain iteration and falls back to the
    accelerated one only if the plain one hits ``max_iter``.
    """

    method: str = "auto"
    dense_max_dim: int = DENSE_MAX_DIM
    dense_cap: int = DENSE_CAP
    eps: float | None = None
    tau: float = TAU
    seed: int = 0
    max_iter: int = 10000
    r_start: int = 10
    momentum: bool | None = None
    cache: BasisCache | None = field(default_factory=BasisCache)

    def term_basis(self, rep: Rep) -> np.ndarray:
        """Basis for a single (already canonical) term rep."""
        key = rep.key
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return hit
        n = rep.dim
        C = assemble_constraints(rep)
        method = self.method
        if method == "auto":
            method = "dense" if n <= self.dense_max_dim else "krylov"
        if method == "dense":
            Q = nullspace_dense(C, self.tau, self.dense_cap)
        elif method == "krylov":
            Q = self._krylov(C)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        logger.debug("solved %s: dim=%d rank=%d via %s", key, n, Q.shape[1], method)
        if self.cache is not None:
            self.cache.put(key, Q)
        return Q

    def _krylov(self, C):
        args = (C, self.eps, self.seed, self.r_start, self.tau, self.max_iter)
        if self.momentum is not None:
            return krylov_nullspace(*args, momentum=self.momentum)
        try:
            return krylov_nullspace(*args, momentum=False)
        except ConvergenceError as exc:
            logger.info("plain iteration did not converge (%s); retrying with momentum", exc)
            return krylov_nullspace(*args, momentum=True)

    def solve(self, rep: Rep) -> EquivariantBasis:
        can = rep.canonical()
        blocks = []
        residual = 0.0
        for atoms, copies in can.terms:
            term = can.term_rep(atoms)
            try:
                Q = self.term_basis(term)
            except (ConvergenceError, SizeError) as exc:
                raise SolverError(f"block {term_expr(atoms)} of {can.expr()}: {exc}", block=term_expr(atoms)) from exc
            if Q.shape[1]:
                residual = max(residual, max(assemble_constraints(term).residuals(Q)))
            blocks.append(BasisBlock(term_expr(atoms), Q, list(copies)))
        return EquivariantBasis(rep, blocks, residual)

    def solve_hom(self, input: Rep, output: Rep) -> EquivariantBasis:
        return self.solve(hom_rep(input, output))


_default_solver = Solver()


def solve_basis(rep: Rep, solver: Solver | None = None, **options) -> EquivariantBasis:
    if options:
        solver = Solver(**options)
    return (solver or _default_solver).solve(rep)


def solve_hom_basis(input: Rep, output: Rep, solver: Solver | None = None, **options) -> EquivariantBasis:
    """Basis of equivariant maps ``input -> output``; vectors reshape to
    ``(dim(output), dim(input))`` matrices in row-major order."""
    return solve_basis(hom_rep(input, output), solver, **options)


def product_group_basis(Qa: EquivariantBasis, Qb: EquivariantBasis) -> EquivariantBasis:
    """Basis for ``G_a × G_b`` acting by ``ρ_a ⊗ ρ_b``: all Kronecker pairs of columns."""
    from .reps import ExternalProduct

    rep = ExternalProduct(Qa.rep, Qb.rep)
    Q = np.kron(Qa.Q, Qb.Q)
    return EquivariantBasis(rep, [BasisBlock(rep.key, Q, [np.arange(rep.dim)])], 0.0)


def _op_norm_estimate(op: LinearOperator, rng: np.random.Generator, iters: int = 8) -> float:
    v = rng.standard_normal(op.shape[1]).astype(op.dtype)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = op.rmatvec(op.matvec(v))
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        est = np.sqrt(nw)
        v = w / nw
    return float(est)


def sampled_residual(rep: Rep, Q, samples: int = 20, seed: int = 0, scale: float | None = None):
    """Largest ``‖ρ(g) q - q‖`` over unit-normalized columns ``q`` of ``Q`` and
    ``samples`` random group elements.

    Returns ``(raw, relative)`` where ``relative`` divides each residual by
    ``max(1, ‖ρ(g)‖)`` (power-iteration estimate), which matters for
    non-compact groups.
    """
    from .groups import sample_element

    Q = np.asarray(Q)
    if Q.shape[0] != rep.dim:
        raise DimensionError(f"basis has {Q.shape[0]} rows, rep has dim {rep.dim}")
    if Q.shape[1] == 0:
        return 0.0, 0.0
    norms = np.linalg.norm(Q, axis=0)
    Qn = Q / np.where(norms > 0, norms, 1.0)
    rng = np.random.default_rng(seed)
    raw = rel = 0.0
    for _ in range(samples):
        g = sample_element(rep.group, rng, scale)
        op = rho(rep, g)
        R = op.matmat(Qn) - Qn
        r = float(np.linalg.norm(R, axis=0).max())
        raw = max(raw, r)
        rel = max(rel, r / max(1.0, _op_norm_estimate(op, rng)))
    return raw, rel
