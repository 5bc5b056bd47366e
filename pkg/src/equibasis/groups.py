"""Matrix groups described by their generators.

A :class:`Group` is nothing more than a base dimension plus two lists of
operators on the base space: ``discrete_generators`` (the ``h_k``) and
``lie_generators`` (a basis ``A_i`` of the Lie algebra).  Every element can
be written ``exp(Σ α_i A_i) · h_{k_1} h_{k_2} ...``, which is also how
:func:`sample_element` draws random elements.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from . import linop
from .errors import CatalogError, DimensionError
from .linop import Dense, LinearOperator, Permutation, Sparse

__all__ = [
    "Group",
    "GroupElement",
    "matrix_exponential",
    "sample_element",
    "catalog",
    "parse_group",
    "group_to_json",
    "group_from_json",
    "cyclic",
    "cyclic_product",
    "symmetric",
    "dihedral",
    "gcnn",
    "special_orthogonal",
    "orthogonal",
    "lorentz",
    "symplectic",
    "special_unitary",
    "rubiks_cube",
    "direct_product",
    "LORENTZ_METRIC",
]


@dataclass(frozen=True, eq=False)
class Group:
    name: str
    base_dim: int
    field: str = "real"
    discrete_generators: tuple[LinearOperator, ...] = ()
    lie_generators: tuple[LinearOperator, ...] = ()
    is_orthogonal: bool = False
    is_permutation: bool = False
    sample_scale: float = 1.0
    key: str = ""

    def __post_init__(self):
        object.__setattr__(self, "discrete_generators", tuple(self.discrete_generators))
        object.__setattr__(self, "lie_generators", tuple(self.lie_generators))
        if self.M + self.D < 1:
            raise CatalogError(f"group {self.name} needs at least one generator")
        for g in self.discrete_generators + self.lie_generators:
            if g.shape != (self.base_dim, self.base_dim):
                raise DimensionError(f"generator of shape {g.shape} for base dimension {self.base_dim}")
            if g.field == "complex" and self.field != "complex":
                raise CatalogError("complex generator in a real group")
        if self.is_permutation and (
            self.D or not all(isinstance(h, Permutation) for h in self.discrete_generators)
        ):
            raise CatalogError("is_permutation requires permutation generators only")
        if self.is_permutation and not self.is_orthogonal:
            object.__setattr__(self, "is_orthogonal", True)
        if not self.key:
            object.__setattr__(self, "key", self.name)

    @property
    def M(self) -> int:
        return len(self.discrete_generators)

    @property
    def D(self) -> int:
        return len(self.lie_generators)

    @property
    def dtype(self):
        return np.complex128 if self.field == "complex" else np.float64

    def generator_inverse(self, k: int) -> LinearOperator:
        h = self.discrete_generators[k]
        if isinstance(h, Permutation):
            return h.inverse()
        return Dense(np.linalg.inv(h.to_dense()))

    def dense_discrete(self) -> list[np.ndarray]:
        return [h.to_dense() for h in self.discrete_generators]

    def dense_lie(self) -> list[np.ndarray]:
        return [A.to_dense() for A in self.lie_generators]

    def __eq__(self, other):
        return isinstance(other, Group) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f"Group({self.name}, dim={self.base_dim}, M={self.M}, D={self.D})"


@dataclass(frozen=True, eq=False)
class GroupElement:
    """Dense base-space matrix together with how it was produced."""

    group: Group
    matrix: np.ndarray
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(0))
    word: tuple[int, ...] = ()

    def rebuild(self) -> np.ndarray:
        """Recompute ``exp(Σ α_i A_i) ∏ h_{k_i}`` from the stored provenance."""
        return _compose(self.group, self.alpha, self.word)

    def inverse_matrix(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)


def matrix_exponential(A) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a Padé core."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"matrix_exponential needs a square matrix, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix_exponential needs finite entries")
    return scipy.linalg.expm(A)


def _compose(group: Group, alpha, word) -> np.ndarray:
    n = group.base_dim
    out = np.eye(n, dtype=group.dtype)
    if group.D and len(alpha):
        A = sum(a * L for a, L in zip(alpha, group.dense_lie()))
        out = matrix_exponential(A).astype(group.dtype)
    if word:
        mats = group.dense_discrete()
        invs = {}
        for k in word:
            if k > 0:
                out = out @ mats[k - 1]
            else:
                if -k not in invs:
                    invs[-k] = np.linalg.inv(mats[-k - 1])
                out = out @ invs[-k]
    return out


def sample_element(
    group: Group,
    rng: np.random.Generator,
    scale: float | None = None,
    *,
    alpha: Sequence[float] | None = None,
    word: Sequence[int] | None = None,
) -> GroupElement:
    """Draw ``g = exp(Σ α_i A_i) ∏ h_{k_i}``.

    ``α_i ~ N(0, scale²)``; the word has uniform length in ``[0, 2M]`` with
    uniformly drawn signed generator indices (``-k`` is the inverse of ``h_k``).
    ``alpha`` or ``word`` may be given explicitly to override the draw.
    """
    scale = group.sample_scale if scale is None else scale
    if scale <= 0:
        raise ValueError("scale must be positive")
    if alpha is None:
        alpha = rng.normal(0.0, scale, size=group.D)
    alpha = np.asarray(alpha, dtype=float)
    if word is None:
        if group.M:
            length = int(rng.integers(0, 2 * group.M + 1))
            idx = rng.integers(1, group.M + 1, size=length)
            signs = rng.choice([-1, 1], size=length)
            word = tuple(int(s * i) for s, i in zip(signs, idx))
        else:
            word = ()
    word = tuple(int(k) for k in word)
    return GroupElement(group, _compose(group, alpha, word), alpha, word)


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------


def _shift(n: int) -> np.ndarray:
    # P[n,1,2,...,n-1]: (P v)[i] = v[i-1]
    return np.roll(np.arange(n), 1)


def _swap01(n: int) -> np.ndarray:
    p = np.arange(n)
    if n >= 2:
        p[[0, 1]] = [1, 0]
    return p


def _check_n(n, minimum=1):
    if not isinstance(n, (int, np.integer)) or n < minimum:
        raise CatalogError(f"group parameter must be an integer >= {minimum}, got {n!r}")
    return int(n)


def cyclic(n: int) -> Group:
    n = _check_n(n)
    return Group(f"Z({n})", n, discrete_generators=[Permutation(_shift(n))], is_permutation=True)


def cyclic_product(n: int) -> Group:
    """``Z_n × Z_n`` acting on an ``n×n`` grid flattened row-major."""
    n = _check_n(n)
    s, e = _shift(n), np.arange(n)
    gens = [Permutation(linop.kron_permutation([s, e])), Permutation(linop.kron_permutation([e, s]))]
    return Group(f"ZxZ({n})", n * n, discrete_generators=gens, is_permutation=True)


def symmetric(n: int) -> Group:
    """``S_n`` from an n-cycle and the transposition of the first two points."""
    n = _check_n(n)
    gens = [Permutation(_shift(n)), Permutation(_swap01(n))]
    return Group(f"S({n})", n, discrete_generators=gens, is_permutation=True)


def dihedral(n: int) -> Group:
    """``D_n`` on the vertices of an n-gon: rotation plus ``i -> -i mod n``."""
    n = _check_n(n)
    reflect = (-np.arange(n)) % n
    gens = [Permutation(_shift(n)), Permutation(reflect)]
    return Group(f"D({n})", n, discrete_generators=gens, is_permutation=True)


def gcnn(n: int) -> Group:
    """``Z_4 ⋉ Z_n²`` on ``R^4 ⊗ R^{n²}`` (orientation ⊗ grid position)."""
    n = _check_n(n)
    s, e, e4 = _shift(n), np.arange(n), np.arange(4)
    tx = linop.kron_permutation([e4, s, e])
    ty = linop.kron_permutation([e4, e, s])
    # Rot90 on the grid: (i, j) <- (j, n-1-i) expressed as (R v)[i*n+j] = v[src]
    i, j = np.divmod(np.arange(n * n), n)
    rot = j * n + (n - 1 - i)
    r = linop.kron_permutation([_shift(4), rot])
    gens = [Permutation(tx), Permutation(ty), Permutation(r)]
    return Group(f"GCNN({n})", 4 * n * n, discrete_generators=gens, is_permutation=True)


def _antisymmetric_basis(n: int, indices=None) -> list[LinearOperator]:
    out = []
    pairs = indices if indices is not None else itertools.combinations(range(n), 2)
    for i, j in pairs:
        out.append(Sparse([i, j], [j, i], [1.0, -1.0], (n, n)))
    return out


def special_orthogonal(n: int) -> Group:
    n = _check_n(n)
    if n == 1:
        raise CatalogError("SO(1) is trivial; use n >= 2")
    return Group(f"SO({n})", n, lie_generators=_antisymmetric_basis(n), is_orthogonal=True)


def orthogonal(n: int) -> Group:
    n = _check_n(n)
    h = np.eye(n)
    h[0, 0] = -1
    gens = _antisymmetric_basis(n) if n >= 2 else []
    return Group(
        f"O({n})", n, discrete_generators=[Sparse.from_dense(h)], lie_generators=gens, is_orthogonal=True
    )


#: Minkowski metric, time coordinate first.
LORENTZ_METRIC = np.diag([-1.0, 1.0, 1.0, 1.0])


def _lorentz_algebra() -> list[LinearOperator]:
    gens = _antisymmetric_basis(4, [(1, 2), (1, 3), (2, 3)])
    for i in (1, 2, 3):
        gens.append(Sparse([0, i], [i, 0], [1.0, 1.0], (4, 4)))
    return gens


def lorentz(kind: str = "O") -> Group:
    """``SO+(1,3)``, ``SO(1,3)`` or ``O(1,3)`` with metric ``diag(-1,1,1,1)``."""
    if kind not in ("SO+", "SO", "O"):
        raise CatalogError(f"unknown Lorentz group kind {kind!r}")
    discrete = []
    if kind in ("SO", "O"):
        discrete.append(Sparse.from_dense(-np.eye(4)))
    if kind == "O":
        discrete.append(Sparse.from_dense(LORENTZ_METRIC))
    return Group(
        f"{kind}(1,3)", 4, discrete_generators=discrete, lie_generators=_lorentz_algebra(), sample_scale=0.3
    )


def symplectic_form(n: int) -> np.ndarray:
    I, Z = np.eye(n), np.zeros((n, n))
    return np.block([[Z, I], [-I, Z]])


def symplectic(n: int) -> Group:
    """``Sp(n)`` on ``R^{2n}``; algebra matrices ``[[B, C], [D, -Bᵀ]]`` with ``C, D`` symmetric."""
    n = _check_n(n)
    m = 2 * n
    gens = []
    for i in range(n):
        for j in range(n):
            gens.append(Sparse([i, n + j], [j, n + i], [1.0, -1.0], (m, m)) if i != j else
                        Sparse([i, n + i], [i, n + i], [1.0, -1.0], (m, m)))
    for off_r, off_c in ((0, n), (n, 0)):
        for i in range(n):
            for j in range(i, n):
                if i == j:
                    gens.append(Sparse([off_r + i], [off_c + i], [1.0], (m, m)))
                else:
                    gens.append(Sparse([off_r + i, off_r + j], [off_c + j, off_c + i], [1.0, 1.0], (m, m)))
    return Group(f"Sp({n})", m, lie_generators=gens, sample_scale=0.3)


def special_unitary(n: int) -> Group:
    n = _check_n(n, 2)
    gens = []
    for j, k in itertools.combinations(range(n), 2):
        gens.append(Sparse([j, k], [k, j], [1.0 + 0j, -1.0 + 0j], (n, n)))
        gens.append(Sparse([j, k], [k, j], [1j, 1j], (n, n)))
    for k in range(n - 1):
        gens.append(Sparse([k, k + 1], [k, k + 1], [1j, -1j], (n, n)))
    return Group(f"SU({n})", n, field="complex", lie_generators=gens, sample_scale=0.3)


def _rubiks_facets():
    """The 48 non-center facets as (position, normal) pairs on the 3x3x3 grid.

    Facets are numbered face by face in the order U, L, F, R, B, D (normals
    +z, -x, -y, +x, +y, -z); within a face, by sorted cubie position.
    """
    normals = [(0, 0, 1), (-1, 0, 0), (0, -1, 0), (1, 0, 0), (0, 1, 0), (0, 0, -1)]
    facets = []
    for nrm in normals:
        axis = int(np.flatnonzero(nrm)[0])
        face = []
        for pos in itertools.product((-1, 0, 1), repeat=3):
            if pos[axis] != nrm[axis]:
                continue
            if sum(abs(c) for c in pos) == 1:  # face center
                continue
            face.append((pos, nrm))
        facets.extend(sorted(face))
    return facets


def _rubiks_turn(facets, normal) -> np.ndarray:
    axis = int(np.flatnonzero(normal)[0])
    sign = normal[axis]
    # quarter turn about the face normal
    R = np.zeros((3, 3), dtype=int)
    a, b = [i for i in range(3) if i != axis]
    R[axis, axis] = 1
    R[a, b], R[b, a] = -sign, sign
    index = {f: i for i, f in enumerate(facets)}
    perm = np.arange(len(facets))
    for i, (pos, nrm) in enumerate(facets):
        if pos[axis] != sign:
            continue
        new = (tuple(int(x) for x in R @ pos), tuple(int(x) for x in R @ nrm))
        # facet i moves to position new: (P v)[new] = v[i]
        perm[index[new]] = i
    return perm


def rubiks_cube() -> Group:
    """Rubik's cube group acting on its 48 movable facets (see ``docs/rubiks.md``)."""
    facets = _rubiks_facets()
    faces = {"F": (0, -1, 0), "B": (0, 1, 0), "U": (0, 0, 1), "D": (0, 0, -1), "L": (-1, 0, 0), "R": (1, 0, 0)}
    gens = [Permutation(_rubiks_turn(facets, n)) for n in faces.values()]
    return Group("Rubiks", 48, discrete_generators=gens, is_permutation=True)


_CONSTRUCTORS = {
    "Z": cyclic,
    "ZxZ": cyclic_product,
    "S": symmetric,
    "D": dihedral,
    "GCNN": gcnn,
    "SO": special_orthogonal,
    "O": orthogonal,
    "Sp": symplectic,
    "SU": special_unitary,
}


def _embed(op: LinearOperator, offset: int, total: int, identity: bool) -> LinearOperator:
    """Place ``op`` on the coordinates ``[offset, offset + dim)`` of ``R^total``."""
    n = op.shape[0]
    if isinstance(op, Permutation) and identity:
        p = np.arange(total)
        p[offset : offset + n] = op.perm + offset
        return Permutation(p)
    M = np.eye(total, dtype=np.result_type(op.dtype, float)) if identity else np.zeros(
        (total, total), dtype=np.result_type(op.dtype, float)
    )
    M[offset : offset + n, offset : offset + n] = op.to_dense()
    return Sparse.from_dense(M)


def direct_product(a: Group, b: Group) -> Group:
    """``G_a × G_b`` acting block-diagonally on ``V_a ⊕ V_b``."""
    total = a.base_dim + b.base_dim
    discrete = [_embed(h, 0, total, True) for h in a.discrete_generators]
    discrete += [_embed(h, a.base_dim, total, True) for h in b.discrete_generators]
    lie = [_embed(A, 0, total, False) for A in a.lie_generators]
    lie += [_embed(A, a.base_dim, total, False) for A in b.lie_generators]
    field_ = "complex" if "complex" in (a.field, b.field) else "real"
    return Group(
        f"{a.name}x{b.name}",
        total,
        field=field_,
        discrete_generators=discrete,
        lie_generators=lie,
        is_orthogonal=a.is_orthogonal and b.is_orthogonal,
        is_permutation=a.is_permutation and b.is_permutation,
        sample_scale=min(a.sample_scale, b.sample_scale),
        key=f"({a.key})x({b.key})",
    )


def catalog(name: str, *params: int) -> Group:
    """Look up a built-in group, e.g. ``catalog("SO", 3)`` or ``catalog("Rubiks")``."""
    if name in ("Rubiks", "RubiksCube"):
        if params:
            raise CatalogError("Rubiks takes no parameters")
        return rubiks_cube()
    if name in ("SO+", "SO", "O") and len(params) == 2:
        if tuple(params) != (1, 3):
            raise CatalogError("only the (1,3) signature is supported for Lorentz groups")
        return lorentz(name)
    if name == "Lorentz" and not params:
        return lorentz("O")
    if name not in _CONSTRUCTORS:
        raise CatalogError(f"unknown group {name!r}")
    if len(params) != 1:
        raise CatalogError(f"{name} takes exactly one integer parameter")
    return _CONSTRUCTORS[name](params[0])


_GROUP_RE = re.compile(r"^\s*([A-Za-z]+\+?)\s*(?:\(\s*([0-9,\s]*)\s*\))?\s*$")


def parse_group(spec: str) -> Group:
    """Parse ``"SO(3)"``, ``"S(6)"``, ``"SO+(1,3)"``, ``"Rubiks"`` etc."""
    m = _GROUP_RE.match(spec)
    if not m:
        raise CatalogError(f"cannot parse group spec {spec!r}")
    name, args = m.group(1), m.group(2)
    params = tuple(int(a) for a in args.split(",") if a.strip()) if args else ()
    return catalog(name, *params)


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def _encode_matrix(M: np.ndarray, field_: str):
    flat = M.reshape(-1)
    if field_ == "complex":
        return [[float(z.real), float(z.imag)] for z in flat]
    return [float(x) for x in flat.real]


def group_to_json(group: Group) -> str:
    doc = {
        "name": group.name,
        "field": group.field,
        "base_dim": group.base_dim,
        "discrete_generators": [_encode_matrix(h, group.field) for h in group.dense_discrete()],
        "lie_generators": [_encode_matrix(A, group.field) for A in group.dense_lie()],
    }
    return json.dumps(doc)


def group_from_json(text: str) -> Group:
    """Build a group from ``{name, field, base_dim?, discrete_generators, lie_generators}``.

    Matrices are flat row-major lists; complex entries are ``[re, im]`` pairs.
    Permutation matrices are detected and stored as permutations.
    """
    doc = json.loads(text)
    try:
        name = doc["name"]
        field_ = doc.get("field", "real")
        raw_d = doc.get("discrete_generators", [])
        raw_l = doc.get("lie_generators", [])
    except (KeyError, TypeError) as exc:
        raise CatalogError(f"malformed group document: {exc}") from exc
    if field_ not in ("real", "complex"):
        raise CatalogError(f"unknown field {field_!r}")

    def decode(flat):
        arr = np.asarray(flat, dtype=float)
        if field_ == "complex":
            arr = arr[..., 0] + 1j * arr[..., 1]
        n = int(round(np.sqrt(arr.size)))
        if n * n != arr.size:
            raise CatalogError("generator entries do not form a square matrix")
        return arr.reshape(n, n)

    disc = [decode(h) for h in raw_d]
    lie = [decode(A) for A in raw_l]
    mats = disc + lie
    if not mats:
        raise CatalogError("group document lists no generators")
    n = doc.get("base_dim", mats[0].shape[0])
    ops = []
    all_perm = True
    for h in disc:
        p = _as_perm(h)
        all_perm &= p is not None
        ops.append(Permutation(p) if p is not None else Dense(h))
    is_perm = all_perm and not lie
    orth = is_perm or (
        field_ == "real"
        and all(np.allclose(h.T @ h, np.eye(n)) for h in disc)
        and all(np.allclose(A.T, -A) for A in lie)
    )
    digest = hashlib.sha256(json.dumps([_encode_matrix(m, field_) for m in mats]).encode()).hexdigest()[:16]
    return Group(
        name,
        n,
        field=field_,
        discrete_generators=ops,
        lie_generators=[Dense(A) for A in lie],
        is_orthogonal=orth,
        is_permutation=is_perm,
        key=f"{name}#{digest}",
    )


def _as_perm(M: np.ndarray):
    if np.iscomplexobj(M) and np.any(M.imag):
        return None
    M = M.real
    if not np.all((M == 0) | (M == 1)):
        return None
    if not (np.all(M.sum(0) == 1) and np.all(M.sum(1) == 1)):
        return None
    return np.argmax(M, axis=1)
