"""Representation algebra over a :class:`~equibasis.groups.Group`.

Reps are expression trees over the base space ``V``, its dual, direct sums
(with multiplicities) and tensor products.  ``rho`` and ``drho`` build the
group and Lie-algebra actions as structured operators:

====================  ===========================  ============================
expression            ρ(g)                         dρ(A)
====================  ===========================  ============================
``V``                 ``g``                        ``A``
``dual(R)``           ``ρ_R(g⁻¹)ᵀ``                ``-dρ_R(A)ᵀ``
``R1 + R2``           ``ρ_1(g) ⊕ ρ_2(g)``          ``dρ_1(A) ⊕ dρ_2(A)``
``R1 * R2``           ``ρ_1(g) ⊗ ρ_2(g)``          ``dρ_1(A) ⊕̄ dρ_2(A)``
====================  ===========================  ============================

Every rep also has a canonical normal form: a sorted direct sum of tensor
products of atoms (``V``, ``V*`` or user atoms) together with the index
permutation that maps user coordinates onto canonical ones.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from math import prod
from typing import Callable, Sequence

import numpy as np

from .errors import GroupMismatchError, RepParseError
from .groups import Group, GroupElement
from .linop import (
    Dense,
    DirectSum,
    KroneckerProduct,
    KroneckerSum,
    LinearOperator,
    Negation,
    ScaledIdentity,
    Transpose,
)

__all__ = [
    "Rep",
    "Base",
    "Dual",
    "SumRep",
    "ProductRep",
    "CustomRep",
    "ExternalProduct",
    "Canonical",
    "tensor_rep",
    "scalar_rep",
    "hom_rep",
    "dual",
    "rho",
    "drho",
    "canonical_key",
    "parse_rep",
]


class Rep:
    """Base class of representation expressions.  Instances are immutable."""

    group: Group

    @property
    def dim(self) -> int:
        raise NotImplementedError

    # -- operators -------------------------------------------------------------
    def _rho(self, fwd: LinearOperator, inv: LinearOperator) -> LinearOperator:
        raise NotImplementedError

    def _drho(self, A: LinearOperator) -> LinearOperator:
        raise NotImplementedError

    def rho(self, g) -> LinearOperator:
        return rho(self, g)

    def drho(self, i: int) -> LinearOperator:
        return drho(self, i)

    # -- algebra --------------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Rep):
            return SumRep.of([(self, 1), (other, 1)])
        return NotImplemented

    def __mul__(self, other):
        if isinstance(other, Rep):
            return ProductRep.of([self, other])
        if isinstance(other, (int, np.integer)):
            return SumRep.of([(self, int(other))])
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, (int, np.integer)):
            return SumRep.of([(self, int(other))])
        return NotImplemented

    def __pow__(self, k: int):
        return ProductRep.of([self] * int(k)) if k else scalar_rep(self.group)

    @property
    def star(self) -> Rep:
        return dual(self)

    def __rshift__(self, other: Rep) -> Rep:
        """``a >> b`` is the space of linear maps from ``a`` to ``b``."""
        return hom_rep(self, other)

    # -- canonical form -------------------------------------------------------
    def canonical(self) -> Canonical:
        c = self.__dict__.get("_canonical")
        if c is None:
            c = Canonical.build(self)
            object.__setattr__(self, "_canonical", c)
        return c

    @property
    def key(self) -> str:
        return self.canonical().key

    def __eq__(self, other):
        return isinstance(other, Rep) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __str__(self):
        return self.expr()

    def __repr__(self):
        return f"Rep({self.expr()} of {self.group.name})"

    def expr(self) -> str:
        raise NotImplementedError

    # leaves of the normal form; composite reps return None
    def _atom(self):
        return None


def _freeze(obj, **attrs):
    for k, v in attrs.items():
        object.__setattr__(obj, k, v)


class Base(Rep):
    """The defining representation ``V``."""

    def __init__(self, group: Group):
        _freeze(self, group=group)

    @property
    def dim(self):
        return self.group.base_dim

    def _rho(self, fwd, inv):
        return fwd

    def _drho(self, A):
        return A

    def expr(self):
        return "V"

    def _atom(self):
        return ("V",)


class Dual(Rep):
    def __init__(self, inner: Rep):
        _freeze(self, group=inner.group, inner=inner)

    @property
    def dim(self):
        return self.inner.dim

    def _rho(self, fwd, inv):
        return Transpose(self.inner._rho(inv, fwd))

    def _drho(self, A):
        return Negation(Transpose(self.inner._drho(A)))

    def expr(self):
        return "V*" if isinstance(self.inner, Base) else f"dual({self.inner.expr()})"

    def _atom(self):
        a = self.inner._atom()
        if a is None:
            return None
        if self.group.is_orthogonal:
            return a
        return (a[0][:-1],) if a[0].endswith("*") else (a[0] + "*",)


class SumRep(Rep):
    """``⊕ m_i R_i``; multiplicities are stored as counts."""

    def __init__(self, terms: Sequence[tuple[Rep, int]]):
        terms = tuple((r, int(m)) for r, m in terms)
        if not terms:
            raise ValueError("empty direct sum")
        _check_same_group([r for r, _ in terms])
        for _, m in terms:
            if m < 1:
                raise ValueError("multiplicities must be positive")
        _freeze(self, group=terms[0][0].group, terms=terms)

    @classmethod
    def of(cls, terms):
        flat = []
        for r, m in terms:
            if m == 0:
                continue
            if isinstance(r, SumRep):
                flat.extend((rr, mm * m) for rr, mm in r.terms)
            else:
                flat.append((r, m))
        if len(flat) == 1 and flat[0][1] == 1:
            return flat[0][0]
        return cls(flat)

    @property
    def dim(self):
        return sum(r.dim * m for r, m in self.terms)

    def _rho(self, fwd, inv):
        return DirectSum([r._rho(fwd, inv) for r, _ in self.terms], [m for _, m in self.terms])

    def _drho(self, A):
        return DirectSum([r._drho(A) for r, _ in self.terms], [m for _, m in self.terms])

    def expr(self):
        parts = []
        for r, m in self.terms:
            s = r.expr()
            if isinstance(r, SumRep):
                s = f"({s})"
            parts.append(s if m == 1 else f"{m}*{_wrap(r, s)}")
        return "+".join(parts)


class ProductRep(Rep):
    """``R_1 ⊗ ... ⊗ R_k``; the empty product is the trivial rep ``T0``."""

    def __init__(self, factors: Sequence[Rep], group: Group | None = None):
        factors = tuple(factors)
        if factors:
            _check_same_group(factors)
            group = factors[0].group
        if group is None:
            raise ValueError("the empty product needs an explicit group")
        _freeze(self, group=group, factors=factors)

    @classmethod
    def of(cls, factors):
        flat = []
        for f in factors:
            flat.extend(f.factors if isinstance(f, ProductRep) else [f])
        if len(flat) == 1:
            return flat[0]
        return cls(flat, factors[0].group if factors else None)

    @property
    def dim(self):
        return prod(f.dim for f in self.factors)

    def _rho(self, fwd, inv):
        if not self.factors:
            return ScaledIdentity(1.0, 1)
        return KroneckerProduct([f._rho(fwd, inv) for f in self.factors])

    def _drho(self, A):
        if not self.factors:
            return ScaledIdentity(0.0, 1)
        return KroneckerSum([f._drho(A) for f in self.factors])

    def expr(self):
        if not self.factors:
            return "T0"
        p, q = _tensor_counts(self.factors)
        if p is not None and p + q > 1:
            return f"T({p},{q})"
        # "@" keeps a trailing dual star from merging into "**"
        return "@".join(_wrap(f, f.expr()) for f in self.factors)


class CustomRep(Rep):
    """User-defined atom.

    ``rho_fn`` maps a base-space matrix ``ρ(g)`` to this rep's matrix (or
    operator); ``drho_fn`` maps a base-space Lie algebra matrix ``A`` to
    ``dρ̃(A)``.  ``name`` identifies the atom in canonical keys, so two
    custom reps with the same name must act identically.
    """

    def __init__(self, group: Group, name: str, size: int, rho_fn: Callable, drho_fn: Callable | None = None):
        _freeze(self, group=group, name=name, size=int(size), rho_fn=rho_fn, drho_fn=drho_fn)

    @property
    def dim(self):
        return self.size

    @staticmethod
    def _wrap_op(x):
        return x if isinstance(x, LinearOperator) else Dense(x)

    def _rho(self, fwd, inv):
        return self._wrap_op(self.rho_fn(fwd.to_dense()))

    def _drho(self, A):
        if self.drho_fn is None:
            raise NotImplementedError(f"{self.name} has no Lie algebra action")
        return self._wrap_op(self.drho_fn(A.to_dense()))

    def expr(self):
        return self.name

    def _atom(self):
        return (f"~{self.name}",)


class ExternalProduct(CustomRep):
    """``ρ_a ⊗ ρ_b`` as a rep of ``G_a × G_b`` (see :func:`groups.direct_product`).

    A product-group element is block diagonal ``diag(g_a, g_b)``; each block
    is pushed through its own rep and the results are Kronecker-multiplied.
    """

    def __init__(self, a: Rep, b: Rep):
        from .groups import direct_product

        group = direct_product(a.group, b.group)
        CustomRep.__init__(self, group, f"[{a.key}]x[{b.key}]", a.dim * b.dim, None, None)
        _freeze(self, left=a, right=b)

    def _rho(self, fwd, inv):
        # keep permutation structure for the generators acting on one side only
        fwd_d = fwd.to_dense()
        na = self.left.group.base_dim
        ga, gb = fwd_d[:na, :na], fwd_d[na:, na:]
        inv_d = inv.to_dense()
        ra = self.left._rho(Dense(ga), Dense(inv_d[:na, :na]))
        rb = self.right._rho(Dense(gb), Dense(inv_d[na:, na:]))
        return KroneckerProduct([ra, rb])

    def _drho(self, A):
        Ad = A.to_dense()
        na = self.left.group.base_dim
        return KroneckerSum([self.left._drho(Dense(Ad[:na, :na])), self.right._drho(Dense(Ad[na:, na:]))])


def _wrap(r: Rep, s: str) -> str:
    return f"({s})" if isinstance(r, SumRep) else s


def _tensor_counts(factors):
    p = q = 0
    for f in factors:
        if isinstance(f, Base):
            p += 1
        elif isinstance(f, Dual) and isinstance(f.inner, Base):
            q += 1
        else:
            return None, None
    return p, q


def _check_same_group(reps):
    g = reps[0].group
    for r in reps[1:]:
        if r.group != g:
            raise GroupMismatchError(f"cannot combine reps of {g.name} and {r.group.name}")


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------


def scalar_rep(group: Group) -> Rep:
    return ProductRep((), group)


def tensor_rep(group: Group, p: int, q: int = 0) -> Rep:
    """``T(p,q) = V^{⊗p} ⊗ (V*)^{⊗q}``."""
    if p < 0 or q < 0:
        raise ValueError("tensor ranks must be non-negative")
    V = Base(group)
    factors = [V] * p + [Dual(V)] * q
    if not factors:
        return scalar_rep(group)
    return ProductRep.of(factors)


def dual(rep: Rep) -> Rep:
    if isinstance(rep, Dual):
        return rep.inner
    if isinstance(rep, ProductRep) and not rep.factors:
        return rep
    return Dual(rep)


def hom_rep(input: Rep, output: Rep) -> Rep:
    """Linear maps ``input -> output``: ``output ⊗ input*``.

    Coordinates are row-major ``(out, in)``, so a vector of this rep reshapes
    to a ``(dim(output), dim(input))`` matrix ``W`` with ``ρ(g)·vec(W) =
    vec(ρ_out(g) W ρ_in(g)⁻¹)``.
    """
    if input.group != output.group:
        raise GroupMismatchError("hom between reps of different groups")
    return ProductRep([output, dual(input)])


# ---------------------------------------------------------------------------
# ρ and dρ
# ---------------------------------------------------------------------------


def rho(rep: Rep, g) -> LinearOperator:
    """Group action of ``g`` on ``rep``.

    ``g`` is a :class:`GroupElement` or an integer ``k`` selecting the
    discrete generator ``h_k`` (0-based), which keeps permutation structure.
    """
    group = rep.group
    if isinstance(g, GroupElement):
        if g.group != group:
            raise GroupMismatchError(f"element of {g.group.name} applied to a rep of {group.name}")
        fwd, inv = Dense(g.matrix), Dense(g.inverse_matrix())
    else:
        k = int(g)
        if not 0 <= k < group.M:
            raise IndexError(f"{group.name} has {group.M} discrete generators, asked for {k}")
        fwd, inv = group.discrete_generators[k], group.generator_inverse(k)
    return rep._rho(fwd, inv)


def drho(rep: Rep, i) -> LinearOperator:
    """Lie algebra action of generator ``A_i`` (or of an explicit base-space
    algebra element given as a matrix/operator)."""
    group = rep.group
    if isinstance(i, LinearOperator):
        A = i
    elif isinstance(i, np.ndarray):
        A = Dense(i)
    else:
        i = int(i)
        if not 0 <= i < group.D:
            raise IndexError(f"{group.name} has {group.D} Lie generators, asked for {i}")
        A = group.lie_generators[i]
    return rep._drho(A)


# ---------------------------------------------------------------------------
# canonical form
# ---------------------------------------------------------------------------


def _atom_order(name):
    if name == "V":
        return (0, name)
    if name == "V*":
        return (1, name)
    return (2, name)


def _term_order(atoms):
    return (len(atoms), [_atom_order(a) for a in atoms])


@dataclass(frozen=True)
class Canonical:
    """Normal form of a rep.

    ``terms`` lists ``(atoms, copies)`` in canonical order, where ``atoms`` is
    the sorted tuple of atom names of one tensor-product term and ``copies``
    holds, for every copy of that term, the user coordinates in canonical
    (row-major over sorted axes) order.  ``perm`` is their concatenation: a
    canonical vector is ``v_user[perm]``.
    """

    group: Group
    terms: tuple
    dims: dict

    @classmethod
    def build(cls, rep: Rep) -> Canonical:
        dims = {}
        blocks = _normalize(rep, dims)
        order = sorted(range(len(blocks)), key=lambda i: _term_order(blocks[i][0]))
        terms = []
        for i in order:
            atoms, idx = blocks[i]
            if terms and terms[-1][0] == atoms:
                terms[-1][1].append(idx)
            else:
                terms.append((atoms, [idx]))
        frozen = tuple((a, tuple(c)) for a, c in terms)
        return cls(rep.group, frozen, dims)

    @property
    def perm(self) -> np.ndarray:
        return np.concatenate([idx for _, copies in self.terms for idx in copies])

    @property
    def key(self) -> str:
        return f"{self.group.key}|{self.expr()}"

    def term_dim(self, atoms) -> int:
        return prod(self.dims[a] for a in atoms)

    def expr(self) -> str:
        parts = []
        for atoms, copies in self.terms:
            s = term_expr(atoms)
            parts.append(s if len(copies) == 1 else f"{len(copies)}*{s}")
        return "+".join(parts)

    def term_rep(self, atoms) -> Rep:
        """A :class:`ProductRep` acting on one canonical term."""
        return _atoms_rep(self.group, atoms, self._leaves)

    @property
    def _leaves(self):
        return self.dims.get("__leaves__", {})


def term_expr(atoms) -> str:
    names = list(atoms)
    if all(n in ("V", "V*") for n in names):
        return f"T({names.count('V')},{names.count('V*')})"
    return "*".join(names)


def _atoms_rep(group, atoms, leaves) -> Rep:
    V = Base(group)
    factors = []
    for name in atoms:
        if name == "V":
            factors.append(V)
        elif name == "V*":
            factors.append(Dual(V))
        elif name.endswith("*") and name[:-1] in leaves:
            factors.append(Dual(leaves[name[:-1]]))
        else:
            factors.append(leaves[name])
    if not factors:
        return scalar_rep(group)
    return ProductRep(factors) if len(factors) > 1 else factors[0]


def _normalize(rep: Rep, dims) -> list:
    """List of ``(atoms, idx)`` blocks covering the user coordinates of ``rep``."""
    atom = rep._atom()
    if atom is not None:
        dims[atom[0]] = rep.dim
        if isinstance(rep, CustomRep):
            dims.setdefault("__leaves__", {})[atom[0]] = rep
        elif isinstance(rep, Dual) and isinstance(rep.inner, CustomRep):
            dims.setdefault("__leaves__", {})[rep.inner._atom()[0]] = rep.inner
        return [(atom, np.arange(rep.dim))]
    if isinstance(rep, SumRep):
        out = []
        offset = 0
        for r, m in rep.terms:
            sub = _normalize(r, dims)
            d = r.dim
            for _ in range(m):
                out.extend((a, idx + offset) for a, idx in sub)
                offset += d
        return out
    if isinstance(rep, ProductRep):
        blocks = [((), np.zeros(1, dtype=np.int64))]
        total = 1
        for f in rep.factors:
            sub = _normalize(f, dims)
            d = f.dim
            blocks = [
                (a + b, (ia[:, None] * d + ib[None, :]).ravel()) for a, ia in blocks for b, ib in sub
            ]
            total *= d
        return [_sort_axes(a, idx, dims) for a, idx in blocks]
    if isinstance(rep, Dual):
        sub = _normalize(rep.inner, dims)
        out = []
        for atoms, idx in sub:
            flipped = tuple(Dual._flip(rep.group, a) for a in atoms)
            for a, a0 in zip(flipped, atoms):
                dims[a] = dims[a0]
            out.append(_sort_axes(flipped, idx, dims))
        return out
    raise TypeError(f"cannot normalize {type(rep).__name__}")


def _flip(group, name):
    if group.is_orthogonal:
        return name
    return name[:-1] if name.endswith("*") else name + "*"


Dual._flip = staticmethod(_flip)


def _sort_axes(atoms, idx, dims):
    if len(atoms) < 2:
        return atoms, idx
    order = sorted(range(len(atoms)), key=lambda i: _atom_order(atoms[i]))
    if order == list(range(len(atoms))):
        return atoms, idx
    shape = [dims[a] for a in atoms]
    idx = idx.reshape(shape).transpose(order).ravel()
    return tuple(atoms[i] for i in order), idx


def canonical_key(rep: Rep) -> str:
    """Stable string key; equal for reps with the same normal form."""
    return rep.key


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\d+)|(\*\*)|([A-Za-z_]+)|(\S))")


def _tokenize(text):
    pos = 0
    out = []
    text = text.replace("⊗", "@").replace("⊕", "+")
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            break
        pos = m.end()
        num, pow_, name, sym = m.groups()
        if num is not None:
            out.append(("int", int(num)))
        elif pow_:
            out.append(("sym", "**"))
        elif name:
            out.append(("name", name))
        elif sym:
            out.append(("sym", sym))
    out.append(("end", None))
    return out


class _Parser:
    def __init__(self, text, group):
        self.toks = _tokenize(text)
        self.i = 0
        self.group = group
        self.text = text

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, value=None):
        tok = self.toks[self.i]
        if (kind and tok[0] != kind) or (value is not None and tok[1] != value):
            raise RepParseError(f"unexpected token {tok[1]!r} in {self.text!r}")
        self.i += 1
        return tok

    def parse(self):
        v = self.expr()
        self.take("end")
        return self.as_rep(v)

    def as_rep(self, v):
        if isinstance(v, Rep):
            return v
        raise RepParseError(f"{self.text!r} is a number, not a representation")

    def expr(self):
        v = self.as_rep(self.term())
        while self.peek() == ("sym", "+"):
            self.take()
            v = v + self.as_rep(self.term())
        return v

    def term(self):
        v = self.power()
        while self.peek() in (("sym", "*"), ("sym", "@")):
            op = self.take()[1]
            w = self.power()
            if op == "@":
                v = self.as_rep(v) * self.as_rep(w)
            elif isinstance(v, int) and isinstance(w, int):
                v = v * w
            elif isinstance(v, int) or isinstance(w, int):
                n, r = (v, w) if isinstance(v, int) else (w, v)
                v = SumRep.of([(r, n)]) if n else None
                if v is None:
                    raise RepParseError("zero multiplicity")
            else:
                v = v * w
        return v

    def power(self):
        v = self.primary()
        if self.peek() == ("sym", "**"):
            self.take()
            k = self.take("int")[1]
            v = self.as_rep(v) ** k
        return v

    def primary(self):
        kind, val = self.peek()
        if kind == "int":
            self.take()
            return val
        if kind == "sym" and val == "(":
            self.take()
            v = self.expr()
            self.take("sym", ")")
            return v
        if kind != "name":
            raise RepParseError(f"unexpected token {val!r} in {self.text!r}")
        self.take()
        if val == "V":
            if self.peek() == ("sym", "*") and self.toks[self.i + 1][0] in ("end", "sym") and \
                    self.toks[self.i + 1] not in (("sym", "("),):
                # trailing ``V*`` denotes the dual space
                self.take()
                return Dual(Base(self.group))
            return Base(self.group)
        if val == "T":
            if self.peek()[0] == "int":
                return tensor_rep(self.group, self.take()[1], 0)
            self.take("sym", "(")
            p = self.take("int")[1]
            q = 0
            if self.peek() == ("sym", ","):
                self.take()
                q = self.take("int")[1]
            self.take("sym", ")")
            return tensor_rep(self.group, p, q)
        if val == "hom":
            self.take("sym", "(")
            a = self.expr()
            self.take("sym", ",")
            b = self.expr()
            self.take("sym", ")")
            return hom_rep(a, b)
        if val == "dual":
            self.take("sym", "(")
            a = self.expr()
            self.take("sym", ")")
            return dual(a)
        raise RepParseError(f"unknown name {val!r} in {self.text!r}")


def parse_rep(text: str, group: Group) -> Rep:
    """Parse a rep string such as ``"5*T(0)+5*T(1)"`` or ``"hom(2*T1,T0)"``.

    See ``docs/rep_grammar.md`` for the grammar.
    """
    return _Parser(text, group).parse()
