"""Forward-only equivariant MLP built from solved bases.

Each block is ``linear -> (+ bilinear) -> gated nonlinearity``; a final
equivariant linear layer maps to the output rep.  All weights are
coefficients in equivariant bases, so every realized map is equivariant by
construction.  Features are stored in the last axis, so ``x`` may be a single
vector or a batch of row vectors.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import DimensionError
from .groups import Group, parse_group
from .reps import Rep, SumRep, parse_rep, scalar_rep, tensor_rep
from .solver import EquivariantBasis, Solver, solve_basis, solve_hom_basis

__all__ = [
    "uniform_allocation",
    "LayerSpec",
    "Copy",
    "equivariant_linear",
    "gated_nonlinearity",
    "bilinear_layer",
    "bilinear_triples",
    "swish",
    "EmlpLayer",
    "EmlpNetwork",
    "emlp_forward",
    "load_network",
]


def _sigmoid(x):
    # complex features (unitary groups) are gated by their real part
    return expit(np.real(x))


def swish(x):
    return x * _sigmoid(x)


def _signatures(group: Group, k: int) -> list[tuple[int, int]]:
    if group.is_orthogonal or k == 0:
        return [(k, 0)]
    return [(p, k - p) for p in range(k, -1, -1)]


def uniform_allocation(group: Group, channels: int, max_rank: int) -> Rep:
    """Split ``channels`` dimensions evenly across tensor ranks ``0..max_rank``.

    Ranks are filled from the top: rank ``k`` takes as many whole copies as
    fit in a ``1/(k+1)`` share of what is left, and scalars absorb the rest,
    so the total is exact.  For groups with ``V ≠ V*`` the rank-``k`` copies
    are dealt round-robin over the signatures ``(p, q)`` with ``p + q = k``.
    """
    if max_rank < 0:
        raise ValueError("max_rank must be non-negative")
    if channels < max_rank + 1:
        raise ValueError(f"need at least {max_rank + 1} channels for ranks 0..{max_rank}")
    d = group.base_dim
    counts: dict[tuple[int, int], int] = {}
    remaining = channels
    for k in range(max_rank, 0, -1):
        n_k = (remaining // (k + 1)) // d**k
        remaining -= n_k * d**k
        sigs = _signatures(group, k)
        for i in range(n_k):
            pq = sigs[i % len(sigs)]
            counts[pq] = counts.get(pq, 0) + 1
    counts[(0, 0)] = remaining
    terms = [
        (tensor_rep(group, p, q), m)
        for (p, q), m in sorted(counts.items(), key=lambda kv: (sum(kv[0]), -kv[0][0]))
        if m
    ]
    return SumRep.of(terms)


# ---------------------------------------------------------------------------
# canonical copies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Copy:
    """One tensor-product term of a rep, located at user coordinates ``idx``."""

    atoms: tuple
    idx: np.ndarray

    @property
    def is_scalar(self) -> bool:
        return not self.atoms

    @property
    def signature(self):
        """``(p, q)`` for pure tensor terms, ``None`` when custom atoms are involved."""
        if any(a not in ("V", "V*") for a in self.atoms):
            return None
        return (self.atoms.count("V"), self.atoms.count("V*"))


def _copies(rep: Rep) -> list[Copy]:
    return [Copy(atoms, idx) for atoms, copies in rep.canonical().terms for idx in copies]


def _gated(rep: Rep) -> list[Copy]:
    if rep.group.is_permutation:
        return []
    return [c for c in _copies(rep) if not c.is_scalar]


@dataclass(frozen=True)
class LayerSpec:
    """Rep bookkeeping for one linear layer.

    With ``gated=True`` the linear map targets ``output_rep ⊕ gate_count·T0``,
    one extra invariant scalar per non-scalar term of ``output_rep``.
    """

    input_rep: Rep
    output_rep: Rep
    gated: bool = True

    def __post_init__(self):
        if self.input_rep.group != self.output_rep.group:
            raise ValueError("input and output reps belong to different groups")

    @property
    def group(self) -> Group:
        return self.output_rep.group

    @property
    def gate_count(self) -> int:
        return len(_gated(self.output_rep)) if self.gated else 0

    @cached_property
    def linear_output(self) -> Rep:
        g = self.gate_count
        if not g:
            return self.output_rep
        return self.output_rep + g * scalar_rep(self.group)


# ---------------------------------------------------------------------------
# layers as functions
# ---------------------------------------------------------------------------


def _weight_matrix(hom: EquivariantBasis, beta, dout: int, din: int) -> np.ndarray:
    return hom.expand(np.asarray(beta)).reshape(dout, din)


def equivariant_linear(spec: LayerSpec, beta, bias_beta, x, solver: Solver | None = None):
    """``unvec(Q_hom β) x + Q_bias b`` from ``spec.input_rep`` to ``spec.linear_output``."""
    out = spec.linear_output
    hom = solve_hom_basis(spec.input_rep, out, solver)
    bias = solve_basis(out, solver)
    beta = np.asarray(beta)
    bias_beta = np.asarray(bias_beta)
    if beta.shape != (hom.rank,):
        raise DimensionError(f"expected {hom.rank} linear coefficients, got shape {beta.shape}")
    if bias_beta.shape != (bias.rank,):
        raise DimensionError(f"expected {bias.rank} bias coefficients, got shape {bias_beta.shape}")
    x = np.asarray(x)
    if x.shape[-1] != spec.input_rep.dim:
        raise DimensionError(f"input has {x.shape[-1]} features, rep has dim {spec.input_rep.dim}")
    W = _weight_matrix(hom, beta, out.dim, spec.input_rep.dim)
    b = bias.expand(bias_beta)
    return x @ W.T + b


def gated_nonlinearity(rep: Rep, z):
    """Swish on scalars (and on everything for permutation groups); other
    terms are scaled by ``σ`` of their gate, read from the trailing entries."""
    z = np.asarray(z)
    gated = _gated(rep)
    n = rep.dim
    if z.shape[-1] != n + len(gated):
        raise DimensionError(
            f"expected {n} features plus {len(gated)} gates, got {z.shape[-1]} values"
        )
    values, gates = z[..., :n], z[..., n:]
    if rep.group.is_permutation:
        return swish(values)
    out = np.empty_like(values)
    j = 0
    # gates follow the canonical order of the non-scalar copies
    for c in _copies(rep):
        if c.is_scalar:
            out[..., c.idx] = swish(values[..., c.idx])
        else:
            out[..., c.idx] = values[..., c.idx] * _sigmoid(gates[..., j : j + 1])
            j += 1
    return out


def _contraction_target(group: Group, a, b):
    """Signature ``c`` such that an ``a`` tensor maps ``b`` tensors to ``c``."""
    if group.is_orthogonal:
        k = a[0] - b[0]
        return (k, 0) if k >= 0 else None
    c = (a[0] - b[1], a[1] - b[0])
    return c if min(c) >= 0 else None


def bilinear_triples(rep: Rep):
    """Admissible contractions of ``rep``.

    Returns ``(copies, pairs)`` where ``pairs`` maps each output signature
    ``c`` to the ordered ``(a, b)`` copy-index pairs whose contraction lands
    in ``c``, restricted to signatures that have a copy in ``rep``.  Pairs
    involving a scalar term are left out.
    """
    copies = _copies(rep)
    present = {c.signature for c in copies}
    pairs: dict[tuple, list] = {}
    for i, ca in enumerate(copies):
        if ca.is_scalar or ca.signature is None:
            continue
        for j, cb in enumerate(copies):
            if cb.is_scalar or cb.signature is None:
                continue
            c = _contraction_target(rep.group, ca.signature, cb.signature)
            if c is not None and c in present:
                pairs.setdefault(c, []).append((i, j))
    return copies, pairs


def _contract(group: Group, va, a, vb, b):
    """``y_c = Reshape(v_a) v_b`` on a leading batch axis."""
    d = group.base_dim
    N = va.shape[0]
    if group.is_orthogonal:
        dc = d ** (a[0] - b[0])
        return np.einsum("ncb,nb->nc", va.reshape(N, dc, d ** b[0]), vb)
    c1, c2 = a[0] - b[1], a[1] - b[0]
    # a's axes: [c1 V | b2 V | c2 V* | b1 V*] -> [c1 V | c2 V* | b2 V | b1 V*]
    A = va.reshape((N,) + (d,) * (a[0] + a[1]))
    ax = list(range(1, 1 + a[0] + a[1]))
    V, Vs = ax[: a[0]], ax[a[0] :]
    order = [0] + V[:c1] + Vs[:c2] + V[c1:] + Vs[c2:]
    A = A.transpose(order).reshape(N, d ** (c1 + c2), -1)
    # b's axes: [b1 V | b2 V*] -> [b2 V* | b1 V] to pair with A's inputs
    B = vb.reshape((N,) + (d,) * (b[0] + b[1]))
    bx = list(range(1, 1 + b[0] + b[1]))
    B = B.transpose([0] + bx[b[0] :] + bx[: b[0]]).reshape(N, -1)
    return np.einsum("ncb,nb->nc", A, B)


def bilinear_layer(rep_in: Rep, weights, x):
    """Weighted sum of admissible tensor contractions of ``x`` with itself.

    ``weights`` maps each output signature ``c`` to a matrix of shape
    ``(copies of c, admissible pairs for c)``: one scalar per (a, b, c)
    triple.  Returns only the bilinear term; the caller adds the shortcut.
    """
    x = np.asarray(x)
    single = x.ndim == 1
    X = x[None] if single else x.reshape(-1, x.shape[-1])
    if X.shape[-1] != rep_in.dim:
        raise DimensionError(f"input has {X.shape[-1]} features, rep has dim {rep_in.dim}")
    copies, pairs = bilinear_triples(rep_in)
    out = np.zeros_like(X, dtype=np.result_type(X.dtype, float))
    group = rep_in.group
    for c, plist in pairs.items():
        targets = [k for k, cp in enumerate(copies) if cp.signature == c]
        Wc = np.asarray(weights[c])
        if Wc.shape != (len(targets), len(plist)):
            raise DimensionError(
                f"bilinear weights for {c} need shape {(len(targets), len(plist))}, got {Wc.shape}"
            )
        Y = np.stack(
            [
                _contract(group, X[:, copies[i].idx], copies[i].signature, X[:, copies[j].idx], copies[j].signature)
                for i, j in plist
            ],
            axis=1,
        )  # (N, pairs, dim c)
        contrib = np.einsum("tp,npc->ntc", Wc, Y)
        for t, k in enumerate(targets):
            out[:, copies[k].idx] += contrib[:, t]
    out = out.reshape(x.shape[:-1] + (rep_in.dim,)) if not single else out[0]
    return out


def bilinear_weight_shapes(rep: Rep) -> dict:
    copies, pairs = bilinear_triples(rep)
    return {c: (sum(cp.signature == c for cp in copies), len(p)) for c, p in pairs.items()}


# ---------------------------------------------------------------------------
# network
# ---------------------------------------------------------------------------


@dataclass
class EmlpLayer:
    """One block, or the final linear map when ``spec.gated`` is false."""

    spec: LayerSpec
    beta: np.ndarray
    bias_beta: np.ndarray
    bilinear: dict | None
    W: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)

    @classmethod
    def random(cls, spec: LayerSpec, rng: np.random.Generator, solver=None, bilinear=True):
        out = spec.linear_output
        hom = solve_hom_basis(spec.input_rep, out, solver)
        bias = solve_basis(out, solver)
        beta = rng.standard_normal(hom.rank) / np.sqrt(max(spec.input_rep.dim, 1))
        bias_beta = 0.1 * rng.standard_normal(bias.rank)
        W = _weight_matrix(hom, beta, out.dim, spec.input_rep.dim) if hom.rank else np.zeros(
            (out.dim, spec.input_rep.dim)
        )
        b = bias.expand(bias_beta) if bias.rank else np.zeros(out.dim)
        bil = None
        if bilinear:
            bil = {}
            for c, shape in bilinear_weight_shapes(out).items():
                bil[c] = 0.1 * rng.standard_normal(shape) / np.sqrt(max(shape[1], 1))
        return cls(spec, beta, bias_beta, bil, W, b)

    def __call__(self, x):
        z = x @ self.W.T + self.b
        if self.bilinear is not None:
            z = z + bilinear_layer(self.spec.linear_output, self.bilinear, z)
        if not self.spec.gated:
            return z
        return gated_nonlinearity(self.spec.output_rep, z)


class EmlpNetwork:
    """Stack of gated blocks followed by a plain equivariant linear layer.

    Immutable once built; :meth:`__call__` is reentrant.
    """

    def __init__(self, layers: list[EmlpLayer]):
        if not layers:
            raise ValueError("a network needs at least one layer")
        self.layers = tuple(layers)

    @property
    def reps(self) -> list[Rep]:
        return [self.layers[0].spec.input_rep] + [l.spec.output_rep for l in self.layers]

    @property
    def input_rep(self) -> Rep:
        return self.layers[0].spec.input_rep

    @property
    def output_rep(self) -> Rep:
        return self.layers[-1].spec.output_rep

    @property
    def group(self) -> Group:
        return self.input_rep.group

    @classmethod
    def build(
        cls,
        input_rep: Rep,
        output_rep: Rep,
        hidden=128,
        num_layers: int = 3,
        max_rank: int = 2,
        seed: int = 0,
        solver: Solver | None = None,
        bilinear: bool = True,
    ) -> EmlpNetwork:
        """Random network; ``hidden`` is a channel count, a rep, or a list of either."""
        group = input_rep.group
        if isinstance(hidden, (list, tuple)):
            widths = list(hidden)
        else:
            widths = [hidden] * num_layers
        hidden_reps = [
            h if isinstance(h, Rep) else uniform_allocation(group, int(h), max_rank) for h in widths
        ]
        rng = np.random.default_rng(seed)
        layers = []
        prev = input_rep
        for h in hidden_reps:
            layers.append(EmlpLayer.random(LayerSpec(prev, h), rng, solver, bilinear))
            prev = h
        layers.append(EmlpLayer.random(LayerSpec(prev, output_rep, gated=False), rng, solver, False))
        return cls(layers)

    def __call__(self, x):
        x = np.asarray(x, dtype=np.result_type(np.asarray(x).dtype, float))
        if x.shape[-1] != self.input_rep.dim:
            raise DimensionError(f"input has {x.shape[-1]} features, network expects {self.input_rep.dim}")
        for layer in self.layers:
            x = layer(x)
        return x


def emlp_forward(net: EmlpNetwork, x):
    return net(x)


def load_network(source, solver: Solver | None = None) -> EmlpNetwork:
    """Build a network from a JSON spec (path, JSON text or dict).

    Keys: ``group`` (e.g. ``"O(5)"``), ``input`` and ``output`` rep strings,
    ``hidden`` (channel count, rep string, or a list of either per layer),
    optional ``layers``, ``max_rank``, ``seed`` and ``bilinear``.
    """
    if isinstance(source, dict):
        cfg = source
    else:
        text = str(source)
        if not text.lstrip().startswith("{"):
            text = Path(source).read_text()
        cfg = json.loads(text)
    group = parse_group(cfg["group"])
    hidden = cfg.get("hidden", 128)
    if isinstance(hidden, list):
        hidden = [parse_rep(h, group) if isinstance(h, str) else int(h) for h in hidden]
    elif isinstance(hidden, str):
        hidden = [parse_rep(hidden, group)] * int(cfg.get("layers", 3))
    return EmlpNetwork.build(
        parse_rep(cfg["input"], group),
        parse_rep(cfg["output"], group),
        hidden=hidden,
        num_layers=int(cfg.get("layers", 3)),
        max_rank=int(cfg.get("max_rank", 2)),
        seed=int(cfg.get("seed", 0)),
        solver=solver,
        bilinear=bool(cfg.get("bilinear", True)),
    )
