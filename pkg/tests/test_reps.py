import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import dense_tensor_drho, dense_tensor_rho, expm_taylor

from equibasis.errors import GroupMismatchError, RepParseError
from equibasis.groups import catalog, matrix_exponential, parse_group, sample_element
from equibasis.linop import DirectSum, Permutation, ScaledIdentity
from equibasis.reps import (
    Base,
    CustomRep,
    Dual,
    ExternalProduct,
    canonical_key,
    drho,
    dual,
    hom_rep,
    parse_rep,
    rho,
    scalar_rep,
    tensor_rep,
)

GROUPS = ["Z(4)", "S(4)", "D(5)", "SO(3)", "O(3)", "SO+(1,3)", "O(1,3)", "Sp(1)", "SU(2)", "SU(3)"]
REPS = ["T(2,0)", "T(1,1)", "T(0,2)", "V+T(1,1)", "2*V*V+V*", "T(3,0)+T0"]


def _dense(op):
    return op.to_dense()


# -- dimensions and basic construction -----------------------------------------


def test_scalar_rep():
    G = parse_group("SO(3)")
    T0 = tensor_rep(G, 0, 0)
    assert T0.dim == 1
    op = rho(T0, sample_element(G, np.random.default_rng(0)))
    assert isinstance(op, ScaledIdentity) and op.to_dense() == [[1.0]]
    assert np.array_equal(drho(T0, 0).to_dense(), [[0.0]])


def test_circulant_rep_dim():
    assert tensor_rep(parse_group("Z(5)"), 1, 1).dim == 25


def test_t2_so3_dim():
    assert tensor_rep(parse_group("SO(3)"), 2, 0).dim == 9


def test_hom_dim():
    G = parse_group("SO(3)")
    r = hom_rep(parse_rep("5*T0+5*T1", G), tensor_rep(G, 2))
    assert r.dim == 180


@pytest.mark.parametrize("spec", GROUPS)
def test_dimension_rules(spec):
    G = parse_group(spec)
    V = Base(G)
    n = G.base_dim
    assert Dual(V).dim == n
    assert (3 * V + V * V).dim == 3 * n + n * n
    assert (V * V * Dual(V)).dim == n**3


# -- ρ against dense oracles ---------------------------------------------------


@pytest.mark.parametrize("spec", GROUPS)
@pytest.mark.parametrize("p,q", [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (2, 1), (1, 2)])
def test_tensor_rho_matches_kron(spec, p, q, rng):
    G = parse_group(spec)
    g = sample_element(G, rng)
    got = _dense(rho(tensor_rep(G, p, q), g))
    assert np.allclose(got, dense_tensor_rho(g.matrix, p, q), atol=1e-10)


@pytest.mark.parametrize("spec", GROUPS)
@pytest.mark.parametrize("p,q", [(1, 0), (0, 1), (2, 0), (1, 1), (2, 1)])
def test_tensor_drho_matches_kron_sum(spec, p, q):
    G = parse_group(spec)
    for i, A in enumerate(G.dense_lie()):
        got = _dense(drho(tensor_rep(G, p, q), i))
        assert np.allclose(got, dense_tensor_drho(A, p, q), atol=1e-12)


def test_conjugation_oracle_so3(rng):
    G = parse_group("SO(3)")
    g = sample_element(G, rng)
    W = rng.standard_normal((3, 3))
    got = rho(tensor_rep(G, 1, 1), g).matvec(W.ravel())
    assert np.allclose(got, (g.matrix @ W @ np.linalg.inv(g.matrix)).ravel(), atol=1e-12)


@pytest.mark.parametrize("spec", ["O(1,3)", "Sp(2)", "SU(3)", "S(4)"])
def test_hom_conjugation_oracle(spec, rng):
    G = parse_group(spec)
    rin, rout = parse_rep("V+T(1,1)", G), parse_rep("V*+T0", G)
    g = sample_element(G, rng)
    W = rng.standard_normal((rout.dim, rin.dim))
    got = rho(hom_rep(rin, rout), g).matvec(W.ravel())
    gi = np.linalg.inv(rho(rin, g).to_dense())
    assert np.allclose(got, (rho(rout, g).to_dense() @ W @ gi).ravel(), atol=1e-10)


def test_direct_sum_structure(rng):
    G = parse_group("SO(3)")
    g = sample_element(G, rng)
    op = rho(2 * Base(G), g)
    assert isinstance(op, DirectSum)
    z = np.zeros((3, 3))
    assert np.allclose(op.to_dense(), np.block([[g.matrix, z], [z, g.matrix]]))


def test_dual_of_permutation_equals_itself():
    G = parse_group("S(5)")
    for k in range(G.M):
        assert np.array_equal(_dense(rho(Dual(Base(G)), k)), _dense(rho(Base(G), k)))


def test_generator_rho_keeps_permutations():
    G = parse_group("S(4)")
    op = rho(tensor_rep(G, 3), 0)
    from equibasis.linop import fuse_permutations

    assert isinstance(fuse_permutations(op), Permutation)


def test_exp_drho_matches_rho_of_exp():
    for spec in ("SO(3)", "O(1,3)", "Sp(1)", "SU(2)"):
        G = parse_group(spec)
        r = parse_rep("V+T(1,1)", G)
        for i, A in enumerate(G.dense_lie()):
            t = 0.1
            g = sample_element(G, np.random.default_rng(0), alpha=t * np.eye(G.D)[i], word=())
            lhs = expm_taylor(t * _dense(drho(r, i)))
            assert np.allclose(lhs, _dense(rho(r, g)), atol=1e-8)
            assert np.allclose(matrix_exponential(t * _dense(drho(Base(G), i))), g.matrix, atol=1e-9)


@pytest.mark.parametrize("spec", GROUPS + ["Rubiks", "GCNN(2)"])
def test_homomorphism_property(spec, rng):
    G = parse_group(spec)
    for text in ("T(2,0)", "V+T(1,1)"):
        r = parse_rep(text, G)
        if r.dim > 512:
            r = parse_rep("V+V*", G)
        g1, g2 = sample_element(G, rng), sample_element(G, rng)
        g12 = sample_element(G, rng, alpha=np.zeros(G.D), word=())
        g12 = type(g12)(G, g1.matrix @ g2.matrix)
        v = rng.standard_normal(r.dim)
        lhs = rho(r, g1).matvec(rho(r, g2).matvec(v))
        rhs = rho(r, g12).matvec(v)
        assert np.linalg.norm(lhs - rhs) <= 1e-9 * max(1, np.linalg.norm(rhs))


def test_drho_is_linear(rng):
    G = parse_group("SO(4)")
    r = parse_rep("T(2,0)+V", G)
    A, B = G.dense_lie()[0], G.dense_lie()[3]
    a, b = 0.7, -1.3
    v = rng.standard_normal(r.dim)
    lhs = drho(r, a * A + b * B).matvec(v)
    rhs = a * drho(r, 0).matvec(v) + b * drho(r, 3).matvec(v)
    assert np.allclose(lhs, rhs, atol=1e-13)


def test_drho_matches_finite_difference(rng):
    G = parse_group("O(1,3)")
    r = parse_rep("T(1,1)+V*", G)
    for i in range(G.D):
        h = 1e-6
        gp = sample_element(G, rng, alpha=h * np.eye(G.D)[i], word=())
        gm = sample_element(G, rng, alpha=-h * np.eye(G.D)[i], word=())
        fd = (_dense(rho(r, gp)) - _dense(rho(r, gm))) / (2 * h)
        assert np.allclose(fd, _dense(drho(r, i)), atol=1e-6)


def test_index_errors():
    G = parse_group("SO(3)")
    with pytest.raises(IndexError):
        drho(Base(G), 3)
    with pytest.raises(IndexError):
        rho(Base(G), 0)


def test_group_mismatch(rng):
    a, b = parse_group("SO(3)"), parse_group("O(3)")
    with pytest.raises(GroupMismatchError):
        Base(a) + Base(b)
    with pytest.raises(GroupMismatchError):
        hom_rep(Base(a), Base(b))
    with pytest.raises(GroupMismatchError):
        rho(Base(a), sample_element(b, rng))


# -- canonical keys ------------------------------------------------------------


def test_multiplicity_normalization():
    G = parse_group("SO(3)")
    V = Base(G)
    assert canonical_key(V + V) == canonical_key(2 * V)


def test_orthogonal_dual_collapse():
    assert canonical_key(Dual(Base(parse_group("O(3)")))) == canonical_key(Base(parse_group("O(3)")))
    L = parse_group("SO(1,3)")
    assert canonical_key(Dual(Base(L))) != canonical_key(Base(L))


def test_sum_order_irrelevant():
    G = parse_group("SO(3)")
    T1, T2 = tensor_rep(G, 1), tensor_rep(G, 2)
    assert canonical_key(T1 + T2) == canonical_key(T2 + T1)


@pytest.mark.parametrize("p,q,r,s", [(1, 0, 1, 0), (2, 1, 0, 1), (0, 2, 3, 0), (1, 1, 1, 1)])
def test_hom_tensor_rule(p, q, r, s):
    G = parse_group("Sp(2)")
    h = hom_rep(tensor_rep(G, p, q), tensor_rep(G, r, s))
    assert canonical_key(h) == canonical_key(tensor_rep(G, r + q, s + p))


def test_hom_base_base_orthogonal():
    G = parse_group("O(3)")
    assert canonical_key(hom_rep(Base(G), Base(G))) == canonical_key(tensor_rep(G, 2))


def test_key_is_stable_string():
    G = parse_group("SO(1,3)")
    k = canonical_key(parse_rep("V*@V+2*T0", G))
    assert k == "SO(1,3)|2*T(0,0)+T(1,1)"


def test_nested_flattening():
    G = parse_group("SO(3)")
    V = Base(G)
    assert canonical_key((V + (V + V)) * V) == canonical_key(3 * (V * V))
    assert canonical_key(V * (V * V)) == canonical_key(tensor_rep(G, 3))


@pytest.mark.parametrize("spec", ["SO(1,3)", "S(3)", "SU(2)"])
@pytest.mark.parametrize("text", REPS + ["V*@V+V", "hom(V+T0,V*)", "dual(V+T(1,1))"])
def test_canonical_permutation_intertwines(spec, text, rng):
    """ρ_user(g)[perm][:, perm] equals the direct sum of canonical term reps."""
    G = parse_group(spec)
    r = parse_rep(text, G)
    c = r.canonical()
    perm = c.perm
    assert sorted(perm.tolist()) == list(range(r.dim))
    g = sample_element(G, rng)
    user = _dense(rho(r, g))[np.ix_(perm, perm)]
    blocks = [_dense(rho(c.term_rep(a), g)) for a, copies in c.terms for _ in copies]
    from scipy.linalg import block_diag

    assert np.allclose(user, block_diag(*blocks), atol=1e-10)
    if G.D:
        user_d = _dense(drho(r, 0))[np.ix_(perm, perm)]
        blocks_d = [_dense(drho(c.term_rep(a), 0)) for a, copies in c.terms for _ in copies]
        assert np.allclose(user_d, block_diag(*blocks_d), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 1), st.integers(1, 2)), min_size=1, max_size=4))
def test_shuffled_sums_share_key(terms):
    G = parse_group("SO(1,3)")
    reps = [m * tensor_rep(G, p, q) for p, q, m in terms]
    fwd = reps[0]
    for x in reps[1:]:
        fwd = fwd + x
    back = reps[-1]
    for x in reversed(reps[:-1]):
        back = back + x
    assert canonical_key(fwd) == canonical_key(back)
    assert fwd.dim == back.dim == sum(m * 4 ** (p + q) for p, q, m in terms)


# -- parser --------------------------------------------------------------------


@pytest.mark.parametrize(
    "text,expected",
    [
        ("T(4,0)", "T(4,0)"),
        ("T3", "T(3,0)"),
        ("T(0)", "T(0,0)"),
        ("5*T(0)+5*T(1)", "5*T(0,0)+5*T(1,0)"),
        ("hom(2*T(1),T(0))", "2*T(0,1)"),
        ("V*", "T(0,1)"),
        ("V**2", "T(2,0)"),
        ("V@V*", "T(1,1)"),
        ("V*V", "T(2,0)"),
        ("(V+V*)*2", "T(1,0)+T(0,1)+T(1,0)+T(0,1)"),
        ("dual(T(2,1))", "T(1,2)"),
        ("V ⊗ V ⊕ V", "T(1,0)+T(2,0)"),
    ],
)
def test_parse_examples(text, expected):
    G = parse_group("SO(1,3)")
    got = parse_rep(text, G)
    want = parse_rep(expected, G)
    assert canonical_key(got) == canonical_key(want)


@pytest.mark.parametrize("bad", ["", "T(", "foo", "3", "T(1,)", "V+", "0*V", "hom(V)", "T(1))"])
def test_parse_errors(bad):
    with pytest.raises(RepParseError):
        parse_rep(bad, parse_group("SO(3)"))


def test_parse_str_round_trip():
    G = parse_group("SO(1,3)")
    for text in REPS + ["hom(V+T0,V*)"]:
        r = parse_rep(text, G)
        assert canonical_key(parse_rep(str(r), G)) == canonical_key(r)


def test_dual_helpers():
    G = parse_group("Sp(1)")
    V = Base(G)
    assert dual(dual(V)) is V
    assert dual(scalar_rep(G)).dim == 1
    assert canonical_key(V.star) == canonical_key(tensor_rep(G, 0, 1))
    assert canonical_key(V >> V) == canonical_key(tensor_rep(G, 1, 1))
    assert (V**0).dim == 1


# -- custom atoms and external products ----------------------------------------


def test_custom_rep_in_sums(rng):
    G = parse_group("SO(3)")
    det = CustomRep(G, "det", 1, lambda g: np.atleast_2d(np.linalg.det(g)), lambda A: np.atleast_2d(np.trace(A)))
    r = det + Base(G) + det
    assert r.dim == 5
    assert "2*~det" in canonical_key(r)
    g = sample_element(G, rng)
    assert np.isclose(_dense(rho(r, g))[0, 0], 1.0)


def test_external_product_matches_kron(rng):
    a, b = parse_group("Z(3)"), parse_group("SO(2)")
    ra, rb = tensor_rep(a, 1), tensor_rep(b, 2)
    ext = ExternalProduct(ra, rb)
    assert ext.dim == 3 * 4
    g = sample_element(ext.group, rng)
    ga, gb = g.matrix[:3, :3], g.matrix[3:, 3:]
    assert np.allclose(_dense(rho(ext, g)), np.kron(ga, dense_tensor_rho(gb, 2)), atol=1e-12)
    A = ext.group.dense_lie()[0]
    assert np.allclose(
        _dense(drho(ext, 0)),
        np.kron(np.zeros((3, 3)), np.eye(4)) + np.kron(np.eye(3), dense_tensor_drho(A[3:, 3:], 2)),
        atol=1e-12,
    )


def test_rubiks_t1_dim():
    assert tensor_rep(catalog("Rubiks"), 3).dim == 48**3
