"""Acceptance checks, one marker per criterion.

The terminal summary (see conftest) prints a PASS/FAIL line per criterion.
Rank tables below are transcribed reference values; orbit counts and dense
SVDs serve as independent oracles where a value is derived rather than
transcribed.
"""
import subprocess
import sys
import time

import numpy as np
import pytest
from oracles import bell, circulant, orbit_basis, orbit_count_fast, subspace_angle

from equibasis.emlp import EmlpNetwork
from equibasis.groups import catalog, parse_group, sample_element
from equibasis.linop import fuse_permutations
from equibasis.reps import ExternalProduct, hom_rep, parse_rep, rho, tensor_rep
from equibasis.solver import (
    KrylovInfo,
    Solver,
    assemble_constraints,
    krylov_nullspace,
    nullspace_dense,
    principal_angles,
    product_group_basis,
    sampled_residual,
    solve_basis,
    solve_hom_basis,
)

ANGLE_TOL = 1e-6

# rank tables: rows are tensor order k, columns the group parameter n
Z_RANKS = {
    1: {2: 1, 3: 1, 4: 1, 5: 1, 6: 1, 7: 1, 8: 1},
    2: {2: 2, 3: 3, 4: 4, 5: 5, 6: 6, 7: 7, 8: 8},
    3: {2: 4, 3: 9, 4: 16, 5: 25, 6: 36, 7: 49, 8: 64},
    4: {2: 8, 3: 27, 4: 64, 5: 125, 6: 216, 7: 343, 8: 512},
}
S_RANKS = {
    1: {2: 1, 3: 1, 4: 1, 5: 1, 6: 1},
    2: {2: 2, 3: 2, 4: 2, 5: 2, 6: 2},
    3: {2: 4, 3: 5, 4: 5, 5: 5, 6: 5},
    4: {2: 8, 3: 14, 4: 15, 5: 15, 6: 15},
    5: {2: 16, 3: 41, 4: 51, 5: 52, 6: 52},
}
ROTATION_RANKS = [
    ("SO(3)", "T4", 3),
    ("SO(3)", "T6", 15),
    ("SO(5)", "T5", 1),
    ("O(5)", "T5", 0),
    ("O(2)", "T6", 10),
    ("O(5)", "T6", 15),
]
OTHER_RANKS = [
    ("SO+(1,3)", "T(4,0)", 4),
    ("O(1,3)", "T(4,0)", 3),
    ("Sp(2)", "T(6,0)", 14),
    ("SU(3)", "T(3,3)", 6),
]
RUBIKS_RANKS = {1: 2, 2: 6, 3: 22}
RUBIKS_T4_LOWER = 20


def criterion(number, title):
    return pytest.mark.criterion(number, title)


def report(number, text):
    print(f"[criterion {number}] {text}")


def _solve_table(cases):
    """Solve each (group, rep) with a fresh cache; returns {case: (rep, basis, seconds)}."""
    solver = Solver(cache=None)
    out = {}
    for g, text in cases:
        rep = parse_rep(text, parse_group(g))
        t0 = time.perf_counter()
        b = solver.solve(rep)
        out[(g, text)] = (rep, b, time.perf_counter() - t0)
    return out


# -- fixtures: each criterion's bases are solved once and reused by criterion 8


@pytest.fixture(scope="module")
def cyclic_bases():
    t0 = time.perf_counter()
    bases = _solve_table([(f"Z({n})", f"T{k}") for k in Z_RANKS for n in Z_RANKS[k]])
    return bases, time.perf_counter() - t0


@pytest.fixture(scope="module")
def symmetric_bases():
    t0 = time.perf_counter()
    bases = _solve_table([(f"S({n})", f"T{k}") for k in S_RANKS for n in S_RANKS[k]])
    return bases, time.perf_counter() - t0


@pytest.fixture(scope="module")
def rotation_bases():
    t0 = time.perf_counter()
    bases = _solve_table([(g, t) for g, t, _ in ROTATION_RANKS])
    return bases, time.perf_counter() - t0


@pytest.fixture(scope="module")
def other_bases():
    t0 = time.perf_counter()
    bases = _solve_table([(g, t) for g, t, _ in OTHER_RANKS])
    return bases, time.perf_counter() - t0


@pytest.fixture(scope="module")
def rubiks_bases():
    bases = _solve_table([("Rubiks", "T1"), ("Rubiks", "T2")])
    rep = tensor_rep(catalog("Rubiks"), 3)
    t0 = time.perf_counter()
    b = Solver(method="krylov", cache=None).solve(rep)
    bases[("Rubiks", "T3")] = (rep, b, time.perf_counter() - t0)
    return bases, None


@pytest.fixture(scope="module")
def structural_bases():
    cases = [(f"Z({n})", "T(1,1)") for n in range(2, 9)]
    cases += [(f"S({n})", "T(1,1)") for n in range(2, 9)]
    cases += [(f"GCNN({n})", "T(1,1)") for n in range(2, 7)]
    return _solve_table(cases), None


# -- 1 --------------------------------------------------------------------------


@criterion(1, "Z_n ranks T1..T4, n=2..8 exact, < 1 min")
def test_c1_cyclic_table(cyclic_bases):
    bases, seconds = cyclic_bases
    wrong = []
    for k, row in Z_RANKS.items():
        for n, expected in row.items():
            got = bases[(f"Z({n})", f"T{k}")][1].rank
            if got != expected:
                wrong.append((n, k, got, expected))
    report(1, f"{len(bases)} cells, {len(wrong)} mismatches, {seconds:.1f}s")
    assert not wrong
    assert bases[("Z(4)", "T3")][1].rank == 16 and bases[("Z(3)", "T4")][1].rank == 27
    assert seconds < 60


# -- 2 --------------------------------------------------------------------------


@criterion(2, "S_n ranks T1..T5, n=2..6 exact, Bell ceiling, < 5 min")
def test_c2_symmetric_table(symmetric_bases):
    bases, seconds = symmetric_bases
    wrong = []
    for k, row in S_RANKS.items():
        for n, expected in row.items():
            got = bases[(f"S({n})", f"T{k}")][1].rank
            if got != expected:
                wrong.append((n, k, got, expected))
            assert got <= bell(k)
    report(2, f"{len(bases)} cells, {len(wrong)} mismatches, {seconds:.1f}s")
    assert not wrong
    assert seconds < 300


@criterion(2, "S_n ranks T1..T5, n=2..6 exact, Bell ceiling, < 5 min")
def test_c2_symmetric_orbit_oracle(symmetric_bases):
    bases, _ = symmetric_bases
    for (g, text), (rep, b, _) in bases.items():
        G = rep.group
        k = int(text[1:])
        assert b.rank == orbit_count_fast([h.perm for h in G.discrete_generators], G.base_dim, k)


# -- 3 --------------------------------------------------------------------------


@criterion(3, "SO(n)/O(n) ranks exact, < 10 min")
def test_c3_rotation_ranks(rotation_bases):
    bases, seconds = rotation_bases
    for g, text, expected in ROTATION_RANKS:
        rep, b, t = bases[(g, text)]
        report(3, f"{g} {text} dim {rep.dim}: rank {b.rank} (expected {expected}) {t:.1f}s")
        assert b.rank == expected
    assert max(rep.dim for rep, _, _ in bases.values()) == 5**6
    assert seconds < 600


# -- 4 --------------------------------------------------------------------------


@criterion(4, "Lorentz, Sp(2), SU(3) ranks exact, < 10 min")
def test_c4_other_ranks(other_bases):
    bases, seconds = other_bases
    for g, text, expected in OTHER_RANKS:
        rep, b, t = bases[(g, text)]
        report(4, f"{g} {text} dim {rep.dim}: rank {b.rank} (expected {expected}) {t:.1f}s")
        assert b.rank == expected
    assert np.iscomplexobj(bases[("SU(3)", "T(3,3)")][1].Q)
    assert seconds < 600


@criterion(4, "Lorentz, Sp(2), SU(3) ranks exact, < 10 min")
def test_c4_su3_complex_krylov(other_bases):
    rep, dense, _ = other_bases[0][("SU(3)", "T(3,3)")]
    Q = krylov_nullspace(assemble_constraints(rep))
    assert np.iscomplexobj(Q) and Q.shape[1] == 6
    assert np.max(principal_angles(Q, dense.Q)) <= ANGLE_TOL


# -- 5 --------------------------------------------------------------------------

RUBIKS_NOTE = (
    "the 6 face turns generate the full cube group; its T2/T3 ranks equal the "
    "orbit counts 9/51 of that group, which the reference table does not list"
)


@criterion(5, "Rubik's cube ranks T1..T3, T4 lower bound, T3 Krylov < 30 min")
def test_c5_rubiks_t1(rubiks_bases):
    b = rubiks_bases[0][("Rubiks", "T1")][1]
    report(5, f"T1 rank {b.rank} (expected {RUBIKS_RANKS[1]})")
    assert b.rank == RUBIKS_RANKS[1]


@criterion(5, "Rubik's cube ranks T1..T3, T4 lower bound, T3 Krylov < 30 min")
@pytest.mark.xfail(strict=True, reason=RUBIKS_NOTE)
def test_c5_rubiks_t2_reference(rubiks_bases):
    b = rubiks_bases[0][("Rubiks", "T2")][1]
    report(5, f"T2 rank {b.rank} (expected {RUBIKS_RANKS[2]}) FAIL: {RUBIKS_NOTE}")
    assert b.rank == RUBIKS_RANKS[2]


@criterion(5, "Rubik's cube ranks T1..T3, T4 lower bound, T3 Krylov < 30 min")
@pytest.mark.xfail(strict=True, reason=RUBIKS_NOTE)
def test_c5_rubiks_t3_reference(rubiks_bases):
    b = rubiks_bases[0][("Rubiks", "T3")][1]
    report(5, f"T3 rank {b.rank} (expected {RUBIKS_RANKS[3]}) FAIL: {RUBIKS_NOTE}")
    assert b.rank == RUBIKS_RANKS[3]


@criterion(5, "Rubik's cube ranks T1..T3, T4 lower bound, T3 Krylov < 30 min")
def test_c5_rubiks_orbit_oracle(rubiks_bases):
    """The solver's ranks agree with the orbit count of the generated group."""
    perms = [h.perm for h in catalog("Rubiks").discrete_generators]
    for k in (1, 2, 3):
        b = rubiks_bases[0][("Rubiks", f"T{k}")][1]
        assert b.rank == orbit_count_fast(perms, 48, k)


@criterion(5, "Rubik's cube ranks T1..T3, T4 lower bound, T3 Krylov < 30 min")
def test_c5_rubiks_t3_krylov_time(rubiks_bases):
    rep, b, seconds = rubiks_bases[0][("Rubiks", "T3")]
    report(5, f"T3 dim {rep.dim} via Krylov: rank {b.rank} in {seconds:.0f}s")
    assert rep.dim == 110592
    assert seconds < 1800
    perms = [h.perm for h in catalog("Rubiks").discrete_generators]
    assert np.max(principal_angles(b.Q, orbit_basis(perms, 48, 3))) <= ANGLE_TOL


@criterion(5, "Rubik's cube ranks T1..T3, T4 lower bound, T3 Krylov < 30 min")
def test_c5_rubiks_t4_lower_bound(rubiks_bases):
    """T4 = T1 ⊗ T3: Kronecker products of invariant vectors are invariant and
    orthonormal, so rank(T4) >= rank(T1) * rank(T3)."""
    bases = rubiks_bases[0]
    Q1, Q3 = bases[("Rubiks", "T1")][1].Q, bases[("Rubiks", "T3")][1].Q
    assert np.linalg.norm(Q1.T @ Q1 - np.eye(Q1.shape[1])) <= 1e-8
    assert np.linalg.norm(Q3.T @ Q3 - np.eye(Q3.shape[1])) <= 1e-8
    bound = Q1.shape[1] * Q3.shape[1]
    report(5, f"T4 rank >= {bound} (lower bound {RUBIKS_T4_LOWER})")
    assert bound >= RUBIKS_T4_LOWER
    # one random element of span{q1 ⊗ q3}, checked on the 5.3M-dim T4 rep
    G = catalog("Rubiks")
    rng = np.random.default_rng(0)
    v = np.kron(Q1 @ rng.standard_normal(Q1.shape[1]), Q3 @ rng.standard_normal(Q3.shape[1]))
    v /= np.linalg.norm(v)
    T4 = tensor_rep(G, 4)
    for k in range(G.M):
        P = fuse_permutations(rho(T4, k))
        assert np.linalg.norm(P.matvec(v) - v) <= 1e-8
    for _ in range(3):
        g = sample_element(G, rng)
        assert np.linalg.norm(rho(T4, g).matvec(v) - v) <= 1e-8


# -- 6 --------------------------------------------------------------------------


@criterion(6, "structural recovery: circulants, deep sets, GCNN rank 4n^2")
def test_c6_circulant(structural_bases):
    for n in range(2, 9):
        b = structural_bases[0][(f"Z({n})", "T(1,1)")][1]
        ref = np.stack([circulant(np.eye(n)[k]).ravel() for k in range(n)], axis=1) / np.sqrt(n)
        angle = np.max(principal_angles(b.Q, ref))
        assert b.rank == n and angle <= ANGLE_TOL
        # each basis column is itself circulant when reshaped
        for q in b.Q.T:
            M = q.reshape(n, n)
            assert np.allclose(M, circulant(M[0]), atol=1e-8)


@criterion(6, "structural recovery: circulants, deep sets, GCNN rank 4n^2")
def test_c6_deep_sets(structural_bases):
    for n in range(2, 9):
        b = structural_bases[0][(f"S({n})", "T(1,1)")][1]
        ref = np.linalg.qr(np.stack([np.eye(n).ravel(), np.ones(n * n)], axis=1))[0]
        assert b.rank == 2 and subspace_angle(b.Q, ref) <= ANGLE_TOL


@criterion(6, "structural recovery: circulants, deep sets, GCNN rank 4n^2")
def test_c6_gcnn(structural_bases):
    for n in range(2, 7):
        rep, b, t = structural_bases[0][(f"GCNN({n})", "T(1,1)")]
        G = rep.group
        oracle = orbit_basis([h.perm for h in G.discrete_generators], G.base_dim, 2)
        angle = np.max(principal_angles(b.Q, oracle))
        report(6, f"GCNN({n}) T(1,1) dim {rep.dim}: rank {b.rank} (expected {4 * n * n}), angle {angle:.1e}, {t:.1f}s")
        assert b.rank == 4 * n * n == oracle.shape[1]
        assert angle <= ANGLE_TOL
        if rep.dim <= 1296:
            Qd = nullspace_dense(assemble_constraints(rep))
            assert np.max(principal_angles(b.Q, Qd)) <= ANGLE_TOL


# -- 7 --------------------------------------------------------------------------

CONVERGENCE_CASES = [
    ("S(6)", "T4", True),
    ("S(5)", "T5", True),
    ("Z(8)", "T4", True),
    ("Rubiks", "T2", True),
    ("SO(3)", "T7", True),
    ("Sp(2)", "T(6,0)", False),
    ("SO(5)", "T5", False),
]


@criterion(7, "Krylov loss reaches 1e-10*dim within 300 iterations, matches dense")
@pytest.mark.parametrize("group,text,dense", CONVERGENCE_CASES)
def test_c7_convergence(group, text, dense):
    rep = parse_rep(text, parse_group(group))
    assert rep.dim >= 1000
    C = assemble_constraints(rep)
    infos = []
    Q = krylov_nullspace(C, momentum=False, infos=infos)
    eps = 1e-10 * rep.dim
    steps = [i.converged_at for i in infos]
    report(7, f"{group} {text} dim {rep.dim}: rank {Q.shape[1]}, eps reached at iterations {steps}")
    for info in infos:
        assert info.converged_at is not None and info.converged_at <= 300
        assert info.losses[info.converged_at] <= eps
        # geometric decay up to eps
        L = np.array(info.losses[: info.converged_at + 1])
        rate = np.exp(np.polyfit(np.arange(L.size), np.log(L), 1)[0])
        assert rate < 1
    if dense:
        Qd = nullspace_dense(assemble_constraints(rep))
        assert Qd.shape[1] == Q.shape[1]
        assert np.max(principal_angles(Q, Qd), initial=0.0) <= ANGLE_TOL


# -- 8 --------------------------------------------------------------------------


@criterion(8, "sampled sufficiency: ||rho(g)q - q|| <= 1e-6 for every basis of criteria 1-6")
@pytest.mark.parametrize(
    "fixture", ["cyclic_bases", "symmetric_bases", "rotation_bases", "other_bases", "rubiks_bases", "structural_bases"]
)
def test_c8_sufficiency(fixture, request):
    bases = request.getfixturevalue(fixture)[0]
    worst = 0.0
    for (g, text), (rep, b, _) in bases.items():
        raw, _ = sampled_residual(rep, b.Q, samples=20, seed=7)
        worst = max(worst, raw)
        assert raw <= 1e-6, (g, text, raw)
    report(8, f"{fixture}: {len(bases)} bases, max residual {worst:.1e}")


# -- 9 --------------------------------------------------------------------------


@criterion(9, "block solver: O(3) 5T0+5T1 -> T2 rank 5, same span as direct solve")
def test_c9_hom_blocks():
    G = parse_group("O(3)")
    rin, rout = parse_rep("5*T0+5*T1", G), tensor_rep(G, 2)
    b = solve_hom_basis(rin, rout, Solver(cache=None))
    direct = nullspace_dense(assemble_constraints(hom_rep(rin, rout)))
    angle = np.max(principal_angles(b.Q, direct))
    report(9, f"hom dim {b.dim}: block rank {b.rank}, direct rank {direct.shape[1]}, angle {angle:.1e}")
    assert b.dim == 180 and b.rank == 5 == direct.shape[1]
    assert angle <= ANGLE_TOL


# -- 10 -------------------------------------------------------------------------


@criterion(10, "product rule: Q_Z4 (x) Q_Z4 equals direct Z4 x Z4 solve")
def test_c10_product_rule():
    Z = catalog("Z", 4)
    qa = solve_basis(tensor_rep(Z, 1, 1))
    pb = product_group_basis(qa, qa)
    rep = ExternalProduct(tensor_rep(Z, 1, 1), tensor_rep(Z, 1, 1))
    direct = nullspace_dense(assemble_constraints(rep))
    angle = np.max(principal_angles(pb.Q, direct))
    report(10, f"kron rank {pb.rank}, direct rank {direct.shape[1]}, angle {angle:.1e}")
    assert pb.rank == 16 == direct.shape[1]
    assert angle <= ANGLE_TOL
    # same check against the catalog grid group, whose axes are interleaved
    grid = solve_basis(tensor_rep(catalog("ZxZ", 4), 1, 1)).Q
    Qg = pb.Q.reshape(4, 4, 4, 4, -1).transpose(0, 2, 1, 3, 4).reshape(256, -1)
    assert np.max(principal_angles(Qg, grid)) <= ANGLE_TOL


# -- 11 -------------------------------------------------------------------------


@criterion(11, "3-layer EMLP equivariance <= 1e-6 over 20 samples")
@pytest.mark.parametrize(
    "group,rin,rout", [("O(5)", "2*T1", "T0"), ("O(3)", "5*T0+5*T1", "T2"), ("O(1,3)", "4*T(1,0)", "T0")]
)
def test_c11_emlp_equivariance(group, rin, rout):
    G = parse_group(group)
    net = EmlpNetwork.build(parse_rep(rin, G), parse_rep(rout, G), hidden=128, num_layers=3, seed=0)
    rng = np.random.default_rng(11)
    x = rng.standard_normal((4, net.input_rep.dim))
    fx = net(x)
    worst = 0.0
    for _ in range(20):
        g = sample_element(G, rng)
        lhs = net(x @ rho(net.input_rep, g).to_dense().T)
        rhs = fx @ rho(net.output_rep, g).to_dense().T
        err = np.linalg.norm(lhs - rhs, axis=1)
        assert np.all(err <= 1e-6 * np.linalg.norm(fx, axis=1) + 1e-9)
        worst = max(worst, float(np.max(err / np.linalg.norm(fx, axis=1))))
    report(11, f"{group} {rin} -> {rout}: {len(net.layers) - 1} gated layers, max relative residual {worst:.1e}")
    assert len(net.layers) == 4


# -- 12 -------------------------------------------------------------------------


@criterion(12, "determinism: identical seeds give bitwise-identical EQB1 files")
@pytest.mark.parametrize(
    "group,text", [("S(6)", "T4"), ("O(1,3)", "T(2,2)"), ("SU(3)", "T(3,3)"), ("Sp(2)", "T(6,0)")]
)
def test_c12_determinism(group, text, tmp_path):
    paths = []
    for i in range(2):
        p = tmp_path / f"run{i}.eqb"
        subprocess.run(
            [sys.executable, "-m", "equibasis.cli", "basis", "--group", group, "--rep", text, "--out", str(p), "--seed", "0"],
            check=True,
            capture_output=True,
        )
        paths.append(p)
    a, b = (p.read_bytes() for p in paths)
    report(12, f"{group} {text}: {len(a)} bytes, identical={a == b}")
    assert a == b
