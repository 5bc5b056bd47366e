"""``equibasis`` command line.

Exit codes: 0 success, 1 property violation, 2 solver failure (click also
uses 2 for usage errors), 3 I/O failure.
"""
from __future__ import annotations

import json
import re
import statistics
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import basis_io
from .errors import BasisFormatError, CatalogError, EquibasisError, RepParseError, SolverError
from .groups import Group, group_from_json, parse_group
from .reps import ProductRep, Rep, parse_rep, tensor_rep
from .solver import (
    DENSE_MAX_DIM,
    BasisCache,
    Solver,
    assemble_constraints,
    krylov_nullspace,
    nullspace_dense,
    sampled_residual,
)

EXIT_OK, EXIT_VIOLATION, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3

_SIG = re.compile(r"^T\s*(?:(\d+)|\(\s*(\d+)\s*(?:,\s*(\d+)\s*)?\))$")


def parse_signatures(text: str) -> list[tuple[int, int]]:
    """``"T2,T(3,1),T(4)"`` -> ``[(2, 0), (3, 1), (4, 0)]``."""
    parts = [p for p in re.split(r",(?![^(]*\))", text) if p.strip()]
    if not parts:
        raise click.BadParameter("at least one tensor signature is required")
    out = []
    for p in parts:
        m = _SIG.match(p.strip())
        if not m:
            raise click.BadParameter(f"cannot parse tensor signature {p!r}")
        if m.group(1) is not None:
            out.append((int(m.group(1)), 0))
        else:
            out.append((int(m.group(2)), int(m.group(3) or 0)))
    return out


def _load_group(group: str | None, group_file: str | None) -> Group:
    if group_file:
        try:
            text = Path(group_file).read_text()
        except OSError as exc:
            click.echo(f"error: cannot read group file: {exc}", err=True)
            sys.exit(EXIT_IO)
        try:
            return group_from_json(text)
        except (ValueError, CatalogError) as exc:
            click.echo(f"error: malformed group file: {exc}", err=True)
            sys.exit(EXIT_IO)
    if not group:
        raise click.UsageError("one of --group or --group-file is required")
    try:
        return parse_group(group)
    except CatalogError as exc:
        raise click.BadParameter(str(exc), param_hint="--group") from exc


def _load_rep(text: str, group: Group) -> Rep:
    try:
        return parse_rep(text, group)
    except RepParseError as exc:
        raise click.BadParameter(str(exc), param_hint="--rep") from exc


def _solver(eps, seed, dense_cap, cache_dir, method="auto") -> Solver:
    if eps is not None and eps <= 0:
        raise click.BadParameter("eps must be positive", param_hint="--eps")
    return Solver(
        method=method,
        eps=eps,
        seed=seed,
        dense_max_dim=dense_cap,
        cache=BasisCache(cache_dir),
    )


def _solve(solver: Solver, rep: Rep):
    try:
        return solver.solve(rep)
    except SolverError as exc:
        click.echo(f"solver failure in block {exc.block}: {exc}", err=True)
        sys.exit(EXIT_SOLVER)
    except EquibasisError as exc:
        click.echo(f"solver failure: {exc}", err=True)
        sys.exit(EXIT_SOLVER)


def _group_options(f):
    f = click.option("--group", help='Catalog group such as "SO(3)", "S(6)", "SO+(1,3)", "Rubiks".')(f)
    f = click.option("--group-file", type=click.Path(), help="Group definition in JSON.")(f)
    return f


def _solver_options(f):
    f = click.option("--eps", type=float, default=None, help="Krylov stopping loss (default 1e-10*dim).")(f)
    f = click.option("--seed", type=int, default=0, show_default=True)(f)
    f = click.option(
        "--dense-cap", type=int, default=DENSE_MAX_DIM, show_default=True, help="Largest dim solved by dense SVD."
    )(f)
    f = click.option("--cache-dir", type=click.Path(), default=None, help="On-disk basis cache (or EQUIBASIS_CACHE).")(f)
    return f


@click.group()
def main():
    """Equivariant basis solver: symmetric subspaces of group representations."""


@main.command()
@_group_options
@click.option("--tensors", required=True, help='Comma separated signatures, e.g. "T2,T3,T(4,0)".')
@_solver_options
@click.option("--json", "as_json", is_flag=True, help="Emit JSON instead of a text table.")
@click.option("--out", type=click.Path(), default=None, help="Also write the output to this file.")
def ranks(group, group_file, tensors, eps, seed, dense_cap, cache_dir, as_json, out):
    """Rank of the symmetric subspace for each tensor signature."""
    G = _load_group(group, group_file)
    sigs = parse_signatures(tensors)
    solver = _solver(eps, seed, dense_cap, cache_dir)
    entries = []
    for p, q in sigs:
        rep = tensor_rep(G, p, q)
        t0 = time.perf_counter()
        basis = _solve(solver, rep)
        entries.append(
            {
                "p": p,
                "q": q,
                "dim": rep.dim,
                "rank": basis.rank,
                "residual": basis.residual,
                "seconds": round(time.perf_counter() - t0, 6),
            }
        )
    if as_json:
        text = json.dumps({"group": G.name, "entries": entries}, indent=2)
    else:
        lines = [f"{G.name}", f"{'tensor':<10}{'dim':>10}{'rank':>8}{'residual':>12}{'seconds':>10}"]
        for e in entries:
            name = f"T({e['p']},{e['q']})"
            lines.append(f"{name:<10}{e['dim']:>10}{e['rank']:>8}{e['residual']:>12.2e}{e['seconds']:>10.3f}")
        text = "\n".join(lines)
    click.echo(text)
    if out:
        _write_text(out, text + "\n")


def _write_text(path, text):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        click.echo(f"error: cannot write {path}: {exc}", err=True)
        sys.exit(EXIT_IO)


@main.command()
@_group_options
@click.option("--rep", "rep_text", required=True, help='Rep string, e.g. "T(1,1)" or "hom(2*T1,T0)".')
@click.option("--out", type=click.Path(), required=True, help="Destination EQB1 file.")
@_solver_options
@click.option("--json", "as_json", is_flag=True)
def basis(group, group_file, rep_text, out, eps, seed, dense_cap, cache_dir, as_json):
    """Solve a basis and write it as an EQB1 file."""
    G = _load_group(group, group_file)
    rep = _load_rep(rep_text, G)
    b = _solve(_solver(eps, seed, dense_cap, cache_dir), rep)
    try:
        basis_io.write_basis(out, b.Q, rep.key)
    except OSError as exc:
        click.echo(f"error: cannot write {out}: {exc}", err=True)
        sys.exit(EXIT_IO)
    if as_json:
        click.echo(json.dumps({"group": G.name, "rep": rep_text, "dim": rep.dim, "rank": b.rank, "residual": b.residual, "out": str(out)}))
    else:
        click.echo(f"rank {b.rank}  dim {rep.dim}  residual {b.residual:.3e}  -> {out}")


@main.command()
@_group_options
@click.option("--rep", "rep_text", required=True)
@click.option("--basis", "basis_path", type=click.Path(), default=None, help="Check this EQB1 file instead of solving.")
@click.option("--samples", type=int, default=20, show_default=True)
@click.option("--tol", type=float, default=1e-6, show_default=True)
@_solver_options
@click.option("--json", "as_json", is_flag=True)
def check(group, group_file, rep_text, basis_path, samples, tol, eps, seed, dense_cap, cache_dir, as_json):
    """Verify ρ(g)q = q on sampled group elements (exit 1 on violation)."""
    G = _load_group(group, group_file)
    rep = _load_rep(rep_text, G)
    if basis_path:
        try:
            Q, key = basis_io.read_basis(basis_path)
        except (OSError, BasisFormatError) as exc:
            click.echo(f"error: cannot read basis: {exc}", err=True)
            sys.exit(EXIT_IO)
        if Q.shape[0] != rep.dim:
            click.echo(f"error: basis has dim {Q.shape[0]}, rep has dim {rep.dim}", err=True)
            sys.exit(EXIT_IO)
    else:
        Q = _solve(_solver(eps, seed, dense_cap, cache_dir), rep).Q
    raw, rel = sampled_residual(rep, Q, samples=samples, seed=seed)
    ok = rel <= tol
    if as_json:
        click.echo(json.dumps({"group": G.name, "rep": rep_text, "rank": int(Q.shape[1]), "samples": samples, "residual": raw, "relative_residual": rel, "ok": ok}))
    else:
        status = "ok" if ok else "VIOLATION"
        click.echo(f"rank {Q.shape[1]}  max residual {raw:.3e}  relative {rel:.3e}  over {samples} samples: {status}")
    sys.exit(EXIT_OK if ok else EXIT_VIOLATION)


# ---------------------------------------------------------------------------
# pixmaps
# ---------------------------------------------------------------------------

ZERO_COLOR = (255, 255, 255)


def _matrix_shape(rep: Rep):
    if isinstance(rep, ProductRep) and len(rep.factors) == 2:
        return rep.factors[0].dim, rep.factors[1].dim
    return None


def basis_colors(Q: np.ndarray, discrete: bool, seed: int = 0) -> np.ndarray:
    """One RGB color per row (matrix cell) of ``Q``.

    Discrete groups: cells with identical coefficient rows share a color, so
    orbits show up directly.  Continuous groups: each basis element gets a
    random color and a cell mixes them by coefficient magnitude.  Zero rows
    get :data:`ZERO_COLOR`.
    """
    n, r = Q.shape
    rng = np.random.default_rng(seed)
    out = np.tile(np.array(ZERO_COLOR, dtype=np.uint8), (n, 1))
    if r == 0:
        return out
    A = np.abs(Q)
    scale = A.max()
    nonzero = A.max(axis=1) > 1e-8 * scale
    if discrete:
        keys = np.round(Q.real / scale, 6) + 0.0
        _, labels = np.unique(keys[nonzero], axis=0, return_inverse=True)
        palette = rng.integers(0, 200, size=(labels.max() + 1, 3))
        out[nonzero] = palette[labels.ravel()]
        return out
    palette = rng.integers(0, 220, size=(r, 3)).astype(float)
    w = A[nonzero]
    w = w / w.sum(axis=1, keepdims=True)
    out[nonzero] = np.clip(w @ palette, 0, 255).astype(np.uint8)
    return out


def write_ppm(path, rgb: np.ndarray) -> None:
    h, w, _ = rgb.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + np.ascontiguousarray(rgb, dtype=np.uint8).tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a P6 pixmap")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)


@main.command()
@_group_options
@click.option("--rep", "rep_text", required=True, help="Matrix-shaped rep, e.g. T(1,1) or hom(V,V).")
@click.option("--out", type=click.Path(), required=True, help="Destination .ppm file.")
@click.option("--scale", type=int, default=0, help="Pixels per matrix cell (0 = auto).")
@_solver_options
def viz(group, group_file, rep_text, out, scale, eps, seed, dense_cap, cache_dir):
    """Render a matrix-shaped basis as a P6 pixmap, one color per basis pattern."""
    G = _load_group(group, group_file)
    rep = _load_rep(rep_text, G)
    shape = _matrix_shape(rep)
    if shape is None:
        raise click.UsageError(f"{rep_text} is not matrix shaped (need a product of two factors)")
    if rep.dim > 4096:
        raise click.UsageError(f"{rep_text} has dim {rep.dim} > 4096")
    b = _solve(_solver(eps, seed, dense_cap, cache_dir), rep)
    colors = basis_colors(b.Q, G.D == 0, seed).reshape(shape[0], shape[1], 3)
    s = scale or max(1, 256 // max(shape))
    img = np.repeat(np.repeat(colors, s, axis=0), s, axis=1)
    try:
        write_ppm(out, img)
    except OSError as exc:
        click.echo(f"error: cannot write {out}: {exc}", err=True)
        sys.exit(EXIT_IO)
    n_colors = len(np.unique(colors.reshape(-1, 3), axis=0))
    click.echo(f"rank {b.rank}  {shape[0]}x{shape[1]} cells  {n_colors} colors  -> {out}")


# ---------------------------------------------------------------------------
# benchmarks
# ---------------------------------------------------------------------------


def fit_exponent(ns, seconds) -> float:
    """Slope of ``log t`` against ``log n`` (least squares)."""
    x, y = np.log(np.asarray(ns, float)), np.log(np.asarray(seconds, float))
    return float(np.polyfit(x, y, 1)[0])


def _timed(fn, repeats):
    times, result = [], None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return result, {"min": min(times), "median": statistics.median(times), "all": times}


@main.command()
@click.option("--group", required=True, help='Group, or a family with "n" as parameter, e.g. "S(n)".')
@click.option("--n", "n_values", default=None, help='Values substituted for n, e.g. "5,10,20,40".')
@click.option("--rep", "rep_text", default="T2", show_default=True)
@click.option("--repeats", type=int, default=3, show_default=True)
@click.option("--momentum/--no-momentum", default=True, show_default=True, help="Accelerated Krylov iteration.")
@_solver_options
@click.option("--json", "as_json", is_flag=True)
@click.option("--out", type=click.Path(), default=None)
def bench(group, n_values, rep_text, repeats, momentum, eps, seed, dense_cap, cache_dir, as_json, out):
    """Time the Krylov (and, when small enough, dense) solver against dim."""
    if repeats < 1:
        raise click.BadParameter("repeats must be >= 1", param_hint="--repeats")
    specs = []
    if n_values:
        if "(n)" not in group:
            raise click.UsageError("--n needs a group family such as S(n)")
        for n in n_values.split(","):
            specs.append((int(n), group.replace("(n)", f"({int(n)})")))
    else:
        specs.append((None, group))
    entries = []
    failed = False
    for n, gspec in specs:
        try:
            G = parse_group(gspec)
        except CatalogError as exc:
            raise click.BadParameter(str(exc), param_hint="--group") from exc
        rep = _load_rep(rep_text, G)
        C = assemble_constraints(rep)
        try:
            Qk, tk = _timed(lambda: krylov_nullspace(C, eps=eps, seed=seed, momentum=momentum), repeats)
        except EquibasisError as exc:
            click.echo(f"solver failure for {gspec}: {exc}", err=True)
            sys.exit(EXIT_SOLVER)
        entry = {"group": G.name, "n": n, "dim": rep.dim, "rank_krylov": int(Qk.shape[1]), "krylov_seconds": tk}
        if rep.dim <= dense_cap:
            Qd, td = _timed(lambda: nullspace_dense(C), repeats)
            entry["rank_dense"] = int(Qd.shape[1])
            entry["dense_seconds"] = td
            entry["agree"] = entry["rank_dense"] == entry["rank_krylov"]
            failed |= not entry["agree"]
        entries.append(entry)
    report = {"rep": rep_text, "repeats": repeats, "entries": entries}
    timed = [(e["n"], e["krylov_seconds"]["min"]) for e in entries if e["n"] is not None]
    if len(timed) >= 2:
        report["krylov_exponent"] = fit_exponent(*zip(*timed))
    if as_json:
        text = json.dumps(report, indent=2)
    else:
        lines = [f"{'group':<12}{'dim':>8}{'rank':>6}{'krylov min':>12}{'median':>10}{'dense min':>11}"]
        for e in entries:
            dense = f"{e['dense_seconds']['min']:>11.4f}" if "dense_seconds" in e else f"{'-':>11}"
            lines.append(
                f"{e['group']:<12}{e['dim']:>8}{e['rank_krylov']:>6}"
                f"{e['krylov_seconds']['min']:>12.4f}{e['krylov_seconds']['median']:>10.4f}{dense}"
            )
        if "krylov_exponent" in report:
            lines.append(f"fitted exponent (time ~ n^k): k = {report['krylov_exponent']:.2f}")
        text = "\n".join(lines)
    click.echo(text)
    if out:
        _write_text(out, text + "\n")
    sys.exit(EXIT_VIOLATION if failed else EXIT_OK)


if __name__ == "__main__":
    main()
