"""Command line interface: ``hwgmfem {mesh,solve,study,verify}``.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import compute_errors
from .hybrid_solver import NumericalError, WGSolution, solve_hwg
from .local_ops import LocalSolveError
from .mesh import MeshError, gen_quad_family, gen_rectangular, gen_triangular, read_mesh, write_mesh
from .problems import PROBLEMS, get_problem
from .reference_wg import DofCapError, compare_hybrid_vs_coupled
from .study import KINDS, SUPPORTED_K, StudyConfig, run_study, to_csv, to_markdown

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_VERIFY = 0, 1, 2, 3
SOLUTION_HEADER = "hwg-solution 1"
VERIFY_TOL = 1e-9

logger = logging.getLogger("hwgmfem")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- config files ---------------------------------------------------------------

def read_config(path):
    """Parse ``key = value`` lines into flag tokens; ``#`` starts a comment."""
    tokens = []
    for no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}: line {no}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise UsageError(f"{path}: line {no}: empty key")
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "yes", "on"):
            tokens.append(flag)
        elif value.lower() not in ("false", "no", "off"):
            tokens += [flag, value]
    return tokens


def _expand_config(argv):
    """Insert config-file flags right after the subcommand so explicit flags win."""
    argv = list(argv)
    for i, tok in enumerate(argv):
        if tok == "--config" or tok.startswith("--config="):
            if "=" in tok:
                path = tok.split("=", 1)[1]
                del argv[i]
            else:
                if i + 1 >= len(argv):
                    raise UsageError("--config needs a file name")
                path = argv[i + 1]
                del argv[i:i + 2]
            try:
                extra = read_config(path)
            except OSError as exc:
                raise UsageError(f"cannot read config file: {exc}") from None
            sub = next((j for j, t in enumerate(argv) if t in _SUBCOMMANDS), None)
            if sub is None:
                raise UsageError("--config requires a subcommand")
            return argv[:sub + 1] + extra + argv[sub + 1:]
    return argv


# -- argument groups -----------------------------------------------------------

def _add_mesh_args(p, single=True):
    p.add_argument("--kind", choices=KINDS, default="tri")
    if single:
        p.add_argument("--n", type=int, default=4, help="cells per side (tri, rect)")
    p.add_argument("--n0", type=int, default=4, help="coarse cells per side (quad)")
    p.add_argument("--levels", type=int, default=1 if single else 6)
    p.add_argument("--rho", type=float, default=0.2, help="vertex perturbation (quad)")
    p.add_argument("--seed", type=int, default=20140901)


def _add_problem_args(p):
    p.add_argument("--problem", default="ex1", help=f"one of {sorted(PROBLEMS)}")
    p.add_argument("--k", type=int, default=0, choices=SUPPORTED_K)


def build_parser():
    parser = _Parser(prog="hwgmfem", description="Hybridized weak Galerkin mixed finite elements.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="key = value file mirroring the flag names")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mesh", help="generate a mesh file")
    _add_mesh_args(p)
    p.add_argument("--out", help="output file; quad families write <stem>_L<level><suffix>")

    p = sub.add_parser("solve", help="solve on one mesh and write the solution")
    _add_mesh_args(p)
    p.add_argument("--mesh", help="read the mesh from this file instead of generating it")
    _add_problem_args(p)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--timing", action="store_true", help="record wall time (output is then not reproducible)")
    p.add_argument("--out")

    p = sub.add_parser("study", help="convergence study over a mesh family")
    _add_mesh_args(p, single=False)
    p.add_argument("--n-start", type=int, default=4)
    _add_problem_args(p)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--format", choices=("csv", "md"), default="csv")
    p.add_argument("--out")

    p = sub.add_parser("verify", help="compare hybridized and coupled solutions")
    _add_mesh_args(p)
    p.add_argument("--mesh")
    _add_problem_args(p)
    p.add_argument("--tol", type=float, default=VERIFY_TOL)
    return parser


_SUBCOMMANDS = ("mesh", "solve", "study", "verify")


def _mesh_from_args(args):
    if getattr(args, "mesh", None):
        try:
            text = Path(args.mesh).read_text()
        except OSError as exc:
            raise UsageError(f"cannot read mesh: {exc}") from None
        return read_mesh(text)
    if args.kind == "quad":
        return gen_quad_family(args.n0, args.levels, args.rho, seed=args.seed)[-1]
    return (gen_triangular if args.kind == "tri" else gen_rectangular)(args.n)


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- solution files -----------------------------------------------------------

def _fmt(a):
    return " ".join(repr(float(v)) for v in np.ravel(a))


def format_solution(mesh, sol, problem):
    lines = [SOLUTION_HEADER, f"k {sol.k}", f"problem {problem}", f"cells {mesh.n_cells}"]
    for c in range(mesh.n_cells):
        ids, _ = mesh.cell_edges(c)
        qb = " ".join(f"{int(e)}:" + ",".join(repr(float(v)) for v in row)
                      for e, row in zip(ids, sol.cell_qb(mesh, c)))
        lines.append(f"cell {c}: u {_fmt(sol.u[c])}; q0 {_fmt(sol.q0[c])}; qb {qb}")
    lines.append(f"edges {mesh.n_edges}")
    lines += [f"lambda {e}: {_fmt(sol.lam[e])}" for e in range(mesh.n_edges)]
    lines.append("diagnostics")
    for key in sorted(sol.diagnostics):
        val = sol.diagnostics[key]
        lines.append(f"{key} {val!r}" if isinstance(val, float) else f"{key} {val}")
    return "\n".join(lines) + "\n"


def read_solution(text, mesh=None):
    """Parse a solution file into ``(problem_id, WGSolution)``.

    When ``mesh`` is given the edge ids of every ``qb`` block are checked
    against its cell loops.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != SOLUTION_HEADER:
        raise ValueError("not a solution file")
    k = int(lines[1].split()[1])
    problem = lines[2].split(None, 1)[1]
    nc = int(lines[3].split()[1])
    u, q0, qb = [], [], []
    for c, line in enumerate(lines[4:4 + nc]):
        head, body = line.split(":", 1)
        if head != f"cell {c}":
            raise ValueError(f"expected block for cell {c}, got {head!r}")
        parts = dict(p.strip().split(" ", 1) for p in body.split(";"))
        u.append([float(v) for v in parts["u"].split()])
        q0.append([float(v) for v in parts["q0"].split()])
        edges = []
        for item in parts["qb"].split():
            e, coeffs = item.split(":")
            edges.append(int(e))
            qb.append([float(v) for v in coeffs.split(",")])
        if mesh is not None and edges != [int(e) for e in mesh.cell_edges(c)[0]]:
            raise ValueError(f"cell {c}: edge ids do not match the mesh")
    pos = 4 + nc
    ne = int(lines[pos].split()[1])
    lam = [[float(v) for v in ln.split(":", 1)[1].split()] for ln in lines[pos + 1:pos + 1 + ne]]
    diag = {}
    for ln in lines[pos + 2 + ne:]:
        key, val = ln.split(" ", 1)
        try:
            diag[key] = int(val)
        except ValueError:
            try:
                diag[key] = float(val)
            except ValueError:
                diag[key] = val
    sol = WGSolution(k, np.array(q0), np.array(qb), np.array(u),
                     np.array(lam).reshape(ne, k + 1), diag)
    return problem, sol


# -- subcommands ----------------------------------------------------------------

def cmd_mesh(args):
    if args.kind == "quad":
        meshes = gen_quad_family(args.n0, args.levels, args.rho, seed=args.seed)
        if len(meshes) > 1 and not args.out:
            raise UsageError("--out is required when writing several levels")
        if len(meshes) == 1:
            _emit(write_mesh(meshes[0]), args.out)
        else:
            out = Path(args.out)
            for i, m in enumerate(meshes, start=1):
                path = out.with_name(f"{out.stem}_L{i}{out.suffix}")
                path.write_text(write_mesh(m))
                logger.info("wrote %s (%d cells)", path, m.n_cells)
        return EXIT_OK
    _emit(write_mesh(_mesh_from_args(args)), args.out)
    return EXIT_OK


def cmd_solve(args):
    mesh = _mesh_from_args(args)
    spec = get_problem(args.problem)
    t0 = time.perf_counter()
    sol = solve_hwg(mesh, spec, args.k, threads=args.threads)
    wall = time.perf_counter() - t0
    sol.diagnostics.pop("wall_time", None)
    if args.timing:
        sol.diagnostics["wall_time"] = wall
    _emit(format_solution(mesh, sol, args.problem), args.out)
    return EXIT_OK


def cmd_study(args):
    cfg = StudyConfig(kind=args.kind, n_start=args.n_start, levels=args.levels, n0=args.n0,
                      rho=args.rho, seed=args.seed, problem=args.problem, k=args.k,
                      threads=args.threads)
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    def progress(mesh, sol, rep):
        logger.info("h=%.3e cells=%d dofs=%d", rep.h, mesh.n_cells, sol.diagnostics["n_dofs"])

    reports = run_study(cfg, callback=progress)
    _emit(to_csv(reports) if args.format == "csv" else to_markdown(reports), args.out)
    return EXIT_OK


def cmd_verify(args):
    mesh = _mesh_from_args(args)
    spec = get_problem(args.problem)
    try:
        rep = compare_hybrid_vs_coupled(mesh, spec, args.k)
    except DofCapError as exc:
        raise UsageError(f"refused: {exc}") from None
    ok = rep.passed(args.tol)
    print(f"q0 {rep.q0:.3e}")
    print(f"u {rep.u:.3e}")
    print(f"qb {rep.qb:.3e}")
    print(f"qb_single_valued {rep.qb_single_valued:.3e}")
    print(f"{'PASS' if ok else 'FAIL'} tol={args.tol:.1e}")
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {"mesh": cmd_mesh, "solve": cmd_solve, "study": cmd_study, "verify": cmd_verify}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        argv = _expand_config(argv)
    except UsageError as exc:
        print(f"hwgmfem: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        print("hwgmfem: error: --threads must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (UsageError, MeshError) as exc:
        print(f"hwgmfem: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, LocalSolveError, np.linalg.LinAlgError) as exc:
        print(f"hwgmfem: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"hwgmfem: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
