"""Convergence studies over mesh families and their tabular output."""

from __future__ import annotations

import io
from dataclasses import dataclass

from .errors import ErrorReport, attach_rates, compute_errors
from .hybrid_solver import solve_hwg
from .mesh import gen_quad_family, gen_rectangular, gen_triangular
from .problems import get_problem

KINDS = ("tri", "rect", "quad")
SUPPORTED_K = (0, 1, 2)
CSV_HEADER = "h,e_triple,ord1,delta,ord2,eps_h1,ord3,eps_l2,ord4"


@dataclass
class StudyConfig:
    kind: str = "tri"
    n_start: int = 4
    levels: int = 6
    n0: int = 4
    rho: float = 0.2
    seed: int = 20140901
    problem: str = "ex1"
    k: int = 0
    threads: int = 1

    def validate(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown mesh kind {self.kind!r}; choose from {KINDS}")
        if self.k not in SUPPORTED_K:
            raise ValueError(f"k={self.k} unsupported; choose from {SUPPORTED_K}")
        if self.levels < 2:
            raise ValueError("levels must be at least 2 to compute rates")
        if self.n_start < 1 or self.n0 < 1:
            raise ValueError("mesh resolution must be positive")
        get_problem(self.problem)
        return self


def study_meshes(cfg):
    """Meshes of the study, coarse to fine."""
    if cfg.kind == "quad":
        return gen_quad_family(cfg.n0, cfg.levels, cfg.rho, seed=cfg.seed)
    gen = gen_triangular if cfg.kind == "tri" else gen_rectangular
    return [gen(cfg.n_start * 2 ** i) for i in range(cfg.levels)]


def run_study(cfg, meshes=None, callback=None):
    """Solve on every level and return ErrorReports with rates attached."""
    cfg.validate()
    spec = get_problem(cfg.problem)
    reports = []
    for mesh in (meshes if meshes is not None else study_meshes(cfg)):
        sol = solve_hwg(mesh, spec, cfg.k, threads=cfg.threads)
        rep = compute_errors(mesh, spec, sol)
        reports.append(rep)
        if callback is not None:
            callback(mesh, sol, rep)
    return attach_rates(reports)


def _fmt_err(v):
    return f"{v:.2e}"


def _fmt_rate(r):
    return "-" if r is None else f"{r:.2f}"


def _row(rep):
    cells = [_fmt_err(rep.h)]
    for name in ErrorReport.NORMS:
        cells += [_fmt_err(getattr(rep, name)), _fmt_rate(rep.rates.get(name))]
    return cells


def to_csv(reports):
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for rep in reports:
        buf.write(",".join(_row(rep)) + "\n")
    return buf.getvalue()


def to_markdown(reports):
    head = ["h", "e_triple", "order", "delta", "order", "eps_h1", "order", "eps_l2", "order"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    lines += ["| " + " | ".join(_row(rep)) + " |" for rep in reports]
    return "\n".join(lines) + "\n"
