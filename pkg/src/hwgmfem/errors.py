"""Error norms against projections of the exact solution, and convergence rates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .basis import edge_reference_mass
from .hybrid_solver import edge_slots
from .local_ops import CellBatch, error_degrees, project_edges


@dataclass
class ErrorReport:
    h: float
    triple_e: float
    delta: float
    eps_h1: float
    eps_l2: float
    rates: dict = field(default_factory=dict)
    n_cells: Optional[int] = None

    NORMS = ("triple_e", "delta", "eps_h1", "eps_l2")

    def values(self):
        return [getattr(self, n) for n in self.NORMS]


def _batches(mesh, k):
    cd, ed = error_degrees(k)
    return [CellBatch(mesh, cells, k, cd, ed) for _, cells in sorted(mesh.cell_groups().items())]


def _projected_flux(b, spec):
    """(Q0 q per cell, Q_b(q.n) per local edge) for the exact flux."""
    q0 = b.project_vector(spec.exact_q)
    qb = b.edge_project(lambda x, y, n: np.sum(np.asarray(spec.exact_q(x, y)) * n, axis=-1))
    return q0, qb


def triple_norm_error(mesh, spec, sol, k=None, weighted=False):
    """sqrt(sum_T |e0|^2_T + h_T |e0.n - e_b|^2_{dT}), e = Q_h q - q_h.

    With ``weighted=True`` the volume term is (alpha e0, e0)_T instead.
    """
    k = sol.k if k is None else k
    total = 0.0
    for b in _batches(mesh, k):
        q0e, qbe = _projected_flux(b, spec)
        e0 = q0e - sol.q0[b.cells]
        eb = qbe - sol.qb[b.slots]
        nk = b.nk
        e0v = np.stack([np.einsum("nqi,ni->nq", b.phi_k, e0[:, :nk]),
                        np.einsum("nqi,ni->nq", b.phi_k, e0[:, nk:])], axis=-1)
        if weighted:
            al = spec.alpha_matrix(b.X[..., 0], b.X[..., 1])
            vol = np.einsum("nq,nqc,nqcd,nqd->n", b.W, e0v, al, e0v)
        else:
            vol = np.einsum("nq,nqc,nqc->n", b.W, e0v, e0v)
        e0n = (np.einsum("nmqi,ni->nmq", b.phi_k_e, e0[:, :nk]) * b.normals[..., 0:1]
               + np.einsum("nmqi,ni->nmq", b.phi_k_e, e0[:, nk:]) * b.normals[..., 1:2])
        d = e0n - np.einsum("ql,nml->nmq", b.psi, eb)
        bnd = np.einsum("nmq,nmq->n", b.We, d * d)
        total += float((vol + b.h * bnd).sum())
    return math.sqrt(total)


def multiplier_norm_error(mesh, spec, sol, k=None):
    """sqrt(sum_T h_T |lambda_h - Q_b u|^2 over the interior edges of T)."""
    k = sol.k if k is None else k
    ed = error_degrees(k)[1]
    d = project_edges(mesh, spec.exact_u, k, ed) - sol.lam
    G = edge_reference_mass(k)
    per_edge = np.einsum("ei,ij,ej->e", d, G, d) * mesh.edge_lengths
    per_edge[mesh.boundary_flags] = 0.0
    # each interior edge weighted by the diameters of both neighbours
    hsum = np.zeros(mesh.n_edges)
    ec = mesh.edge_cells
    hsum += mesh.diameters[ec[:, 0]]
    inner = ec[:, 1] >= 0
    hsum[inner] += mesh.diameters[ec[inner, 1]]
    return math.sqrt(float((hsum * per_edge).sum()))


def _scalar_errors(mesh, spec, sol, k):
    """Per-batch eps = Q_h u - u_h data: (grad^2 sum, L2^2 sum, traces per slot)."""
    grad2 = 0.0
    l2 = 0.0
    traces = None
    weights = None
    for b in _batches(mesh, k):
        eps = b.project_scalar(spec.exact_u, k + 1) - sol.u[b.cells]
        val = np.einsum("nqi,ni->nq", b.phi_1, eps)
        g = np.einsum("nqic,ni->nqc", b.grad_1, eps)
        l2 += float(np.einsum("nq,nq,nq->", b.W, val, val))
        grad2 += float(np.einsum("nq,nqc,nqc->", b.W, g, g))
        tr = np.einsum("nmqi,ni->nmq", b.phi_1_e, eps)
        if traces is None:
            traces = np.zeros((len(mesh.cell_edge_indices), tr.shape[-1]))
            weights = np.zeros_like(traces)
        traces[b.slots.ravel()] = tr.reshape(-1, tr.shape[-1])
        weights[b.slots.ravel()] = b.We.reshape(-1, tr.shape[-1])
    return grad2, l2, traces, weights


def h1_norm_error(mesh, spec, sol, k=None, boundary_jumps=True, h=None):
    """Broken H1 norm of eps = Q_h u - u_h with an h^{-1} weighted jump term.

    Interior jumps are trace differences; on boundary edges the one-sided trace
    is used unless ``boundary_jumps`` is False.  ``h`` defaults to
    ``mesh.mesh_size``.
    """
    k = sol.k if k is None else k
    grad2, _, tr, w = _scalar_errors(mesh, spec, sol, k)
    slots = edge_slots(mesh)
    inner = slots[:, 1] >= 0
    jump = tr[slots[:, 0]].copy()
    jump[inner] -= tr[slots[inner, 1]]
    if not boundary_jumps:
        jump[~inner] = 0.0
    j2 = float(np.einsum("eq,eq,eq->", w[slots[:, 0]], jump, jump))
    h = mesh.mesh_size if h is None else h
    return math.sqrt(grad2 + j2 / h)


def l2_norm_error(mesh, spec, sol, k=None):
    k = sol.k if k is None else k
    _, l2, _, _ = _scalar_errors(mesh, spec, sol, k)
    return math.sqrt(l2)


def compute_errors(mesh, spec, sol, h=None):
    """All four reported norms; ``h`` is the reported mesh size (default ``mesh.mesh_size``)."""
    h = mesh.mesh_size if h is None else h
    return ErrorReport(
        h=h,
        triple_e=triple_norm_error(mesh, spec, sol),
        delta=multiplier_norm_error(mesh, spec, sol),
        eps_h1=h1_norm_error(mesh, spec, sol, h=h),
        eps_l2=l2_norm_error(mesh, spec, sol),
        n_cells=mesh.n_cells,
    )


def rates(errors):
    """Observed orders ln(e_{i-1}/e_i) / ln(h_{i-1}/h_i); the first entry is None."""
    out = [None]
    pairs = list(errors)
    for (h0, v0), (h1, v1) in zip(pairs, pairs[1:]):
        if v0 == v1:
            out.append(0.0)
        elif v0 <= 0 or v1 <= 0:
            out.append(float("nan"))
        else:
            out.append(math.log(v0 / v1) / math.log(h0 / h1))
    return out


def attach_rates(reports):
    """Fill ``rates`` on a sequence of ErrorReports in place and return it."""
    for name in ErrorReport.NORMS:
        r = rates([(rep.h, getattr(rep, name)) for rep in reports])
        for rep, val in zip(reports, r):
            rep.rates[name] = val
    return reports
