"""Non-hybridized weak Galerkin mixed scheme with single-valued boundary fluxes.

Used as an independent check of the hybridized solver: it has its own DOF
numbering and element loops and shares only bases and quadrature with the
rest of the package.  The divergence form is built from the explicit
discrete weak divergence, not from the integration-by-parts identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .basis import (
    CellBasis,
    cell_quadrature,
    dim_poly,
    edge_basis_values,
    gauss_legendre_01,
)
from .local_ops import default_degrees

MAX_DOFS = 20_000


class DofCapError(ValueError):
    pass


@dataclass
class CoupledSolution:
    k: int
    q0: np.ndarray  # (nc, 2 nk)
    qe: np.ndarray  # (ne, k+1) normal flux w.r.t. the canonical edge normal
    u: np.ndarray  # (nc, n1)

    def cell_qb(self, mesh, c):
        ids, signs = mesh.cell_edges(c)
        return self.qe[ids] * signs[:, None]


def coupled_dofs(mesh, k):
    nk, n1 = dim_poly(k), dim_poly(k + 1)
    return mesh.n_cells * (2 * nk + n1) + mesh.n_edges * (k + 1)


def _cell_matrices(mesh, c, spec, k):
    """Stiffness blocks of one cell in local flux ordering [q0x, q0y, qb_e0, ...]."""
    cd, ed = default_degrees(k)
    loop = list(mesh.cells[c])
    verts = mesh.vertices[loop]
    basis = CellBasis(k, mesh.centroids[c], float(mesh.diameters[c]))
    hT = float(mesh.diameters[c])
    nk, n1, ke = dim_poly(k), dim_poly(k + 1), k + 1
    ids, signs = mesh.cell_edges(c)
    m = len(loop)
    nf = 2 * nk + m * ke

    rule = cell_quadrature(verts, cd, centroid=mesh.centroids[c])
    a = np.zeros((nf, nf))
    r_div = np.zeros((n1, nf))  # weak-divergence moments
    mass1 = np.zeros((n1, n1))
    load = np.zeros(n1)
    for x, w in zip(rule.points, rule.weights):
        pk = basis.values(x, k)
        p1 = basis.values(x, k + 1)
        g1 = basis.grads(x, k + 1)
        al = spec.alpha_matrix(np.array(x[0]), np.array(x[1]))
        for ci in range(2):
            for di in range(2):
                a[ci * nk:(ci + 1) * nk, di * nk:(di + 1) * nk] += w * al[ci, di] * np.outer(pk, pk)
            r_div[:, ci * nk:(ci + 1) * nk] -= w * np.outer(g1[:, ci], pk)
        mass1 += w * np.outer(p1, p1)
        load += w * float(spec.f(x[0], x[1])) * p1

    t, wt = gauss_legendre_01(ed)
    psi = edge_basis_values(t, k)
    s = np.zeros((nf, nf))
    for j in range(m):
        e = int(ids[j])
        p0, p1_ = mesh.vertices[mesh.edges[e, 0]], mesh.vertices[mesh.edges[e, 1]]
        length = float(mesh.edge_lengths[e])
        normal = mesh.edge_normals[e] * signs[j]
        col = slice(2 * nk + j * ke, 2 * nk + (j + 1) * ke)
        for tq, wq, ps in zip(t, wt, psi):
            x = p0 + tq * (p1_ - p0)
            w = wq * length
            pk = basis.values(x, k)
            row = np.zeros(nf)
            row[:nk] = pk * normal[0]
            row[nk:2 * nk] = pk * normal[1]
            row[col] = -ps
            s += hT * w * np.outer(row, row)
            r_div[:, col] += w * np.outer(basis.values(x, k + 1), ps)
    # explicit weak divergence: mass1 d = r_div v, then b(v, w) = (d, w)
    div = np.linalg.solve(mass1, r_div)
    b = mass1 @ div
    return a + s, b, load


def solve_coupled(mesh, spec, k=0, max_dofs=MAX_DOFS):
    """Solve the coupled saddle system densely; returns a :class:`CoupledSolution`."""
    total = coupled_dofs(mesh, k)
    if total > max_dofs:
        raise DofCapError(f"coupled system has {total} DOFs, above the cap of {max_dofs}")
    nk, n1, ke = dim_poly(k), dim_poly(k + 1), k + 1
    nc, ne = mesh.n_cells, mesh.n_edges
    nq = nc * 2 * nk + ne * ke
    K = np.zeros((total, total))
    rhs = np.zeros(total)
    t, wt = gauss_legendre_01(default_degrees(k)[1])
    psi = edge_basis_values(t, k)
    for c in range(nc):
        As, b, load = _cell_matrices(mesh, c, spec, k)
        ids, signs = mesh.cell_edges(c)
        # local flux DOF -> (global DOF, sign)
        gq = [c * 2 * nk + i for i in range(2 * nk)]
        sg = [1.0] * (2 * nk)
        for j, e in enumerate(ids):
            for l in range(ke):
                gq.append(nc * 2 * nk + int(e) * ke + l)
                sg.append(float(signs[j]))
        gq = np.array(gq)
        sg = np.array(sg)
        gu = nq + c * n1 + np.arange(n1)
        K[np.ix_(gq, gq)] += As * np.outer(sg, sg)
        K[np.ix_(gq, gu)] -= (b * sg).T
        K[np.ix_(gu, gq)] += b * sg
        rhs[gu] += load
        for j, e in enumerate(ids):
            if not mesh.boundary_flags[e]:
                continue
            p0, p1 = mesh.vertices[mesh.edges[e, 0]], mesh.vertices[mesh.edges[e, 1]]
            x = p0[None, :] + t[:, None] * (p1 - p0)[None, :]
            gv = np.asarray(spec.g(x[:, 0], x[:, 1]), dtype=float)
            mom = (wt * gv) @ psi * mesh.edge_lengths[e]
            rhs[nc * 2 * nk + int(e) * ke + np.arange(ke)] -= signs[j] * mom
    try:
        lu = sla.lu_factor(K, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise np.linalg.LinAlgError(f"coupled system factorization failed: {exc}") from None
    if np.any(np.abs(np.diag(lu[0])) < 1e-14 * np.abs(K).max()):
        raise np.linalg.LinAlgError("coupled system is singular")
    x = sla.lu_solve(lu, rhs)
    q0 = x[:nc * 2 * nk].reshape(nc, 2 * nk)
    qe = x[nc * 2 * nk:nq].reshape(ne, ke)
    u = x[nq:].reshape(nc, n1)
    return CoupledSolution(k, q0, qe, u)


@dataclass
class EquivalenceReport:
    q0: float
    u: float
    qb: float
    qb_single_valued: float

    @property
    def worst(self):
        return max(self.q0, self.u, self.qb, self.qb_single_valued)

    def passed(self, tol=1e-9):
        return self.worst <= tol


def _rel(a, b):
    scale = max(float(np.abs(b).max(initial=0.0)), 1e-300)
    return float(np.abs(a - b).max(initial=0.0)) / scale


def compare_hybrid_vs_coupled(mesh, spec, k=0, hybrid=None, max_dofs=MAX_DOFS):
    """Max relative coefficient discrepancies between the two formulations."""
    from .hybrid_solver import edge_slots, solve_hwg

    ref = solve_coupled(mesh, spec, k, max_dofs)
    hyb = hybrid if hybrid is not None else solve_hwg(mesh, spec, k)
    slots = edge_slots(mesh)
    inner = slots[:, 1] >= 0
    pair = hyb.qb[slots[inner, 0]] + hyb.qb[slots[inner, 1]]
    scale = max(float(np.abs(hyb.qb).max(initial=0.0)), 1e-300)
    single = float(np.abs(pair).max(initial=0.0)) / scale
    ref_qb = ref.qe[mesh.cell_edge_indices] * mesh.cell_edge_signs[:, None]
    return EquivalenceReport(
        q0=_rel(hyb.q0, ref.q0),
        u=_rel(hyb.u, ref.u),
        qb=_rel(hyb.qb, ref_qb),
        qb_single_valued=single,
    )
