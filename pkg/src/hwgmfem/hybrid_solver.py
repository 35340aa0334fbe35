"""Global multiplier system: Schur assembly, Dirichlet elimination, solve, recovery."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .basis import dim_poly, edge_basis_values, edge_reference_mass, gauss_legendre_01
from .local_ops import CellBatch, build_local_systems, project_edges

logger = logging.getLogger(__name__)

DIRECT_LIMIT = 200_000
CHUNK = 4096


class NumericalError(RuntimeError):
    """Failure of a global solve or of a post-solve consistency check."""


@dataclass
class SchurSystem:
    k: int
    n_edges: int
    free: np.ndarray  # global DOF ids of free (interior-edge) multipliers
    constrained: np.ndarray  # global DOF ids on boundary edges
    matrix: sp.csr_matrix  # free x free
    rhs: np.ndarray  # free, after elimination
    constrained_values: np.ndarray  # Q_b g on constrained DOFs
    full_matrix: sp.csr_matrix  # all DOFs, before elimination
    full_rhs: np.ndarray  # (f, H_u phi) on all DOFs
    full_rhs_trace: np.ndarray  # same right side through the particular traces
    locals: list = field(default_factory=list, repr=False)

    def dof(self, edge, mode):
        """Global multiplier DOF of (edge, mode)."""
        return edge * (self.k + 1) + mode

    @property
    def n_dofs(self):
        return self.n_edges * (self.k + 1)

    @property
    def n_free(self):
        return len(self.free)

    @property
    def rhs_route_gap(self):
        """Max discrepancy between the two assembled right sides, relative to their size."""
        scale = max(np.abs(self.full_rhs).max(initial=0.0), 1e-300)
        return float(np.abs(self.full_rhs - self.full_rhs_trace).max(initial=0.0) / scale)


@dataclass
class WGSolution:
    """Discrete solution. ``qb`` is indexed by (cell, local edge) slot, see
    :attr:`PolygonalMesh.cell_edge_offsets`; edge polynomials use the canonical
    edge basis and ``qb`` the owning cell's outward normal."""

    k: int
    q0: np.ndarray  # (nc, 2 nk)
    qb: np.ndarray  # (n_slots, k+1)
    u: np.ndarray  # (nc, n1)
    lam: np.ndarray  # (ne, k+1)
    diagnostics: dict = field(default_factory=dict)

    def cell_qb(self, mesh, c):
        off = mesh.cell_edge_offsets
        return self.qb[off[c]:off[c + 1]]


def _chunks(mesh, k, cell_degree=None, edge_degree=None):
    out = []
    for _, cells in sorted(mesh.cell_groups().items()):
        for s in range(0, len(cells), CHUNK):
            out.append((cells[s:s + CHUNK], k, cell_degree, edge_degree))
    return out


def _map(fn, items, threads):
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def build_all_local(mesh, spec, k, threads=1):
    """Local systems for every cell, in a fixed chunk order."""

    def work(item):
        cells, kk, cd, ed = item
        return build_local_systems(CellBatch(mesh, cells, kk, cd, ed), spec)

    return _map(work, _chunks(mesh, k), threads)


def _trace_dofs(ls):
    b = ls.batch
    return (b.edge_ids[:, :, None] * b.ke + np.arange(b.ke)).reshape(len(b), -1)


def assemble_schur(mesh, spec, k, threads=1, local_systems=None):
    """Assemble the reduced multiplier system and eliminate boundary DOFs."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    locs = local_systems if local_systems is not None else build_all_local(mesh, spec, k, threads)
    ke = k + 1
    nd = mesh.n_edges * ke
    rows, cols, vals = [], [], []
    rhs = np.zeros(nd)
    rhs_t = np.zeros(nd)
    for ls in locs:
        dofs = _trace_dofs(ls)
        nt = dofs.shape[1]
        S = 0.5 * (ls.schur + np.swapaxes(ls.schur, 1, 2))
        rows.append(np.repeat(dofs, nt, axis=1).ravel())
        cols.append(np.tile(dofs, (1, nt)).ravel())
        vals.append(S.ravel())
        rhs += np.bincount(dofs.ravel(), weights=ls.schur_rhs.ravel(), minlength=nd)
        rhs_t += np.bincount(dofs.ravel(), weights=ls.schur_rhs_trace.ravel(), minlength=nd)
    full = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(nd, nd)).tocsr()
    full.sum_duplicates()

    bnd_edges = np.nonzero(mesh.boundary_flags)[0]
    int_edges = np.nonzero(~mesh.boundary_flags)[0]
    constrained = (bnd_edges[:, None] * ke + np.arange(ke)).ravel()
    free = (int_edges[:, None] * ke + np.arange(ke)).ravel()
    lam_c = project_edges(mesh, spec.g, k, edges=bnd_edges).ravel()
    S_ff = full[free][:, free].tocsr()
    S_fc = full[free][:, constrained].tocsr()
    rhs_free = rhs[free] - S_fc @ lam_c
    return SchurSystem(k, mesh.n_edges, free, constrained, S_ff, rhs_free, lam_c,
                       full, rhs, rhs_t, locs)


@dataclass
class SolveInfo:
    method: str
    n_free: int
    residual: float
    iterations: int = 0
    positive_pivots: bool = True
    min_pivot: float = float("nan")


def spd_factorize(A):
    """Sparse LU with symmetric diagonal pivoting; returns (lu, positive_pivots, min_pivot).

    With diagonal pivoting the factorization is P A P^T = L U, and for a
    symmetric matrix positive pivots on U are equivalent to positive
    definiteness.
    """
    lu = spla.splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                   options={"SymmetricMode": True})
    piv = lu.U.diagonal()
    ok = bool(np.all(piv > 0) and np.array_equal(lu.perm_r, lu.perm_c))
    return lu, ok, float(piv.min()) if piv.size else float("nan")


def solve_schur(system, direct_limit=DIRECT_LIMIT):
    """Solve for the multiplier on every edge; returns ((ne, k+1) array, SolveInfo)."""
    ke = system.k + 1
    lam = np.zeros(system.n_dofs)
    lam[system.constrained] = system.constrained_values
    n = system.n_free
    if n == 0:
        return lam.reshape(-1, ke), SolveInfo("none", 0, 0.0)
    A, b = system.matrix, system.rhs
    if n <= direct_limit:
        lu, ok, pmin = spd_factorize(A)
        if not ok:
            raise NumericalError(f"Schur matrix is not positive definite (min pivot {pmin:.3e})")
        x = lu.solve(b)
        info = SolveInfo("splu", n, 0.0, 0, ok, pmin)
    else:
        d = A.diagonal()
        if np.any(d <= 0):
            raise NumericalError("Schur matrix has a nonpositive diagonal entry")
        M = sp.diags(1.0 / d)
        its = [0]

        def cb(_):
            its[0] += 1

        x, flag = spla.cg(A, b, rtol=1e-12, atol=0.0, maxiter=10 * n, M=M, callback=cb)
        if flag != 0:
            raise NumericalError(f"conjugate gradients did not converge (flag {flag}, {its[0]} its)")
        info = SolveInfo("cg", n, 0.0, its[0])
    bn = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    info.residual = float(r / bn) if bn > 0 else float(r)
    if info.residual > 1e-10:
        raise NumericalError(f"Schur solve residual {info.residual:.3e} exceeds 1e-10")
    lam[system.free] = x
    return lam.reshape(-1, ke), info


def recover_local(mesh, spec, k, lam, local_systems=None, threads=1, check=True):
    """Back-substitute the multiplier into every local problem."""
    locs = local_systems if local_systems is not None else build_all_local(mesh, spec, k, threads)
    nk, n1 = dim_poly(k), dim_poly(k + 1)
    nc = mesh.n_cells
    q0 = np.zeros((nc, 2 * nk))
    u = np.zeros((nc, n1))
    qb = np.zeros((len(mesh.cell_edge_indices), k + 1))
    gap = 0.0
    cons = 0.0
    lam_flat = np.asarray(lam).ravel()
    for ls in locs:
        b = ls.batch
        theta = lam_flat[_trace_dofs(ls)]
        sol = ls.recover(theta)
        if check:
            va = b.field_values(sol)
            vd = b.field_values(ls.solve(theta))
            scale = max(np.abs(va).max(initial=0.0), 1.0)
            gap = max(gap, float(np.abs(va - vd).max(initial=0.0) / scale))
            res = np.einsum("nla,na->nl", ls.B, sol[:, :b.n_flux]) - ls.F
            fscale = 1.0 + np.abs(ls.F).max(axis=1)
            cons = max(cons, float((np.abs(res).max(axis=1) / fscale).max(initial=0.0)))
        q0[b.cells] = sol[:, :2 * nk]
        qb[b.slots.ravel()] = sol[:, 2 * nk:b.n_flux].reshape(-1, k + 1)
        u[b.cells] = sol[:, b.n_flux:]
    diag = {}
    if check:
        diag["recovery_route_gap"] = gap
        diag["conservation_residual"] = cons
        if gap > 1e-11:
            raise NumericalError(f"lifting and direct local recovery differ by {gap:.3e}")
        if cons > 1e-10:
            raise NumericalError(f"local conservation residual {cons:.3e} exceeds 1e-10")
    return WGSolution(k, q0, qb, u, np.asarray(lam).reshape(-1, k + 1).copy(), diag)


def flux_jumps(mesh, sol):
    """Edge L2 norms of q_b^{T1} + q_b^{T2} on every interior edge, (n_interior,)."""
    k = sol.k
    slots = edge_slots(mesh)
    inner = slots[:, 1] >= 0
    s = sol.qb[slots[inner, 0]] + sol.qb[slots[inner, 1]]
    G = edge_reference_mass(k)
    L = mesh.edge_lengths[inner]
    return np.sqrt(np.maximum(np.einsum("ei,ij,ej->e", s, G, s) * L, 0.0))


def edge_slots(mesh):
    """(ne, 2) (cell, local edge) slot ids adjacent to each edge; -1 when absent."""
    out = -np.ones((mesh.n_edges, 2), dtype=np.int64)
    for s, e in enumerate(mesh.cell_edge_indices):
        out[e, 0 if out[e, 0] < 0 else 1] = s
    return out


def solve_hwg(mesh, spec, k=0, threads=1, check=True, direct_limit=DIRECT_LIMIT):
    """Full hybridized pipeline: local systems, Schur solve, recovery."""
    t0 = time.perf_counter()
    locs = build_all_local(mesh, spec, k, threads)
    system = assemble_schur(mesh, spec, k, local_systems=locs)
    lam, info = solve_schur(system, direct_limit)
    sol = recover_local(mesh, spec, k, lam, local_systems=locs, check=check)
    if check and mesh.n_interior_edges:
        jump = float(flux_jumps(mesh, sol).max())
        sol.diagnostics["flux_jump"] = jump
        scale = 1.0 + float(np.abs(sol.qb).max())
        if jump > 1e-10 * scale:
            raise NumericalError(f"normal flux jump {jump:.3e} on an interior edge")
    sol.diagnostics.update(
        solver=info.method,
        n_free=info.n_free,
        n_dofs=system.n_dofs,
        residual=info.residual,
        iterations=info.iterations,
        min_pivot=info.min_pivot,
        rhs_route_gap=system.rhs_route_gap,
        wall_time=time.perf_counter() - t0,
    )
    return sol


def boundary_flux(mesh, sol):
    """Sum of <q_b, 1> over boundary edges (total outflow)."""
    slots = edge_slots(mesh)
    bnd = slots[:, 1] < 0
    t, w = gauss_legendre_01(2 * sol.k)
    m0 = edge_basis_values(t, sol.k).T @ w  # integrals of edge monomials on [0, 1]
    return float((sol.qb[slots[bnd, 0]] @ m0 * mesh.edge_lengths[bnd]).sum())
