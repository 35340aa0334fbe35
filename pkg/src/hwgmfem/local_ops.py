"""Element-local operators of the hybridized weak Galerkin mixed method.

Local unknown layout on a cell with ``m`` edges and order ``k``
(``nk = dim P_k``, ``n1 = dim P_{k+1}``)::

    flux  q = [q0_x (nk), q0_y (nk), qb edge 0 (k+1), ..., qb edge m-1 (k+1)]
    scalar u = P_{k+1} coefficients (n1)
    trace theta = [edge 0 (k+1), ..., edge m-1 (k+1)]

``qb`` on an edge is the scalar normal flux relative to the owning cell's
outward normal.  Every edge polynomial uses the monomials (t - 1/2)^j in the
edge's canonical parameter t (lower vertex index at t = 0), so cells sharing
an edge share the same edge basis and only the normal sign differs.

Work is vectorized over batches of cells with equal vertex counts
(:class:`CellBatch`); the single-cell functions are thin wrappers over a
batch of one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import (
    dim_poly,
    edge_basis_values,
    edge_reference_mass,
    eval_monomial_grads,
    eval_monomials,
    fan_quadrature,
    gauss_legendre_01,
)
from .problems import check_alpha_spd


class LocalSolveError(RuntimeError):
    """A local saddle system could not be factorized."""


def default_degrees(k):
    """(cell, edge) quadrature exactness used by assembly."""
    return 2 * (k + 1) + 2, 2 * k + 2


def error_degrees(k):
    """Quadrature exactness for projections of exact solutions (two above default)."""
    c, e = default_degrees(k)
    return c + 2, e + 2


class CellBatch:
    """Geometry, quadrature and basis tables for cells with a common vertex count."""

    def __init__(self, mesh, cells, k, cell_degree=None, edge_degree=None):
        cells = np.asarray(cells, dtype=np.int64)
        sizes = {len(mesh.cells[c]) for c in cells}
        if len(sizes) != 1:
            raise ValueError("a CellBatch needs cells with equal vertex counts")
        cd, ed = default_degrees(k)
        self.mesh = mesh
        self.cells = cells
        self.k = int(k)
        self.m = sizes.pop()
        self.cell_degree = cd if cell_degree is None else int(cell_degree)
        self.edge_degree = ed if edge_degree is None else int(edge_degree)
        self.nk = dim_poly(k)
        self.n1 = dim_poly(k + 1)
        self.ke = k + 1
        self.n_flux = 2 * self.nk + self.m * self.ke
        self.n_trace = self.m * self.ke

        self.polys = mesh.cell_vertex_array(cells)
        self.centroids = mesh.centroids[cells]
        self.h = mesh.diameters[cells]
        self.areas = mesh.areas[cells]

        # cell quadrature and basis tables
        self.X, self.W = fan_quadrature(self.polys, self.centroids, self.cell_degree)
        Z = (self.X - self.centroids[:, None, :]) / self.h[:, None, None]
        self.phi_k = eval_monomials(Z, k)
        self.phi_1 = eval_monomials(Z, k + 1)
        self.grad_1 = eval_monomial_grads(Z, k + 1, self.h[:, None])

        # edges, in canonical orientation
        off = mesh.cell_edge_offsets[cells]
        self.slots = off[:, None] + np.arange(self.m)[None, :]
        self.edge_ids = mesh.cell_edge_indices[self.slots]
        self.signs = mesh.cell_edge_signs[self.slots]
        self.normals = mesh.edge_normals[self.edge_ids] * self.signs[..., None]
        self.lengths = mesh.edge_lengths[self.edge_ids]
        self.boundary = mesh.boundary_flags[self.edge_ids]
        v = mesh.vertices
        a = v[mesh.edges[self.edge_ids, 0]]
        b = v[mesh.edges[self.edge_ids, 1]]
        t, wt = gauss_legendre_01(self.edge_degree)
        self.t = t
        self.Xe = a[:, :, None, :] + t[None, None, :, None] * (b - a)[:, :, None, :]
        self.We = self.lengths[..., None] * wt[None, None, :]
        self.psi = edge_basis_values(t, k)  # (nqe, k+1)
        Ze = (self.Xe - self.centroids[:, None, None, :]) / self.h[:, None, None, None]
        self.phi_k_e = eval_monomials(Ze, k)
        self.phi_1_e = eval_monomials(Ze, k + 1)

    def __len__(self):
        return len(self.cells)

    # -- slicing helpers ------------------------------------------------------

    def qb_slice(self, j):
        s = 2 * self.nk + j * self.ke
        return slice(s, s + self.ke)

    # -- mass matrices and projections ----------------------------------------

    def mass(self, m):
        phi = self.phi_k if m == self.k else self.phi_1 if m == self.k + 1 else None
        if phi is None:
            Z = (self.X - self.centroids[:, None, :]) / self.h[:, None, None]
            phi = eval_monomials(Z, m)
        return np.einsum("nq,nqi,nqj->nij", self.W, phi, phi)

    def edge_mass(self):
        """(n, m, k+1, k+1) edge mass matrices."""
        return self.lengths[..., None, None] * edge_reference_mass(self.k)

    def project_scalar(self, w, m):
        """L2 projection of callable ``w(x, y)`` onto P_m on every cell, (n, dim P_m)."""
        phi = self.phi_k if m == self.k else self.phi_1 if m == self.k + 1 else None
        if phi is None:
            Z = (self.X - self.centroids[:, None, :]) / self.h[:, None, None]
            phi = eval_monomials(Z, m)
        vals = np.asarray(w(self.X[..., 0], self.X[..., 1]), dtype=float)
        vals = np.broadcast_to(vals, self.W.shape)
        rhs = np.einsum("nq,nq,nqi->ni", self.W, vals, phi)
        M = np.einsum("nq,nqi,nqj->nij", self.W, phi, phi)
        return np.linalg.solve(M, rhs[..., None])[..., 0]

    def project_vector(self, v):
        """L2 projection of callable ``v(x, y) -> (..., 2)`` onto [P_k]^2, (n, 2 nk)."""
        vals = np.asarray(v(self.X[..., 0], self.X[..., 1]), dtype=float)
        vals = np.broadcast_to(vals, self.W.shape + (2,))
        rhs = np.einsum("nq,nqc,nqi->nci", self.W, vals, self.phi_k)
        M = self.mass(self.k)
        c = np.linalg.solve(M[:, None], rhs[..., None])[..., 0]
        return c.reshape(len(self), 2 * self.nk)

    def edge_project(self, w):
        """Project callable values on each local edge onto P_k(e), (n, m, k+1).

        ``w`` receives ``(x, y, normals)`` with normals the cell's outward normals
        broadcast to the quadrature points.
        """
        nrm = np.broadcast_to(self.normals[:, :, None, :], self.Xe.shape)
        vals = np.asarray(w(self.Xe[..., 0], self.Xe[..., 1], nrm), dtype=float)
        vals = np.broadcast_to(vals, self.We.shape)
        rhs = np.einsum("nmq,nmq,ql->nml", self.We, vals, self.psi)
        return np.linalg.solve(self.edge_mass(), rhs[..., None])[..., 0]

    def embed(self, p):
        """Weak-vector interpolant {Q0 p, Q_b(p.n)} of a smooth field, (n, n_flux)."""
        q0 = self.project_vector(p)
        qb = self.edge_project(lambda x, y, n: np.sum(np.asarray(p(x, y)) * n, axis=-1))
        return np.concatenate([q0, qb.reshape(len(self), -1)], axis=1)

    def field_values(self, x):
        """Values of local unknowns ``x`` (n, n_flux + n1) at the quadrature points, flattened per cell.

        Comparisons on values avoid the conditioning of the monomial coefficients.
        """
        nk, n = self.nk, len(self)
        q0x = np.einsum("nqi,ni->nq", self.phi_k, x[:, :nk])
        q0y = np.einsum("nqi,ni->nq", self.phi_k, x[:, nk:2 * nk])
        qb = np.einsum("ql,nml->nmq", self.psi, x[:, 2 * nk:self.n_flux].reshape(n, self.m, self.ke))
        u = np.einsum("nqi,ni->nq", self.phi_1, x[:, self.n_flux:])
        return np.concatenate([q0x, q0y, qb.reshape(n, -1), u], axis=1)

    # -- bilinear forms -------------------------------------------------------

    def form_a(self, spec):
        """(alpha r0, v0) on the q0 block, (n, 2 nk, 2 nk)."""
        xq, yq = self.X[..., 0], self.X[..., 1]
        check_alpha_spd(spec, xq, yq)
        al = spec.alpha_matrix(xq, yq)
        blk = np.einsum("nq,nqcd,nqi,nqj->ncidj", self.W, al, self.phi_k, self.phi_k)
        return blk.reshape(len(self), 2 * self.nk, 2 * self.nk)

    def trace_jump_operator(self):
        """Maps flux DOFs to (q0.n - qb) at edge quadrature points, (n, m, nqe, n_flux)."""
        n, m, nk = len(self), self.m, self.nk
        nqe = len(self.t)
        T = np.zeros((n, m, nqe, self.n_flux))
        T[..., :nk] = self.phi_k_e * self.normals[:, :, None, 0:1]
        T[..., nk:2 * nk] = self.phi_k_e * self.normals[:, :, None, 1:2]
        for j in range(m):
            T[:, j, :, self.qb_slice(j)] = -self.psi
        return T

    def stabilizer(self):
        """h_T <(r0 - rb).n, (v0 - vb).n> on the flux DOFs, (n, n_flux, n_flux)."""
        T = self.trace_jump_operator()
        S = np.einsum("nmq,nmqa,nmqb->nab", self.We, T, T)
        return self.h[:, None, None] * S

    def form_b(self):
        """b(v, w) = -(v0, grad w) + <vb, w>_{boundary}; rows w in P_{k+1}, (n, n1, n_flux)."""
        n, nk = len(self), self.nk
        B = np.zeros((n, self.n1, self.n_flux))
        vol = -np.einsum("nq,nqi,nqlc->nlci", self.W, self.phi_k, self.grad_1)
        B[:, :, :2 * nk] = vol.reshape(n, self.n1, 2 * nk)
        bnd = np.einsum("nmq,ql,nmqi->nmil", self.We, self.psi, self.phi_1_e)
        for j in range(self.m):
            B[:, :, self.qb_slice(j)] = bnd[:, j]
        return B

    def form_c(self):
        """<vb, sigma> coupling flux DOFs to trace DOFs, (n, n_flux, n_trace)."""
        G = self.edge_mass()
        C = np.zeros((len(self), self.n_flux, self.n_trace))
        for j in range(self.m):
            C[:, self.qb_slice(j), j * self.ke:(j + 1) * self.ke] = G[:, j]
        return C

    def load(self, f):
        """(f, w) for w in the P_{k+1} basis, (n, n1)."""
        vals = np.asarray(f(self.X[..., 0], self.X[..., 1]), dtype=float)
        vals = np.broadcast_to(vals, self.W.shape)
        return np.einsum("nq,nq,nqi->ni", self.W, vals, self.phi_1)

    def weak_divergence(self, v):
        """Discrete weak divergence of flux DOFs ``v`` (n, n_flux) in P_{k+1}, (n, n1)."""
        r = np.einsum("nla,na->nl", self.form_b(), v)
        return np.linalg.solve(self.mass(self.k + 1), r[..., None])[..., 0]


@dataclass
class LocalSystems:
    """Local saddle systems, liftings and Schur blocks for one :class:`CellBatch`.

    Attributes hold a leading batch axis.  ``lift`` maps trace DOFs to all
    local unknowns (flux then scalar); ``particular`` is the local solution
    for zero trace and the given source.
    """

    batch: CellBatch
    A_s: np.ndarray  # (n, nf, nf)  a + s
    B: np.ndarray  # (n, n1, nf)
    C: np.ndarray  # (n, nf, nt)
    F: np.ndarray  # (n, n1)
    saddle: np.ndarray  # (n, nf + n1, nf + n1)
    lift: np.ndarray  # (n, nf + n1, nt)
    particular: np.ndarray  # (n, nf + n1)
    schur: np.ndarray  # (n, nt, nt)
    schur_rhs: np.ndarray  # (n, nt)  (f, H_u phi)
    schur_rhs_trace: np.ndarray  # (n, nt)  C^T qb of the particular solution

    @property
    def lift_q(self):
        return self.lift[:, :self.batch.n_flux]

    @property
    def lift_q0(self):
        return self.lift[:, :2 * self.batch.nk]

    @property
    def lift_b(self):
        return self.lift[:, 2 * self.batch.nk:self.batch.n_flux]

    @property
    def lift_u(self):
        return self.lift[:, self.batch.n_flux:]

    def solve(self, theta):
        """Local unknowns for traces ``theta`` (n, nt) by direct local solves."""
        nf = self.batch.n_flux
        rhs = np.zeros(self.saddle.shape[:2])
        rhs[:, :nf] = -np.einsum("nat,nt->na", self.C, theta)
        rhs[:, nf:] = self.F
        return np.linalg.solve(self.saddle, rhs[..., None])[..., 0]

    def recover(self, theta):
        """Local unknowns for traces ``theta`` through the lifting."""
        return np.einsum("nat,nt->na", self.lift, theta) + self.particular


def build_local_systems(batch, spec):
    """Assemble and solve the local problems for every cell of ``batch``."""
    n, nf, n1, nt = len(batch), batch.n_flux, batch.n1, batch.n_trace
    A_s = batch.stabilizer()
    A_s[:, :2 * batch.nk, :2 * batch.nk] += batch.form_a(spec)
    B = batch.form_b()
    C = batch.form_c()
    F = batch.load(spec.f)
    K = np.zeros((n, nf + n1, nf + n1))
    K[:, :nf, :nf] = A_s
    K[:, :nf, nf:] = -np.swapaxes(B, 1, 2)
    K[:, nf:, :nf] = B
    rhs = np.zeros((n, nf + n1, nt + 1))
    rhs[:, :nf, :nt] = -C
    rhs[:, nf:, nt] = F
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        bad = [int(batch.cells[i]) for i in range(n) if _is_singular(K[i])]
        raise LocalSolveError(f"singular local saddle system on cells {bad[:10]}") from None
    lift = sol[..., :nt]
    part = sol[..., nt]
    Hq = lift[:, :nf]
    S = np.einsum("nai,nab,nbj->nij", Hq, A_s, Hq)
    rhs_u = np.einsum("nli,nl->ni", lift[:, nf:], F)
    rhs_c = np.einsum("nat,na->nt", C, part[:, :nf])
    return LocalSystems(batch, A_s, B, C, F, K, lift, part, S, rhs_u, rhs_c)


def _is_singular(A):
    try:
        return np.linalg.cond(A) > 1e14
    except np.linalg.LinAlgError:
        return True


# -- single-cell API ------------------------------------------------------------

@dataclass(frozen=True)
class WeakVector:
    """Discrete weak vector on one cell: q0 over [P_k]^2 and per-edge normal fluxes."""

    q0: np.ndarray  # (2 nk,)
    qb: np.ndarray  # (m, k+1)

    def to_array(self):
        return np.concatenate([self.q0, self.qb.ravel()])

    @classmethod
    def from_array(cls, a, k, m):
        nk2 = 2 * dim_poly(k)
        a = np.asarray(a, dtype=float)
        if a.shape != (nk2 + m * (k + 1),):
            raise ValueError(f"expected {nk2 + m * (k + 1)} coefficients, got {a.shape}")
        return cls(a[:nk2].copy(), a[nk2:].reshape(m, k + 1).copy())


@dataclass(frozen=True)
class LocalSystem:
    """Local system of a single cell (views into a batch of one)."""

    cell: int
    k: int
    saddle: np.ndarray
    A_s: np.ndarray
    B: np.ndarray
    C: np.ndarray
    lift_q0: np.ndarray
    lift_b: np.ndarray
    lift_u: np.ndarray
    schur: np.ndarray
    load: np.ndarray  # (f, phi_l) moments
    particular: np.ndarray
    schur_rhs: np.ndarray

    @property
    def lift(self):
        return np.vstack([self.lift_q0, self.lift_b, self.lift_u])


# single-cell helpers are diagnostics; they integrate smooth data accurately
DIAGNOSTIC_DEGREE = 20


def _diag_degree(degree):
    return DIAGNOSTIC_DEGREE if degree is None else int(degree)


def _single(mesh, cell, k, cell_degree=None, edge_degree=None):
    return CellBatch(mesh, [cell], k, cell_degree, edge_degree)


def project_cell_scalar(mesh, cell, w, m, degree=None):
    """L2 projection of ``w`` onto P_m(T) in the scaled monomial basis."""
    d = _diag_degree(degree)
    b = _single(mesh, cell, max(m - 1, 0), d, d)
    return b.project_scalar(w, m)[0]


def project_cell_vector(mesh, cell, v, k, degree=None):
    d = _diag_degree(degree)
    return _single(mesh, cell, k, d, d).project_vector(v)[0]


def project_edge(mesh, edge, w, k, degree=None):
    """L2 projection of ``w(x, y)`` onto P_k(e) in the canonical edge basis."""
    return project_edges(mesh, w, k, _diag_degree(degree), edges=[edge])[0]


def project_edges(mesh, w, k, degree=None, edges=None):
    """Edge projections for many global edges at once, (len(edges), k+1).

    ``degree`` defaults to the solver's edge quadrature degree.
    """
    if degree is None:
        degree = default_degrees(k)[1]
    edges = np.arange(mesh.n_edges) if edges is None else np.asarray(edges, dtype=np.int64)
    v = mesh.vertices
    a = v[mesh.edges[edges, 0]]
    b = v[mesh.edges[edges, 1]]
    t, wt = gauss_legendre_01(degree)
    X = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    vals = np.broadcast_to(np.asarray(w(X[..., 0], X[..., 1]), dtype=float), X.shape[:2])
    psi = edge_basis_values(t, k)
    L = mesh.edge_lengths[edges]
    rhs = np.einsum("q,eq,ql->el", wt, vals, psi) * L[:, None]
    G = edge_reference_mass(k)
    return np.linalg.solve(G, rhs.T).T / L[:, None]


def embed(mesh, cell, p, k, degree=None):
    d = _diag_degree(degree)
    b = _single(mesh, cell, k, d, d)
    return WeakVector.from_array(b.embed(p)[0], k, b.m)


def weak_divergence(mesh, cell, v, k):
    """P_{k+1} coefficients of the discrete weak divergence of ``v`` (a WeakVector)."""
    b = _single(mesh, cell, k)
    arr = v.to_array() if isinstance(v, WeakVector) else np.asarray(v, dtype=float)
    return b.weak_divergence(arr[None])[0]


def stabilizer_matrix(mesh, cell, k):
    return _single(mesh, cell, k).stabilizer()[0]


def form_a(mesh, cell, spec, k):
    return _single(mesh, cell, k).form_a(spec)[0]


def form_b(mesh, cell, k):
    return _single(mesh, cell, k).form_b()[0]


def form_c(mesh, cell, k):
    return _single(mesh, cell, k).form_c()[0]


def build_local_system(mesh, cell, spec, k):
    ls = build_local_systems(_single(mesh, cell, k), spec)
    return LocalSystem(
        cell=int(cell), k=int(k), saddle=ls.saddle[0], A_s=ls.A_s[0], B=ls.B[0], C=ls.C[0],
        lift_q0=ls.lift_q0[0], lift_b=ls.lift_b[0], lift_u=ls.lift_u[0], schur=ls.schur[0],
        load=ls.F[0], particular=ls.particular[0], schur_rhs=ls.schur_rhs[0],
    )
