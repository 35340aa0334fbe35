"""Polygonal meshes on 2D domains.

Cells are stored as counterclockwise vertex loops.  Edges are derived once,
globally, with a canonical orientation (lower vertex index first); every
per-cell quantity that depends on orientation (outward normals, flux signs)
is obtained from the sign of that canonical edge as seen by the cell.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

_AREA_TOL = 1e-14


class MeshError(ValueError):
    """Invalid mesh input or topology."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class CellGeometry:
    centroid: np.ndarray
    diameter: float
    area: float
    normals: np.ndarray  # (m, 2) outward unit normals, one per local edge
    lengths: np.ndarray  # (m,)
    midpoints: np.ndarray  # (m, 2)


def _signed_area(pts):
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class PolygonalMesh:
    """Immutable polygonal mesh with derived edge topology.

    Parameters
    ----------
    vertices : array_like, shape (nv, 2)
    cells : sequence of sequences of int
        Counterclockwise vertex loops.  Clockwise loops raise unless
        ``reorient=True``, in which case they are reversed with a warning.
    mesh_size : float, optional
        Nominal mesh size reported in error tables (1/n for the uniform
        generators).  Defaults to the largest cell diameter.
    """

    def __init__(self, vertices, cells, reorient=False, mesh_size=None):
        verts = np.asarray(vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2:
            raise MeshError("vertices must have shape (nv, 2)")
        nv = len(verts)
        loops = []
        for ci, cell in enumerate(cells):
            loop = [int(i) for i in cell]
            if len(loop) < 3:
                raise MeshError(f"cell {ci} has fewer than 3 vertices")
            if len(set(loop)) != len(loop):
                raise MeshError(f"cell {ci} repeats a vertex")
            for i in loop:
                if i < 0 or i >= nv:
                    raise MeshError(f"cell {ci}: vertex index {i} out of range (nv={nv})")
            area = _signed_area(verts[loop])
            if area < 0 and reorient:
                logger.warning("cell %d is clockwise; reoriented counterclockwise", ci)
                loop = loop[::-1]
                area = -area
            if area <= 0:
                raise MeshError(f"cell {ci} has nonpositive area {area:.3e}")
            loops.append(tuple(loop))
        if not loops:
            raise MeshError("mesh has no cells")

        self._vertices = _frozen(verts)
        self._cells = tuple(loops)
        self._mesh_size = None if mesh_size is None else float(mesh_size)
        self._build_topology()
        self._build_geometry()
        self._check_invariants()

    # -- construction ---------------------------------------------------------

    def _build_topology(self):
        edge_index = {}
        edges = []
        edge_cells = []
        cell_edges = []
        cell_signs = []
        for ci, loop in enumerate(self._cells):
            m = len(loop)
            ids, signs = [], []
            for j in range(m):
                a, b = loop[j], loop[(j + 1) % m]
                key = (a, b) if a < b else (b, a)
                e = edge_index.get(key)
                if e is None:
                    e = len(edges)
                    edge_index[key] = e
                    edges.append(key)
                    edge_cells.append([ci, -1])
                else:
                    if edge_cells[e][1] != -1:
                        raise MeshError(f"edge {key} shared by more than two cells")
                    edge_cells[e][1] = ci
                ids.append(e)
                # +1 when the cell traverses the edge in canonical direction
                signs.append(1 if a < b else -1)
            cell_edges.append(ids)
            cell_signs.append(signs)

        self._edges = _frozen(np.array(edges, dtype=np.int64))
        self._edge_cells = _frozen(np.array(edge_cells, dtype=np.int64))
        self._boundary = _frozen(self._edge_cells[:, 1] < 0)
        sizes = np.array([len(c) for c in self._cells], dtype=np.int64)
        offsets = np.zeros(len(sizes) + 1, dtype=np.int64)
        np.cumsum(sizes, out=offsets[1:])
        self._cell_sizes = _frozen(sizes)
        self._offsets = _frozen(offsets)
        self._cell_edge_flat = _frozen(np.concatenate([np.asarray(c) for c in cell_edges]))
        self._cell_sign_flat = _frozen(np.concatenate([np.asarray(s, dtype=float) for s in cell_signs]))
        # same-direction traversal by both neighbours means one loop is inverted
        for e, (c0, c1) in enumerate(self._edge_cells):
            if c1 < 0:
                continue
            s0 = self._local_sign(c0, e)
            s1 = self._local_sign(c1, e)
            if s0 == s1:
                raise MeshError(f"cells {c0} and {c1} traverse edge {e} in the same direction")

    def _local_sign(self, c, e):
        lo, hi = self._offsets[c], self._offsets[c + 1]
        j = int(np.nonzero(self._cell_edge_flat[lo:hi] == e)[0][0])
        return self._cell_sign_flat[lo + j]

    def _build_geometry(self):
        v = self._vertices
        a, b = v[self._edges[:, 0]], v[self._edges[:, 1]]
        d = b - a
        length = np.hypot(d[:, 0], d[:, 1])
        if np.any(length <= 0):
            raise MeshError("zero-length edge")
        self._edge_lengths = _frozen(length)
        self._edge_midpoints = _frozen(0.5 * (a + b))
        # canonical normal: tangent rotated clockwise
        self._edge_normals = _frozen(np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None])

        nc = len(self._cells)
        areas = np.empty(nc)
        centroids = np.empty((nc, 2))
        diam = np.empty(nc)
        for ci, loop in enumerate(self._cells):
            p = v[list(loop)]
            q = np.roll(p, -1, axis=0)
            cross = p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]
            area = 0.5 * cross.sum()
            areas[ci] = area
            centroids[ci] = ((p + q) * cross[:, None]).sum(axis=0) / (6.0 * area)
            diff = p[:, None, :] - p[None, :, :]
            diam[ci] = math.sqrt(float((diff ** 2).sum(axis=-1).max()))
        self._areas = _frozen(areas)
        self._centroids = _frozen(centroids)
        self._diameters = _frozen(diam)

    def _check_invariants(self):
        nv_used = len(np.unique(np.concatenate([np.asarray(c) for c in self._cells])))
        # star-shapedness w.r.t. centroid: every fan triangle has positive area
        v = self._vertices
        for ci, loop in enumerate(self._cells):
            p = v[list(loop)] - self._centroids[ci]
            q = np.roll(p, -1, axis=0)
            fan = 0.5 * (p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1])
            if np.any(fan <= _AREA_TOL * self._diameters[ci] ** 2):
                raise MeshError(f"cell {ci} is not star-shaped with respect to its centroid")
        self._euler = nv_used - len(self._edges) + len(self._cells)

    # -- public attributes ----------------------------------------------------

    @property
    def vertices(self):
        return self._vertices

    @property
    def cells(self):
        return self._cells

    @property
    def edges(self):
        return self._edges

    @property
    def edge_cells(self):
        """(ne, 2) adjacent cells; second entry is -1 on boundary edges."""
        return self._edge_cells

    @property
    def boundary_flags(self):
        return self._boundary

    @property
    def n_vertices(self):
        return len(self._vertices)

    @property
    def n_cells(self):
        return len(self._cells)

    @property
    def n_edges(self):
        return len(self._edges)

    @property
    def n_interior_edges(self):
        return int((~self._boundary).sum())

    @property
    def euler_characteristic(self):
        return self._euler

    @property
    def areas(self):
        return self._areas

    @property
    def centroids(self):
        return self._centroids

    @property
    def diameters(self):
        return self._diameters

    @property
    def h(self):
        """Mesh size, the largest cell diameter."""
        return float(self._diameters.max())

    @property
    def mesh_size(self):
        """Nominal mesh size if one was given, else :attr:`h`."""
        return self.h if self._mesh_size is None else self._mesh_size

    @property
    def edge_lengths(self):
        return self._edge_lengths

    @property
    def edge_normals(self):
        """Unit normals for the canonical edge orientation."""
        return self._edge_normals

    @property
    def edge_midpoints(self):
        return self._edge_midpoints

    @property
    def cell_edge_offsets(self):
        """CSR offsets into the flattened (cell, local edge) slot arrays."""
        return self._offsets

    @property
    def cell_edge_indices(self):
        return self._cell_edge_flat

    @property
    def cell_edge_signs(self):
        """+1 where the cell's outward normal equals the canonical normal, else -1."""
        return self._cell_sign_flat

    def cell_edges(self, c):
        """Return (edge indices, orientation signs) for cell ``c`` in loop order."""
        lo, hi = self._offsets[c], self._offsets[c + 1]
        return self._cell_edge_flat[lo:hi], self._cell_sign_flat[lo:hi]

    def cell_geometry(self, c):
        ids, signs = self.cell_edges(c)
        return CellGeometry(
            centroid=self._centroids[c].copy(),
            diameter=float(self._diameters[c]),
            area=float(self._areas[c]),
            normals=self._edge_normals[ids] * signs[:, None],
            lengths=self._edge_lengths[ids].copy(),
            midpoints=self._edge_midpoints[ids].copy(),
        )

    def cell_groups(self):
        """Map vertex count -> array of cell indices having that many vertices."""
        groups = {}
        for m in np.unique(self._cell_sizes):
            groups[int(m)] = np.nonzero(self._cell_sizes == m)[0]
        return groups

    def cell_vertex_array(self, cells):
        """Stack the vertex coordinates of equal-size cells, shape (n, m, 2)."""
        loops = np.array([self._cells[c] for c in cells], dtype=np.int64)
        return self._vertices[loops]

    def __eq__(self, other):
        if not isinstance(other, PolygonalMesh):
            return NotImplemented
        return np.array_equal(self._vertices, other._vertices) and self._cells == other._cells

    def __repr__(self):
        return (f"PolygonalMesh(n_vertices={self.n_vertices}, n_edges={self.n_edges}, "
                f"n_cells={self.n_cells})")


# -- generators ---------------------------------------------------------------

def _check_n(n, name="n"):
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValueError(f"{name} must be a positive integer, got {n!r}")
    return int(n)


def _grid_vertices(n):
    t = np.arange(n + 1) / n
    xx, yy = np.meshgrid(t, t)  # row index = j (y), column = i (x)
    return np.column_stack([xx.ravel(), yy.ravel()])


def gen_triangular(n):
    """Unit square, n x n squares each cut by the negative-slope diagonal."""
    n = _check_n(n)
    verts = _grid_vertices(n)

    def vid(i, j):
        return j * (n + 1) + i

    cells = []
    for j in range(n):
        for i in range(n):
            v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            # diagonal from (i+1, j) to (i, j+1)
            cells.append((v00, v10, v01))
            cells.append((v10, v11, v01))
    return PolygonalMesh(verts, cells, mesh_size=1.0 / n)


def gen_rectangular(n):
    """Unit square split into n x n axis-aligned squares of side 1/n."""
    n = _check_n(n)
    verts = _grid_vertices(n)
    cells = []
    for j in range(n):
        for i in range(n):
            v00 = j * (n + 1) + i
            cells.append((v00, v00 + 1, v00 + n + 2, v00 + n + 1))
    return PolygonalMesh(verts, cells, mesh_size=1.0 / n)


def refine_quad_barycentric(mesh):
    """Split each quadrilateral into four by joining its barycenter to edge midpoints.

    The barycenter is the vertex average.  Edge midpoints are shared between
    neighbouring cells, so the refined mesh is conforming.
    """
    for ci, loop in enumerate(mesh.cells):
        if len(loop) != 4:
            raise MeshError(f"cell {ci} is not a quadrilateral ({len(loop)} vertices)")
    v = mesh.vertices
    nv, ne = mesh.n_vertices, mesh.n_edges
    mids = 0.5 * (v[mesh.edges[:, 0]] + v[mesh.edges[:, 1]])
    centers = np.array([v[list(loop)].mean(axis=0) for loop in mesh.cells])
    new_verts = np.vstack([v, mids, centers])
    cells = []
    for ci, loop in enumerate(mesh.cells):
        eids, _ = mesh.cell_edges(ci)
        c = nv + ne + ci
        for j in range(4):
            # corner j is shared by local edges j-1 (incoming) and j (outgoing)
            m_in = nv + int(eids[(j - 1) % 4])
            m_out = nv + int(eids[j])
            cells.append((loop[j], m_out, c, m_in))
    return PolygonalMesh(new_verts, cells)


def gen_quad_family(n0, levels, rho=0.2, seed=20140901):
    """Perturbed quadrilateral meshes refined by barycentric splitting.

    Level 0 is an ``n0 x n0`` square mesh whose interior vertices are moved by
    up to ``rho / n0`` in each coordinate (uniform, fixed seed).  Every further
    level is :func:`refine_quad_barycentric` of the previous one.
    """
    n0 = _check_n(n0, "n0")
    levels = _check_n(levels, "levels")
    if not 0.0 <= rho <= 0.3:
        raise ValueError(f"rho must lie in [0, 0.3], got {rho}")
    base = gen_rectangular(n0)
    verts = np.array(base.vertices)
    rng = np.random.default_rng(seed)
    shift = rng.uniform(-1.0, 1.0, size=verts.shape) * (rho / n0)
    interior = (verts[:, 0] > 0) & (verts[:, 0] < 1) & (verts[:, 1] > 0) & (verts[:, 1] < 1)
    verts[interior] += shift[interior]
    mesh = PolygonalMesh(verts, base.cells)
    family = [mesh]
    for _ in range(levels - 1):
        mesh = refine_quad_barycentric(mesh)
        family.append(mesh)
    return family


def generate(kind, n=None, n0=None, levels=1, rho=0.2):
    """Mesh families by name: ``tri``, ``rect`` (single n) or ``quad`` (list)."""
    if kind == "tri":
        return gen_triangular(n)
    if kind == "rect":
        return gen_rectangular(n)
    if kind == "quad":
        return gen_quad_family(n0, levels, rho)
    raise ValueError(f"unknown mesh kind {kind!r}")


# -- text format --------------------------------------------------------------

MESH_HEADER = "hwg-mesh 1"


def write_mesh(mesh):
    lines = [MESH_HEADER, f"vertices {mesh.n_vertices}"]
    lines.extend(f"{x!r} {y!r}" for x, y in mesh.vertices.tolist())
    lines.append(f"cells {mesh.n_cells}")
    lines.extend(" ".join(str(i) for i in (len(c),) + tuple(c)) for c in mesh.cells)
    return "\n".join(lines) + "\n"


def read_mesh(text):
    """Parse the line-oriented mesh format; clockwise cells are reoriented."""
    rows = []
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((no, line))
    it = iter(rows)

    def take(what):
        try:
            return next(it)
        except StopIteration:
            raise MeshError(f"unexpected end of file while reading {what}") from None

    no, line = take("header")
    if line.split() != MESH_HEADER.split():
        raise MeshError(f"malformed header {line!r}, expected {MESH_HEADER!r}", no)

    def count(keyword):
        no, line = take(keyword)
        parts = line.split()
        if len(parts) != 2 or parts[0] != keyword:
            raise MeshError(f"malformed header, expected '{keyword} <count>'", no)
        try:
            val = int(parts[1])
        except ValueError:
            raise MeshError(f"malformed header, bad count {parts[1]!r}", no) from None
        if val < 0:
            raise MeshError("negative count", no)
        return val

    nv = count("vertices")
    verts = []
    for _ in range(nv):
        no, line = take("vertices")
        parts = line.split()
        if len(parts) != 2:
            raise MeshError("vertex line needs two coordinates", no)
        try:
            verts.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise MeshError(f"bad coordinate in {line!r}", no) from None
    nc = count("cells")
    cells = []
    cell_lines = []
    for _ in range(nc):
        no, line = take("cells")
        try:
            parts = [int(p) for p in line.split()]
        except ValueError:
            raise MeshError(f"bad integer in {line!r}", no) from None
        if len(parts) < 4 or parts[0] != len(parts) - 1:
            raise MeshError("cell line must be 'm i0 ... i{m-1}' with m >= 3", no)
        for i in parts[1:]:
            if i < 0 or i >= nv:
                raise MeshError(f"index out of range: vertex {i} of {nv}", no)
        loop = parts[1:]
        area = _signed_area(np.array([verts[i] for i in loop]))
        if area == 0 or not math.isfinite(area):
            raise MeshError("nonpositive cell area", no)
        cells.append(loop)
        cell_lines.append(no)
    extra = next(it, None)
    if extra is not None:
        raise MeshError("trailing content after cells", extra[0])
    try:
        return PolygonalMesh(verts, cells, reorient=True)
    except MeshError as exc:
        # map "cell <i>" diagnostics back to their source line
        msg = str(exc)
        if msg.startswith("cell "):
            idx = int(msg.split()[1])
            raise MeshError(msg, cell_lines[idx]) from None
        raise
