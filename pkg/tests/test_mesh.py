import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hwgmfem import (
    MeshError,
    PolygonalMesh,
    gen_quad_family,
    gen_rectangular,
    gen_triangular,
    read_mesh,
    refine_quad_barycentric,
    write_mesh,
)


def _interior_edges_brute(mesh):
    count = {}
    for loop in mesh.cells:
        for a, b in zip(loop, loop[1:] + loop[:1]):
            key = (min(a, b), max(a, b))
            count[key] = count.get(key, 0) + 1
    return sum(1 for v in count.values() if v == 2), len(count)


def _cell_set(mesh, digits=12):
    out = set()
    for loop in mesh.cells:
        pts = np.round(mesh.vertices[list(loop)], digits)
        out.add(tuple(sorted(map(tuple, pts.tolist()))))
    return out


@pytest.mark.parametrize("n, nv, ne, nc", [(1, 4, 5, 2), (4, 25, 56, 32)])
def test_triangular_counts(n, nv, ne, nc):
    m = gen_triangular(n)
    assert (m.n_vertices, m.n_edges, m.n_cells) == (nv, ne, nc)
    assert m.n_edges == 2 * n * (n + 1) + n * n


def test_triangular_interior_edges_n2():
    m = gen_triangular(2)
    inner, total = _interior_edges_brute(m)
    assert (inner, total) == (8, 16)
    assert m.n_interior_edges == 8


def test_triangular_diagonal_has_negative_slope():
    m = gen_triangular(3)
    for e in range(m.n_edges):
        d = m.vertices[m.edges[e, 1]] - m.vertices[m.edges[e, 0]]
        if abs(d[0]) > 1e-14 and abs(d[1]) > 1e-14:
            assert d[0] * d[1] < 0


@pytest.mark.parametrize("n, nc, ne, ni", [(1, 1, 4, 0), (2, 4, 12, 4)])
def test_rectangular_counts(n, nc, ne, ni):
    m = gen_rectangular(n)
    assert (m.n_cells, m.n_edges, m.n_interior_edges) == (nc, ne, ni)


def test_rectangular_diameters():
    np.testing.assert_allclose(gen_rectangular(4).diameters, math.sqrt(2) / 4, rtol=0, atol=1e-15)


@pytest.mark.parametrize("n", [1, 3, 8])
def test_triangular_diameters(n):
    np.testing.assert_allclose(gen_triangular(n).diameters, math.sqrt(2) / n, rtol=0, atol=1e-15)


def test_nominal_mesh_size():
    assert gen_triangular(8).mesh_size == 1 / 8
    assert gen_rectangular(4).mesh_size == 1 / 4
    quad = gen_quad_family(2, 2, 0.1)[-1]
    assert quad.mesh_size == quad.h


@pytest.mark.parametrize("bad", [0, -1, 2.5, True])
def test_generators_reject_bad_n(bad):
    with pytest.raises(ValueError):
        gen_triangular(bad)
    with pytest.raises(ValueError):
        gen_rectangular(bad)


def test_refine_unit_square(unit_square):
    r = refine_quad_barycentric(unit_square)
    assert (r.n_cells, r.n_edges, r.n_vertices) == (4, 12, 9)


def test_refine_twice_gives_uniform_squares(unit_square):
    r = refine_quad_barycentric(refine_quad_barycentric(unit_square))
    assert r.n_cells == 16
    np.testing.assert_allclose(r.areas, 1 / 16, atol=1e-15)
    assert _cell_set(r) == _cell_set(gen_rectangular(4))


def test_refine_rejects_triangles():
    with pytest.raises(MeshError):
        refine_quad_barycentric(gen_triangular(1))


def test_quad_family_unperturbed_matches_rectangular():
    fam = gen_quad_family(2, 3, rho=0.0)
    for level, m in enumerate(fam):
        assert _cell_set(m) == _cell_set(gen_rectangular(2 * 2 ** level))


def test_quad_family_properties():
    fam = gen_quad_family(4, 4, 0.2)
    assert [m.n_cells for m in fam] == [16, 64, 256, 1024]
    assert np.all(fam[0].areas > 0)
    assert all(len(loop) == 4 for loop in fam[0].cells)
    for a, b in zip(fam, fam[1:]):
        assert abs(b.h / a.h - 0.5) <= 0.05
        assert abs(b.areas.sum() - a.areas.sum()) <= 1e-12


def test_quad_family_seeded():
    a = gen_quad_family(3, 2, 0.2, seed=7)
    b = gen_quad_family(3, 2, 0.2, seed=7)
    assert all(x == y for x, y in zip(a, b))
    with pytest.raises(ValueError):
        gen_quad_family(3, 2, 0.5)


MESHES = [gen_triangular(3), gen_rectangular(3), gen_quad_family(3, 2, 0.25)[-1]]


@pytest.mark.parametrize("mesh", MESHES)
def test_generated_invariants(mesh):
    assert mesh.n_vertices - mesh.n_edges + mesh.n_cells == 1
    assert mesh.euler_characteristic == 1
    assert abs(mesh.areas.sum() - 1.0) <= 1e-12
    np.testing.assert_allclose(np.linalg.norm(mesh.edge_normals, axis=1), 1.0, atol=1e-14)
    # opposite outward normals across every interior edge
    inner = mesh.edge_cells[:, 1] >= 0
    assert np.all(mesh.edge_cells[~inner, 0] >= 0)
    signs = {}
    for c in range(mesh.n_cells):
        ids, sg = mesh.cell_edges(c)
        for e, s in zip(ids, sg):
            signs.setdefault(int(e), []).append(s)
    for e in np.flatnonzero(inner):
        s1, s2 = signs[int(e)]
        np.testing.assert_allclose(s1 * mesh.edge_normals[e], -s2 * mesh.edge_normals[e], atol=1e-14)


@pytest.mark.parametrize("mesh", MESHES)
def test_geometry_fields(mesh):
    for c in range(mesh.n_cells):
        pts = mesh.vertices[list(mesh.cells[c])]
        x, y = pts[:, 0], pts[:, 1]
        area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        assert abs(area - mesh.areas[c]) <= 1e-15
        diam = max(np.linalg.norm(p - q) for p in pts for q in pts)
        assert abs(diam - mesh.diameters[c]) <= 1e-15


def test_round_trip():
    m = gen_triangular(1)
    assert read_mesh(write_mesh(m)) == m
    q = gen_quad_family(2, 2, 0.2)[-1]
    assert read_mesh(write_mesh(q)) == q


def test_read_index_out_of_range():
    text = "hwg-mesh 1\nvertices 4\n0 0\n1 0\n1 1\n0 1\ncells 1\n4 0 1 2 99\n"
    with pytest.raises(MeshError, match="index out of range") as info:
        read_mesh(text)
    assert info.value.line == 8


@pytest.mark.parametrize("text, fragment", [
    ("hwg mesh\n", "header"),
    ("hwg-mesh 1\nvertices 3\n0 0\n1 0\n2 0\ncells 1\n3 0 1 2\n", "area"),
    ("hwg-mesh 1\nvertices 3\n0 0\n1 0\n0 1\ncells 1\n3 0 1 2\nextra\n", "trailing"),
    ("hwg-mesh 1\nvertices 3\n0 0\n1 0\n", "end of file"),
])
def test_read_malformed(text, fragment):
    with pytest.raises(MeshError, match=fragment):
        read_mesh(text)


def test_clockwise_cell_reoriented(caplog):
    text = "hwg-mesh 1\nvertices 4\n0 0\n1 0\n1 1\n0 1\ncells 1\n4 0 3 2 1\n"
    with caplog.at_level(logging.WARNING):
        m = read_mesh(text)
    assert m.cells[0] == (1, 2, 3, 0)
    assert m.areas[0] == pytest.approx(1.0)
    assert "reoriented" in caplog.text


def test_clockwise_rejected_without_reorient():
    with pytest.raises(MeshError):
        PolygonalMesh([[0, 0], [0, 1], [1, 0]], [[0, 1, 2]])


def test_non_star_shaped_rejected():
    # arrow-shaped cell whose centroid lies outside the kernel
    verts = [[0, 0], [4, 0], [4, 4], [3.9, 0.1], [0.1, 0.1]]
    with pytest.raises(MeshError):
        PolygonalMesh(verts, [[0, 1, 2, 3, 4]])


def test_arrays_are_read_only():
    m = gen_triangular(2)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 1.0


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 6), kind=st.sampled_from(["tri", "rect"]))
def test_edge_cell_incidence(n, kind):
    m = (gen_triangular if kind == "tri" else gen_rectangular)(n)
    inner, total = _interior_edges_brute(m)
    assert total == m.n_edges
    assert inner == m.n_interior_edges
    assert m.n_vertices - m.n_edges + m.n_cells == 1
