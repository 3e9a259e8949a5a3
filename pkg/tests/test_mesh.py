import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spbvem.mesh import (MeshError, PolygonalMesh, build_mesh, check_regularity, domain_area,
                         generate_composite_hanging, generate_distorted_hex, generate_nonconvex,
                         generate_structured, generate_voronoi, interior_angles, kernel_inradius,
                         polygon_geometry, read_mesh, write_mesh)

L_PENTAGON = [(0, 0), (1, 0), (1, 1), (0.5, 1), (0.5, 0.5), (0, 0.5)]

pytestmark = pytest.mark.property


def test_geometry_closed_forms():
    area, cen, diam = polygon_geometry([(0, 0), (1, 0), (1, 1), (0, 1)])
    assert area == pytest.approx(1.0) and np.allclose(cen, 0.5) and diam == pytest.approx(math.sqrt(2))
    area, cen, diam = polygon_geometry([(0, 0), (1, 0), (0, 1)])
    assert area == pytest.approx(0.5) and np.allclose(cen, 1 / 3) and diam == pytest.approx(math.sqrt(2))


def test_l_pentagon_area_against_triangle_sum():
    # independent oracle: split along the reflex vertex into two rectangles
    area, cen, _ = polygon_geometry(L_PENTAGON)
    assert area == pytest.approx(0.5 * 1.0 + 0.5 * 0.5, abs=1e-15)
    expected = (0.5 * np.array([0.5, 0.25]) + 0.25 * np.array([0.75, 0.75])) / 0.75
    assert np.allclose(cen, expected, atol=1e-15)


def test_degenerate_and_clockwise_rejected():
    with pytest.raises(MeshError):
        polygon_geometry([(0, 0), (1, 0), (2, 0)])
    with pytest.raises(MeshError):
        polygon_geometry([(0, 0), (0, 1), (1, 1), (1, 0)])


def test_structured_counts():
    m = generate_structured("square", 5)
    assert (m.n_cells, m.n_vertices) == (25, 36)
    assert m.h == pytest.approx(math.sqrt(2) / 5)
    assert generate_structured("lshape", 4).n_cells == 12
    one = generate_structured("square", 1)
    assert one.n_cells == 1 and one.h == pytest.approx(math.sqrt(2))
    with pytest.raises(MeshError):
        generate_structured("square", 0)


def test_distorted_hex_deterministic_and_regular():
    a = generate_distorted_hex(5, 0.2, seed=42)
    b = generate_distorted_hex(5, 0.2, seed=42)
    assert a.same_as(b) and a.to_json() == b.to_json()
    rep = check_regularity(generate_distorted_hex(10, 0.2, seed=0), 0.1)
    # clipped boundary hexagons keep short edges; only star-shapedness is guaranteed
    assert rep.delta0_star_shaped >= 0.1 and rep.delta0_edge > 0


def test_undistorted_hex_interior_cells_congruent():
    m = generate_distorted_hex(5, 0.0)
    bverts = set(m.boundary_vertices.tolist())
    interior = [e for e, c in enumerate(m.cells) if not bverts.intersection(c)]
    assert interior
    areas = m.areas[interior]
    assert np.allclose(areas, areas[0], rtol=1e-12)
    assert all(len(m.cells[e]) == 6 for e in interior)


def test_distortion_bounds():
    with pytest.raises(MeshError):
        generate_distorted_hex(5, 0.5)


def test_nonconvex_one_reflex_vertex_each():
    m = generate_nonconvex(5)
    assert m.n_cells == 50
    for e in range(m.n_cells):
        assert (interior_angles(m.cell_coords(e)) > math.pi + 1e-9).sum() == 1
    # the two chevrons of one grid cell tile it
    assert m.areas[0] + m.areas[1] == pytest.approx(1 / 25, rel=1e-13)


def test_voronoi_trivial_configurations():
    one = generate_voronoi("square", 1, points=[[0.5, 0.5]], lloyd_iters=0)
    assert one.n_cells == 1 and one.areas[0] == pytest.approx(1.0)
    pts = [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]]
    four = generate_voronoi("square", 2, points=pts, lloyd_iters=0)
    assert four.n_cells == 4 and np.allclose(four.areas, 0.25)


def test_voronoi_lshape_area_spread():
    m = generate_voronoi("lshape", 8, lloyd_iters=5, seed=0)
    m.validate(0.75)
    assert m.areas.max() / m.areas.min() <= 4.0
    for e in range(m.n_cells):
        assert np.all(interior_angles(m.cell_coords(e)) <= math.pi + 1e-9)


def test_composite_hanging_nodes():
    m = generate_composite_hanging(2, 4)
    m.validate(1.0)
    coarse_interface = [c for c, poly in zip(m.cells, m.polygons) if poly.centroid[0] < 0.5
                        and np.isclose(m.vertices[list(c)][:, 0].max(), 0.5)]
    assert coarse_interface and all(len(c) == 5 for c in coarse_interface)
    with pytest.raises(MeshError):
        generate_composite_hanging(3, 4)


def test_composite_edge_adjacency_brute_force():
    m = generate_composite_hanging(5, 10, coarse_kind="nonconvex")
    # every geometric segment on x = 0.5 is listed by exactly one cell on each side
    seg = {}
    for e, c in enumerate(m.cells):
        xy = m.vertices[list(c)]
        for i in range(len(c)):
            a, b = xy[i], xy[(i + 1) % len(c)]
            if np.isclose(a[0], 0.5) and np.isclose(b[0], 0.5):
                key = tuple(sorted((round(a[1], 12), round(b[1], 12))))
                seg.setdefault(key, []).append(m.polygons[e].centroid[0] < 0.5)
    assert seg and all(sorted(v) == [False, True] for v in seg.values())
    for j, cells in enumerate(m.edge_cells):
        assert len(cells) in (1, 2)


def test_regularity_closed_forms():
    sq = PolygonalMesh(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float), [(0, 1, 2, 3)])
    rep = check_regularity(sq, 0.1)
    assert rep.delta0_star_shaped == pytest.approx(0.5 / math.sqrt(2), abs=1e-9)
    assert rep.delta0_edge == pytest.approx(1 / math.sqrt(2))


def _kernel_radius_brute(coords, n=121):
    """Largest disc inside the kernel, searched on a grid of candidate centres."""
    xy = np.asarray(coords, float)
    d = np.roll(xy, -1, axis=0) - xy
    nrm = np.column_stack([d[:, 1], -d[:, 0]]) / np.hypot(d[:, 0], d[:, 1])[:, None]
    off = (nrm * xy).sum(1)
    gx, gy = np.meshgrid(np.linspace(xy[:, 0].min(), xy[:, 0].max(), n),
                         np.linspace(xy[:, 1].min(), xy[:, 1].max(), n))
    c = np.column_stack([gx.ravel(), gy.ravel()])
    slack = off[None, :] - c @ nrm.T
    return max(0.0, slack.min(axis=1).max())


def test_chevron_kernel_against_grid_oracle():
    m = generate_nonconvex(5)
    coords = m.cell_coords(0)
    r = kernel_inradius(coords)
    assert r > 0
    brute = _kernel_radius_brute(coords, 301)
    assert brute <= r + 1e-12
    assert r - brute < 2e-3 * m.diameters[0]


def test_empty_kernel_reports_zero():
    # a comb with two deep notches has an empty kernel
    comb = [(0, 0), (3, 0), (3, 3), (2.5, 3), (2.5, 0.2), (1.5, 0.2), (1.5, 3), (1.3, 3), (1.3, 0.2),
            (0.2, 0.2), (0.2, 3), (0, 3)]
    assert kernel_inradius(comb) == pytest.approx(0.0, abs=1e-12)


def test_json_round_trip(tmp_path):
    m = generate_composite_hanging(2, 4, coarse_kind="nonconvex")
    write_mesh(m, tmp_path / "m.json")
    assert read_mesh(tmp_path / "m.json").same_as(m)


def test_build_mesh_merges_and_orients():
    verts = [(0, 0), (1, 0), (1, 1), (0, 1), (1 + 1e-13, 0), (2, 0), (2, 1), (1, 1)]
    m = build_mesh(verts, [[0, 3, 2, 1], [4, 5, 6, 7]])
    assert m.n_vertices == 6
    m.validate(2.0)
    assert len(m.boundary_edges) == 6


MESHES = st.sampled_from(["structured", "lshape", "nonconvex", "hex", "composite", "voronoi", "lvoronoi"])


def _make(kind, N, seed):
    if kind == "structured":
        return generate_structured("square", N), 1.0
    if kind == "lshape":
        return generate_structured("lshape", 2 * N), 0.75
    if kind == "nonconvex":
        return generate_nonconvex(N + 1), 1.0
    if kind == "hex":
        return generate_distorted_hex(N, 0.2, seed), 1.0
    if kind == "composite":
        return generate_composite_hanging(N, 2 * N, coarse_kind="nonconvex"), 1.0
    if kind == "voronoi":
        return generate_voronoi("square", N + 1, 3, seed), 1.0
    return generate_voronoi("lshape", 2 * N, 3, seed), 0.75


@settings(max_examples=25, deadline=None)
@given(kind=MESHES, N=st.integers(1, 6), seed=st.integers(0, 2**31))
def test_mesh_invariants(kind, N, seed):
    m, area = _make(kind, N, seed)
    m.validate(area)
    assert np.all(m.areas > 0)
    assert m.areas.sum() == pytest.approx(area, rel=1e-10)
    nb = sum(len(c) == 1 for c in m.edge_cells)
    assert nb == len(m.boundary_edges)
    # the boundary length equals the domain perimeter
    perim = sum(np.linalg.norm(m.vertices[a] - m.vertices[b]) for a, b in m.boundary_edges)
    assert perim == pytest.approx(4.0, rel=1e-10)
    again, _ = _make(kind, N, seed)
    assert again.to_json() == m.to_json()


def test_domain_area():
    assert domain_area("lshape") == 0.75 and domain_area("square") == 1.0
