"""Polygonal meshes: representation, generators, regularity audit, JSON I/O.

Cells are stored as counter-clockwise vertex-index tuples. A vertex lying in
the interior of a neighbour's geometric side is inserted into that neighbour
as an extra (collinear) vertex, so hanging nodes become ordinary edges.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.spatial import Delaunay, QhullError, cKDTree

AREA_TOL = 1e-14
MERGE_TOL = 1e-10


class MeshError(ValueError):
    """Raised for degenerate or inconsistent mesh input."""


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise MeshError(f"non-finite point ({self.x}, {self.y})")


def polygon_geometry(coords) -> tuple[float, np.ndarray, float]:
    """Area, centroid and diameter of a simple counter-clockwise polygon."""
    xy = np.asarray(coords, dtype=float)
    origin = xy[0]
    # shoelace sums relative to the first vertex avoid cancellation for small far-away cells
    x, y = xy[:, 0] - origin[0], xy[:, 1] - origin[1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    if area <= AREA_TOL:
        raise MeshError(f"degenerate or clockwise polygon (signed area {area:.3e})")
    cx = ((x + xn) * cross).sum() / (6.0 * area) + origin[0]
    cy = ((y + yn) * cross).sum() / (6.0 * area) + origin[1]
    diff = xy[:, None, :] - xy[None, :, :]
    diam = float(np.sqrt((diff**2).sum(-1)).max())
    return float(area), np.array([cx, cy]), diam


def signed_area(coords) -> float:
    xy = np.asarray(coords, dtype=float) - np.asarray(coords, dtype=float)[0]
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * float((x * np.roll(y, -1) - np.roll(x, -1) * y).sum())


@dataclass(frozen=True)
class Polygon:
    vertex_ids: tuple[int, ...]
    area: float
    centroid: np.ndarray
    diameter: float


@dataclass(frozen=True, eq=False)
class PolygonalMesh:
    vertices: np.ndarray
    cells: tuple[tuple[int, ...], ...]
    boundary_tags: dict = field(default_factory=dict)

    def __post_init__(self):
        verts = np.ascontiguousarray(self.vertices, dtype=float)
        verts.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "cells", tuple(tuple(int(i) for i in c) for c in self.cells))
        if not self.boundary_tags:
            tags = {e: "dirichlet" for e in self.boundary_edges}
            object.__setattr__(self, "boundary_tags", tags)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @cached_property
    def polygons(self) -> list[Polygon]:
        out = []
        for e, cell in enumerate(self.cells):
            try:
                area, cen, diam = polygon_geometry(self.vertices[list(cell)])
            except MeshError as exc:
                raise MeshError(f"element {e}: {exc}") from None
            out.append(Polygon(cell, area, cen, diam))
        return out

    @cached_property
    def areas(self) -> np.ndarray:
        return np.array([p.area for p in self.polygons])

    @cached_property
    def diameters(self) -> np.ndarray:
        return np.array([p.diameter for p in self.polygons])

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @cached_property
    def _edge_data(self):
        index: dict[tuple[int, int], int] = {}
        cells_of: list[list[int]] = []
        for e, cell in enumerate(self.cells):
            n = len(cell)
            for i in range(n):
                a, b = cell[i], cell[(i + 1) % n]
                key = (a, b) if a < b else (b, a)
                j = index.setdefault(key, len(index))
                if j == len(cells_of):
                    cells_of.append([])
                cells_of[j].append(e)
        edges = np.array(list(index.keys()), dtype=int).reshape(-1, 2)
        return index, edges, cells_of

    @property
    def edge_index(self) -> dict[tuple[int, int], int]:
        return self._edge_data[0]

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted vertex pairs, numbered by first appearance."""
        return self._edge_data[1]

    @property
    def edge_cells(self) -> list[list[int]]:
        return self._edge_data[2]

    @cached_property
    def boundary_edges(self) -> list[tuple[int, int]]:
        return [tuple(map(int, self.edges[j])) for j, c in enumerate(self.edge_cells) if len(c) == 1]

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(np.array(self.boundary_edges, dtype=int).ravel())

    def cell_coords(self, e: int) -> np.ndarray:
        return self.vertices[list(self.cells[e])]

    def validate(self, domain_area: float | None = None) -> None:
        """Check the structural invariants; raises MeshError on the first violation."""
        used = np.zeros(self.n_vertices, dtype=bool)
        for c in self.cells:
            if len(c) < 3:
                raise MeshError(f"cell {c} has fewer than 3 vertices")
            used[list(c)] = True
        if not used.all():
            raise MeshError(f"{(~used).sum()} dangling vertices")
        for j, c in enumerate(self.edge_cells):
            if len(c) > 2:
                raise MeshError(f"edge {tuple(self.edges[j])} shared by {len(c)} cells")
        _ = self.polygons
        if domain_area is not None:
            total = self.areas.sum()
            if abs(total - domain_area) > 1e-10 * domain_area:
                raise MeshError(f"areas sum to {total!r}, expected {domain_area!r}")

    def same_as(self, other: "PolygonalMesh") -> bool:
        return (
            self.vertices.shape == other.vertices.shape
            and bool(np.array_equal(self.vertices, other.vertices))
            and self.cells == other.cells
            and self.boundary_tags == other.boundary_tags
        )

    def to_json(self) -> str:
        payload = {
            "vertices": self.vertices.tolist(),
            "cells": [list(c) for c in self.cells],
            "boundary_tags": [[a, b, t] for (a, b), t in sorted(self.boundary_tags.items())],
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "PolygonalMesh":
        data = json.loads(text)
        tags = {(int(a), int(b)): str(t) for a, b, t in data.get("boundary_tags", [])}
        return cls(np.array(data["vertices"], dtype=float).reshape(-1, 2), data["cells"], tags)


def write_mesh(mesh: PolygonalMesh, path) -> None:
    Path(path).write_text(mesh.to_json())


def read_mesh(path) -> PolygonalMesh:
    return PolygonalMesh.from_json(Path(path).read_text())


# ----------------------------------------------------------------------------
# cleanup shared by all generators
# ----------------------------------------------------------------------------


def _merge_vertices(vertices: np.ndarray, tol: float) -> np.ndarray:
    """Map each vertex to the smallest index within ``tol`` of it (transitively)."""
    tree = cKDTree(vertices)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    n = len(vertices)
    if len(pairs) == 0:
        return np.arange(n)
    g = sp.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = sp.csgraph.connected_components(g, directed=False)
    rep = np.full(labels.max() + 1, n)
    np.minimum.at(rep, labels, np.arange(n))
    return rep[labels]


def _insert_hanging(vertices: np.ndarray, cells: list[list[int]], tol: float) -> list[list[int]]:
    tree = cKDTree(vertices)
    out = []
    for cell in cells:
        new = []
        n = len(cell)
        for i in range(n):
            a, b = cell[i], cell[(i + 1) % n]
            new.append(a)
            pa, pb = vertices[a], vertices[b]
            d = pb - pa
            length = math.hypot(*d)
            cand = tree.query_ball_point(0.5 * (pa + pb), 0.5 * length + tol)
            found = []
            for c in cand:
                if c == a or c == b:
                    continue
                r = vertices[c] - pa
                t = (r @ d) / length**2
                dist = abs(d[0] * r[1] - d[1] * r[0]) / length
                if tol / length < t < 1 - tol / length and dist < tol:
                    found.append((t, c))
            new.extend(c for _, c in sorted(found))
        out.append(new)
    return out


def build_mesh(vertices, cells, tol: float = MERGE_TOL) -> PolygonalMesh:
    """Clean raw polygon soup into a valid mesh.

    Merges coincident vertices, drops repeated consecutive vertices, orients
    cells counter-clockwise, inserts hanging vertices and renumbers vertices by
    first appearance so the output depends only on the input order.
    """
    verts = np.asarray(vertices, dtype=float)
    rep = _merge_vertices(verts, tol)
    clean = []
    for cell in cells:
        c = [int(rep[i]) for i in cell]
        c = [v for j, v in enumerate(c) if v != c[j - 1]] if len(c) > 1 else c
        if len(c) < 3:
            continue
        if signed_area(verts[c]) < 0:
            c = c[::-1]
        clean.append(c)
    clean = _insert_hanging(verts, clean, tol)
    order: dict[int, int] = {}
    for c in clean:
        for v in c:
            order.setdefault(v, len(order))
    old = np.array(list(order.keys()), dtype=int)
    new_cells = [tuple(order[v] for v in c) for c in clean]
    return PolygonalMesh(verts[old], new_cells)


# ----------------------------------------------------------------------------
# domains
# ----------------------------------------------------------------------------


def _bounds(domain) -> tuple[float, float, float, float]:
    if isinstance(domain, str):
        if domain in ("square", "unit-square"):
            return (0.0, 1.0, 0.0, 1.0)
        if domain in ("lshape", "L-shape"):
            return (0.0, 1.0, 0.0, 1.0)
        raise MeshError(f"unknown domain {domain!r}")
    x0, x1, y0, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"empty rectangle {domain}")
    return x0, x1, y0, y1


def is_lshape(domain) -> bool:
    return isinstance(domain, str) and domain in ("lshape", "L-shape")


def domain_area(domain) -> float:
    if is_lshape(domain):
        return 0.75
    x0, x1, y0, y1 = _bounds(domain)
    return (x1 - x0) * (y1 - y0)


# ----------------------------------------------------------------------------
# generators
# ----------------------------------------------------------------------------


def _quad_grid(x0, x1, y0, y1, nx, ny, keep=None):
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    verts = np.column_stack([X.ravel(), Y.ravel()])
    vid = lambda i, j: j * (nx + 1) + i  # noqa: E731
    cells = []
    for j in range(ny):
        for i in range(nx):
            if keep is not None and not keep(0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])):
                continue
            cells.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])
    return verts, cells


def generate_structured(domain="square", N: int = 5) -> PolygonalMesh:
    """Uniform N x N quadrilateral mesh; the L-shape drops the quads of (0,0.5)^2."""
    if N < 1:
        raise MeshError("N must be >= 1")
    x0, x1, y0, y1 = _bounds(domain)
    keep = None
    if is_lshape(domain):
        if N % 2:
            raise MeshError("the L-shape needs an even N so cells align with the re-entrant corner")
        keep = lambda x, y: not (x < 0.5 and y < 0.5)  # noqa: E731
    verts, cells = _quad_grid(x0, x1, y0, y1, N, N, keep)
    return build_mesh(verts, cells)


def _chevron_cells(x0, x1, y0, y1, nx, ny, offset=0.2):
    """Split each grid cell by a zig-zag polyline into two non-convex polygons."""
    verts: list[tuple[float, float]] = []
    cells = []
    dx, dy = (x1 - x0) / nx, (y1 - y0) / ny
    for j in range(ny):
        for i in range(nx):
            a, b = x0 + i * dx, x0 + (i + 1) * dx
            c, d = y0 + j * dy, y0 + (j + 1) * dy
            m = 0.5 * (a + b)
            s = offset * dx
            pts = [
                (a, c), (m, c), (b, c), (b, d), (m, d), (a, d),
                (m + s, c + dy / 3), (m - s, c + 2 * dy / 3),
            ]
            base = len(verts)
            verts.extend(pts)
            p = lambda k: base + k  # noqa: E731
            cells.append([p(0), p(1), p(6), p(7), p(4), p(5)])
            cells.append([p(1), p(2), p(3), p(4), p(7), p(6)])
    return np.array(verts), cells


def generate_nonconvex(N: int, domain=(0.0, 1.0, 0.0, 1.0), offset: float = 0.2) -> PolygonalMesh:
    """Each cell of an N x N grid split into two interlocking chevrons (one reflex vertex each)."""
    if N < 2:
        raise MeshError("N must be >= 2")
    x0, x1, y0, y1 = _bounds(domain)
    verts, cells = _chevron_cells(x0, x1, y0, y1, N, N, offset)
    return build_mesh(verts, cells)


def generate_composite_hanging(N_coarse: int, N_fine: int, coarse_kind: str = "quad",
                               fine_kind: str = "quad") -> PolygonalMesh:
    """Left half at resolution N_coarse, right half at N_fine, glued with hanging nodes.

    ``*_kind`` selects ``"quad"`` or ``"nonconvex"`` (chevron) cells per half.
    """
    if N_coarse < 1 or N_fine % N_coarse:
        raise MeshError(f"N_fine={N_fine} must be a positive multiple of N_coarse={N_coarse}")
    if N_fine == N_coarse:
        raise MeshError("coarse and fine resolutions coincide; no hanging nodes would arise")
    parts = []
    for kind, n, (xa, xb) in ((coarse_kind, N_coarse, (0.0, 0.5)), (fine_kind, N_fine, (0.5, 1.0))):
        nx = max(1, math.ceil(n / 2))  # square cells on the half-width strip when n is even
        if kind == "quad":
            parts.append(_quad_grid(xa, xb, 0.0, 1.0, nx, n))
        elif kind == "nonconvex":
            parts.append(_chevron_cells(xa, xb, 0.0, 1.0, nx, n))
        else:
            raise MeshError(f"unknown cell kind {kind!r}")
    (v1, c1), (v2, c2) = parts
    verts = np.vstack([v1, v2])
    cells = c1 + [[i + len(v1) for i in c] for c in c2]
    return build_mesh(verts, cells)


def _clip_halfplane(poly: list, a: np.ndarray, b: float) -> list:
    """Sutherland-Hodgman: keep the part of ``poly`` with a.x <= b."""
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        fp, fq = a @ p - b, a @ q - b
        if fp <= 0:
            out.append(p)
        if (fp < 0 < fq) or (fq < 0 < fp):
            t = fp / (fp - fq)
            out.append(p + t * (q - p))
    return out


def _voronoi_cells(points: np.ndarray, box) -> list[np.ndarray]:
    x0, x1, y0, y1 = box
    rect = [np.array(p, dtype=float) for p in ((x0, y0), (x1, y0), (x1, y1), (x0, y1))]
    n = len(points)
    neigh: list = []
    tri = None
    if n > 16:
        try:
            tri = Delaunay(points)
        except QhullError:
            tri = None
    if tri is not None:
        ptr, idx = tri.vertex_neighbor_vertices
        neigh = [idx[ptr[i]:ptr[i + 1]] for i in range(n)]
    else:
        neigh = [np.array([j for j in range(n) if j != i], dtype=int) for i in range(n)]
    sq = (points**2).sum(1)
    cells = []
    for i in range(n):
        poly = rect
        for j in neigh[i]:
            poly = _clip_halfplane(poly, points[j] - points[i], 0.5 * (sq[j] - sq[i]))
            if len(poly) < 3:
                break
        cells.append(np.array(poly))
    return cells


def _lloyd_voronoi(points, box, lloyd_iters):
    pts = np.array(points, dtype=float)
    cells = _voronoi_cells(pts, box)
    for _ in range(lloyd_iters):
        for i, c in enumerate(cells):
            if len(c) >= 3 and signed_area(c) > AREA_TOL:
                pts[i] = polygon_geometry(c)[1]
        cells = _voronoi_cells(pts, box)
    return pts, cells


def _soup(polys: list[np.ndarray]):
    verts = np.vstack(polys)
    cells, k = [], 0
    for p in polys:
        cells.append(list(range(k, k + len(p))))
        k += len(p)
    return verts, cells


def generate_voronoi(domain="square", N: int = 4, lloyd_iters: int = 10, seed: int = 0,
                     points=None) -> PolygonalMesh:
    """Clipped (optionally Lloyd-relaxed) Voronoi mesh with about N^2 cells.

    For the L-shape the quadrant (0.5,1)^2 is tessellated and mirrored across
    the re-entrant lines, which keeps every cell convex and the tiling exact.
    Explicit ``points`` are accepted for rectangles only.
    """
    if N < 1:
        raise MeshError("N must be >= 1")
    rng = np.random.default_rng(seed)
    if is_lshape(domain):
        if points is not None:
            raise MeshError("explicit seeds are only supported on rectangles")
        box = (0.5, 1.0, 0.5, 1.0)
        n = max(1, round(N * N / 4))
        for _attempt in range(10):
            seeds = 0.5 + 0.5 * rng.random((n, 2))
            _, cells = _lloyd_voronoi(seeds, box, lloyd_iters)
            if all(len(c) >= 3 and signed_area(c) > AREA_TOL for c in cells):
                break
        else:
            raise MeshError("could not build non-degenerate Voronoi cells")
        mirrored = list(cells)
        for c in cells:
            mirrored.append(np.column_stack([1.0 - c[::-1, 0], c[::-1, 1]]))
            mirrored.append(np.column_stack([c[::-1, 0], 1.0 - c[::-1, 1]]))
        return build_mesh(*_soup(mirrored))
    box = _bounds(domain)
    x0, x1, y0, y1 = box
    for _attempt in range(10):
        if points is not None:
            seeds = np.asarray(points, dtype=float).reshape(-1, 2)
        else:
            seeds = np.column_stack([x0 + (x1 - x0) * rng.random(N * N), y0 + (y1 - y0) * rng.random(N * N)])
        _, cells = _lloyd_voronoi(seeds, box, lloyd_iters)
        if all(len(c) >= 3 and signed_area(c) > AREA_TOL for c in cells):
            return build_mesh(*_soup(cells))
        if points is not None:
            break
    raise MeshError("could not build non-degenerate Voronoi cells")


def _hex_cells(N: int):
    nx = N
    ny = max(1, round(2 * N / math.sqrt(3)))
    dx, dy = 1.0 / nx, 1.0 / ny
    seeds = []
    for j in range(ny + 1):
        if j % 2 == 0:
            seeds.extend((i * dx, j * dy) for i in range(nx + 1))
        else:
            seeds.extend(((i + 0.5) * dx, j * dy) for i in range(nx))
    return _voronoi_cells(np.array(seeds), (0.0, 1.0, 0.0, 1.0))


def generate_distorted_hex(N: int, distortion: float = 0.2, seed: int = 0,
                           min_delta: float = 0.1) -> PolygonalMesh:
    """Hexagonal tiling clipped to the unit square with jittered interior vertices.

    Interior vertices move by ``distortion / N`` in a uniformly random
    direction. If the result fails the star-shapedness audit at ``min_delta``
    the distortion is halved and the mesh regenerated (same seed).
    """
    if N < 1:
        raise MeshError("N must be >= 1")
    if not 0.0 <= distortion <= 0.3:
        raise MeshError("distortion must lie in [0, 0.3]")
    base = build_mesh(*_soup(_hex_cells(N)))
    if distortion == 0.0:
        return base
    bverts = set(base.boundary_vertices.tolist())
    interior = np.array([i for i in range(base.n_vertices) if i not in bverts], dtype=int)
    amount = distortion
    for _attempt in range(6):
        rng = np.random.default_rng(seed)
        theta = rng.uniform(0.0, 2.0 * math.pi, len(interior))
        verts = base.vertices.copy()
        verts[interior] += (amount / N) * np.column_stack([np.cos(theta), np.sin(theta)])
        try:
            mesh = PolygonalMesh(verts, base.cells)
            rep = check_regularity(mesh, min_delta)
        except MeshError:
            rep = None
        if rep is not None and rep.delta0_star_shaped >= min_delta:
            return mesh
        amount *= 0.5
    raise MeshError(f"could not satisfy star-shapedness >= {min_delta} for N={N}")


# ----------------------------------------------------------------------------
# regularity
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class RegularityReport:
    delta0_star_shaped: float
    delta0_edge: float
    worst_element_id: int
    ratios: np.ndarray
    delta0: float

    @property
    def passed(self) -> bool:
        return self.delta0_star_shaped >= self.delta0 and self.delta0_edge >= self.delta0


def kernel_inradius(coords) -> float:
    """Radius of the largest disc inside the polygon kernel (0 when the kernel is empty)."""
    return float(_chebyshev_radii([np.asarray(coords, dtype=float)])[0])


def _chebyshev_radii(polys: list[np.ndarray]) -> np.ndarray:
    # one block-separable LP: maximise sum of r_e s.t. n_i.c_e + r_e <= n_i.p_i per edge
    rows, cols, vals, rhs = [], [], [], []
    r = 0
    for e, xy in enumerate(polys):
        d = np.roll(xy, -1, axis=0) - xy
        lens = np.hypot(d[:, 0], d[:, 1])
        nrm = np.column_stack([d[:, 1], -d[:, 0]]) / lens[:, None]
        b = (nrm * xy).sum(1)
        for i in range(len(xy)):
            rows += [r, r, r]
            cols += [3 * e, 3 * e + 1, 3 * e + 2]
            vals += [nrm[i, 0], nrm[i, 1], 1.0]
            rhs.append(b[i])
            r += 1
    n = 3 * len(polys)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(r, n))
    c = np.zeros(n)
    c[2::3] = -1.0
    # r is left free so an empty kernel yields a negative optimum instead of an infeasible LP
    bounds = [(None, None)] * n
    res = linprog(c, A_ub=A, b_ub=np.array(rhs), bounds=bounds, method="highs")
    if res.status != 0:
        raise MeshError(f"kernel LP failed: {res.message}")
    return np.maximum(res.x[2::3], 0.0)


def check_regularity(mesh: PolygonalMesh, delta0: float = 0.1) -> RegularityReport:
    """Star-shapedness (kernel inradius / h_P) and edge ratio min |e| / h_P per element."""
    polys = [mesh.cell_coords(e) for e in range(mesh.n_cells)]
    radii = _chebyshev_radii(polys)
    diam = mesh.diameters
    star = radii / diam
    edge = np.empty(mesh.n_cells)
    for e, xy in enumerate(polys):
        d = np.roll(xy, -1, axis=0) - xy
        edge[e] = np.hypot(d[:, 0], d[:, 1]).min() / diam[e]
    worst = int(np.argmin(np.minimum(star, edge)))
    return RegularityReport(float(star.min()), float(edge.min()), worst, star, delta0)


def interior_angles(coords) -> np.ndarray:
    """Interior angles of a CCW polygon in radians (values above pi mark reflex vertices)."""
    xy = np.asarray(coords, dtype=float)
    a = xy - np.roll(xy, 1, axis=0)
    b = np.roll(xy, -1, axis=0) - xy
    turn = np.arctan2(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0], (a * b).sum(1))
    return math.pi - turn
