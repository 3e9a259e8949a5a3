"""Scaled monomials, polygon/edge quadrature and the VEM degree-of-freedom layout.

Local DOF order on an element with n vertices: the n vertex values, then the
k-1 interior Gauss-Lobatto values of each edge (edge i runs from vertex i to
vertex i+1), then the scaled moments (1/|P|) int phi m_a for |a| <= k-2.
Global order per scalar field: all vertices, edge nodes by edge id, element
moments by element id.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cache, cached_property

import numpy as np
from numpy.polynomial import legendre
from scipy.special import roots_jacobi, roots_legendre

from .mesh import MeshError, PolygonalMesh, polygon_geometry, signed_area

FIELDS = ("u1", "u2", "p", "psi")


def dim_poly(k: int) -> int:
    """Dimension of P_k in two variables (0 for k < 0)."""
    return (k + 1) * (k + 2) // 2 if k >= 0 else 0


@cache
def monomial_exponents(k: int) -> np.ndarray:
    """Exponents ordered by total degree, then by decreasing power of x."""
    exps = [(d - j, j) for d in range(k + 1) for j in range(d + 1)]
    return np.array(exps, dtype=int).reshape(-1, 2)


def monomial_index(a: int, b: int) -> int:
    d = a + b
    return d * (d + 1) // 2 + b


@cache
def derivative_matrices(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Dx, Dy with h * d/dx m_a = sum_g Dx[a, g] m_g (g ranges over P_{k-1})."""
    exps = monomial_exponents(k)
    n1 = dim_poly(k - 1)
    dx = np.zeros((len(exps), n1))
    dy = np.zeros((len(exps), n1))
    for i, (a, b) in enumerate(exps):
        if a > 0:
            dx[i, monomial_index(a - 1, b)] = a
        if b > 0:
            dy[i, monomial_index(a, b - 1)] = b
    return dx, dy


@cache
def laplacian_matrix(k: int) -> np.ndarray:
    """L with h^2 * Laplacian(m_a) = sum_g L[a, g] m_g (g ranges over P_{k-2})."""
    exps = monomial_exponents(k)
    lap = np.zeros((len(exps), dim_poly(k - 2)))
    for i, (a, b) in enumerate(exps):
        if a > 1:
            lap[i, monomial_index(a - 2, b)] += a * (a - 1)
        if b > 1:
            lap[i, monomial_index(a, b - 2)] += b * (b - 1)
    return lap


@dataclass(frozen=True, eq=False)
class MonomialBasis:
    """m_a(x) = ((x - center) / h)^a for |a| <= k."""

    k: int
    center: np.ndarray
    h: float

    @property
    def exps(self) -> np.ndarray:
        return monomial_exponents(self.k)

    @property
    def dim(self) -> int:
        return dim_poly(self.k)

    def _scaled(self, xy):
        return (np.atleast_2d(np.asarray(xy, dtype=float)) - self.center) / self.h

    def values(self, xy) -> np.ndarray:
        s = self._scaled(xy)
        e = self.exps
        return s[:, None, 0] ** e[:, 0] * s[:, None, 1] ** e[:, 1]

    def gradients(self, xy) -> np.ndarray:
        """Shape (npts, dim, 2)."""
        s = self._scaled(xy)
        a, b = self.exps[:, 0], self.exps[:, 1]
        px = s[:, None, 0] ** np.maximum(a - 1, 0)
        py = s[:, None, 1] ** np.maximum(b - 1, 0)
        gx = a * px * s[:, None, 1] ** b
        gy = b * py * s[:, None, 0] ** a
        return np.stack([gx, gy], axis=-1) / self.h

    def laplacians(self, xy) -> np.ndarray:
        lower = MonomialBasis(self.k - 2, self.center, self.h).values(xy) if self.k >= 2 else None
        if lower is None:
            return np.zeros((len(self._scaled(xy)), self.dim))
        return lower @ laplacian_matrix(self.k).T / self.h**2


def monomial_eval(basis: MonomialBasis, index: int, x, what: str = "value"):
    """Value, gradient or Laplacian of a single scaled monomial at one point."""
    pt = np.asarray(x, dtype=float).reshape(1, 2)
    if what == "value":
        return float(basis.values(pt)[0, index])
    if what == "gradient":
        return basis.gradients(pt)[0, index]
    if what == "laplacian":
        return float(basis.laplacians(pt)[0, index])
    raise ValueError(f"unknown quantity {what!r}")


# ----------------------------------------------------------------------------
# quadrature
# ----------------------------------------------------------------------------


@cache
def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss rule on the reference triangle (weights sum to 1/2)."""
    n = max(1, math.ceil((degree + 1) / 2))
    u, wu = roots_legendre(n)
    v, wv = roots_jacobi(n, 1.0, 0.0)
    u = 0.5 * (u + 1.0)
    wu = 0.5 * wu
    v = 0.5 * (v + 1.0)
    wv = 0.25 * wv
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv)
    pts = np.column_stack([(U * (1.0 - V)).ravel(), V.ravel()])
    return pts, W.ravel()


@cache
def gauss_legendre_01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True, eq=False)
class ElementQuadrature:
    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    def integrate(self, values) -> float:
        return float(np.asarray(values) @ self.weights)


def _drop_collinear(xy: np.ndarray, tol: float) -> np.ndarray:
    keep = []
    n = len(xy)
    for i in range(n):
        a, b, c = xy[i - 1], xy[i], xy[(i + 1) % n]
        cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        if abs(cross) > tol:
            keep.append(i)
    return xy[keep]


def _ear_clip(xy: np.ndarray) -> list[np.ndarray]:
    area = signed_area(xy)
    tol = 1e-12 * abs(area)
    pts = _drop_collinear(xy, tol)
    idx = list(range(len(pts)))
    tris = []

    def inside(p, a, b, c):
        d1 = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
        d2 = (c[0] - b[0]) * (p[1] - b[1]) - (c[1] - b[1]) * (p[0] - b[0])
        d3 = (a[0] - c[0]) * (p[1] - c[1]) - (a[1] - c[1]) * (p[0] - c[0])
        return d1 >= -tol and d2 >= -tol and d3 >= -tol

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(xy) ** 2:
            raise MeshError("ear clipping failed")
        for j in range(len(idx)):
            ia, ib, ic = idx[j - 1], idx[j], idx[(j + 1) % len(idx)]
            a, b, c = pts[ia], pts[ib], pts[ic]
            if signed_area([a, b, c]) <= tol:
                continue
            if any(inside(pts[m], a, b, c) for m in idx if m not in (ia, ib, ic)):
                continue
            tris.append(np.array([a, b, c]))
            idx.pop(j)
            break
        else:
            raise MeshError("ear clipping found no ear")
    tris.append(pts[idx])
    return tris


def triangulate(coords) -> list[np.ndarray]:
    """Fan from the centroid when every fan triangle is positive, else ear clipping."""
    xy = np.asarray(coords, dtype=float)
    area, cen, _ = polygon_geometry(xy)
    nxt = np.roll(xy, -1, axis=0)
    fan_areas = 0.5 * ((xy[:, 0] - cen[0]) * (nxt[:, 1] - cen[1]) - (xy[:, 1] - cen[1]) * (nxt[:, 0] - cen[0]))
    if np.all(fan_areas > 1e-12 * area):
        return [np.array([cen, xy[i], nxt[i]]) for i in range(len(xy))]
    return _ear_clip(xy)


def polygon_quadrature(coords, degree: int, element_id: int | None = None) -> ElementQuadrature:
    try:
        tris = triangulate(coords)
    except MeshError as exc:
        where = f"element {element_id}" if element_id is not None else "polygon"
        raise MeshError(f"{where}: triangulation failed ({exc})") from None
    ref_pts, ref_w = triangle_rule(degree)
    pts, wts = [], []
    for t in tris:
        a, b, c = t
        jac = np.column_stack([b - a, c - a])
        det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
        pts.append(a + ref_pts @ jac.T)
        wts.append(ref_w * det)
    return ElementQuadrature(np.vstack(pts), np.concatenate(wts), degree)


@cache
def gauss_lobatto_nodes(k: int) -> np.ndarray:
    """All k+1 Gauss-Lobatto nodes on [0, 1], endpoints included."""
    if k < 1:
        raise ValueError("k must be >= 1")
    inner = legendre.Legendre.basis(k).deriv().roots() if k >= 2 else np.array([])
    nodes = np.concatenate([[-1.0], np.sort(inner.real), [1.0]])
    return 0.5 * (nodes + 1.0)


def gauss_lobatto_edge_nodes(k: int) -> np.ndarray:
    """The k-1 interior Gauss-Lobatto nodes mapped to (0, 1)."""
    return gauss_lobatto_nodes(k)[1:-1]


def lagrange_matrix(nodes: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """L[i, j] = ell_j(pts[i]) for the Lagrange basis on ``nodes``."""
    L = np.ones((len(pts), len(nodes)))
    for j, tj in enumerate(nodes):
        for m, tm in enumerate(nodes):
            if m != j:
                L[:, j] *= (pts - tm) / (tj - tm)
    return L


# ----------------------------------------------------------------------------
# DOF map
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DofMap:
    k: int
    n_vertex: int
    n_edge: int
    n_element: int
    element_dofs: tuple[np.ndarray, ...]
    node_coords: np.ndarray
    boundary: np.ndarray

    @property
    def n_edge_nodes(self) -> int:
        return (self.k - 1) * self.n_edge

    @property
    def n_moments(self) -> int:
        """Interior moments per element."""
        return dim_poly(self.k - 2)

    @property
    def n(self) -> int:
        """Scalar DOFs per field."""
        return self.n_vertex + self.n_edge_nodes + self.n_element * self.n_moments

    @property
    def total_dofs(self) -> int:
        return len(FIELDS) * self.n

    def closed_form_total(self) -> int:
        return 4 * self.n_vertex + 4 * (self.k - 1) * self.n_edge + 4 * self.n_element * self.n_moments

    def field_slice(self, name: str) -> slice:
        i = FIELDS.index(name)
        return slice(i * self.n, (i + 1) * self.n)

    def moment_dofs(self, e: int) -> np.ndarray:
        start = self.n_vertex + self.n_edge_nodes + e * self.n_moments
        return np.arange(start, start + self.n_moments)


def build_dof_map(mesh: PolygonalMesh, k: int) -> DofMap:
    if k < 1:
        raise ValueError("VEM order k must be >= 1")
    nv, ne = mesh.n_vertices, len(mesh.edges)
    km1 = k - 1
    nm = dim_poly(k - 2)
    edge_index = mesh.edge_index
    elem = []
    for e, cell in enumerate(mesh.cells):
        n = len(cell)
        ids = list(cell)
        for i in range(n):
            a, b = cell[i], cell[(i + 1) % n]
            j = edge_index[(a, b) if a < b else (b, a)]
            nodes = nv + j * km1 + np.arange(km1)
            ids.extend(nodes if a < b else nodes[::-1])
        start = nv + ne * km1 + e * nm
        ids.extend(range(start, start + nm))
        elem.append(np.array(ids, dtype=int))
    t = gauss_lobatto_edge_nodes(k)
    ed = mesh.edges
    pa, pb = mesh.vertices[ed[:, 0]], mesh.vertices[ed[:, 1]]
    edge_xy = (pa[:, None, :] + t[None, :, None] * (pb - pa)[:, None, :]).reshape(-1, 2)
    coords = np.vstack([mesh.vertices, edge_xy])
    bnd = [int(v) for v in mesh.boundary_vertices]
    for a, b in mesh.boundary_edges:
        j = edge_index[(a, b)]
        bnd.extend(range(nv + j * km1, nv + (j + 1) * km1))
    return DofMap(k, nv, ne, mesh.n_cells, tuple(elem), coords, np.array(sorted(bnd), dtype=int))


# ----------------------------------------------------------------------------
# per-element workspace
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EdgeData:
    dofs: np.ndarray         # local indices of the k+1 trace DOFs, in edge direction
    length: float
    normal: np.ndarray       # outward unit normal
    points: np.ndarray       # Gauss-Legendre points on the edge
    local_points: np.ndarray  # the same points relative to the element centroid
    weights: np.ndarray      # already scaled by the edge length
    interp: np.ndarray       # trace DOF values -> values at ``points``


class ElementWorkspace:
    """Geometry, basis, quadrature and DOF functionals of one polygon."""

    def __init__(self, mesh: PolygonalMesh, e: int, k: int, quad_degree: int | None = None,
                 dofmap: DofMap | None = None):
        self.element_id = e
        self.k = k
        self.coords = mesh.cell_coords(e)
        poly = mesh.polygons[e]
        self.area, self.centroid, self.diameter = poly.area, poly.centroid, poly.diameter
        self.basis = MonomialBasis(k, self.centroid, self.diameter)
        # all projector algebra runs in centroid-relative coordinates, which keeps small cells
        # far from the origin free of cancellation
        self.local_coords = self.coords - self.centroid
        self.local_basis = MonomialBasis(k, np.zeros(2), self.diameter)
        self.quad_degree = 2 * k + 2 if quad_degree is None else quad_degree
        local = polygon_quadrature(self.local_coords, self.quad_degree, e)
        self.local_quad_points = local.points
        self.quad = ElementQuadrature(local.points + self.centroid, local.weights, local.exactness_degree)
        self.n_vert = len(self.coords)
        self.n_mom = dim_poly(k - 2)
        self.n_loc = self.n_vert * k + self.n_mom
        self.global_dofs = dofmap.element_dofs[e] if dofmap is not None else None

    @property
    def h(self) -> float:
        return self.diameter

    @property
    def moment_slice(self) -> slice:
        return slice(self.n_loc - self.n_mom, self.n_loc)

    @cached_property
    def edges(self) -> list[EdgeData]:
        k, n = self.k, self.n_vert
        gl = gauss_lobatto_nodes(k)
        s, w = gauss_legendre_01(k + 2)
        interp = lagrange_matrix(gl, s)
        out = []
        for i in range(n):
            pa, pb = self.local_coords[i], self.local_coords[(i + 1) % n]
            d = pb - pa
            length = math.hypot(*d)
            dofs = [i] + [n + i * (k - 1) + j for j in range(k - 1)] + [(i + 1) % n]
            loc = pa + s[:, None] * d
            out.append(EdgeData(np.array(dofs), length, np.array([d[1], -d[0]]) / length,
                                loc + self.centroid, loc, w * length, interp))
        return out

    @cached_property
    def local_node_coords(self) -> np.ndarray:
        """Vertex and edge-node DOF locations in local order, relative to the centroid."""
        t = gauss_lobatto_edge_nodes(self.k)
        n = self.n_vert
        pts = [self.local_coords]
        for i in range(n):
            pa, pb = self.local_coords[i], self.local_coords[(i + 1) % n]
            pts.append(pa + t[:, None] * (pb - pa))
        return np.vstack(pts)

    @cached_property
    def node_coords(self) -> np.ndarray:
        """Coordinates of the vertex and edge-node DOFs in local order."""
        t = gauss_lobatto_edge_nodes(self.k)
        n = self.n_vert
        pts = [self.coords]
        for i in range(n):
            pa, pb = self.coords[i], self.coords[(i + 1) % n]
            pts.append(pa + t[:, None] * (pb - pa))
        return np.vstack(pts)

    @cached_property
    def qvals(self) -> np.ndarray:
        """Monomial values at the quadrature points, shape (nq, dim P_k)."""
        return self.local_basis.values(self.local_quad_points)

    @cached_property
    def mass(self) -> np.ndarray:
        V = self.qvals
        return V.T @ (self.quad.weights[:, None] * V)

    @cached_property
    def dof_matrix(self) -> np.ndarray:
        """D[i, a] = dof_i(m_a)."""
        D = np.zeros((self.n_loc, self.basis.dim))
        nb = self.n_vert * self.k
        D[:nb] = self.local_basis.values(self.local_node_coords)
        if self.n_mom:
            D[nb:] = self.mass[: self.n_mom, :] / self.area
        return D

    def interpolate(self, f) -> np.ndarray:
        """Local DOFs of a callable f(points) -> values."""
        nb = self.n_vert * self.k
        out = np.empty(self.n_loc)
        out[:nb] = f(self.node_coords)
        if self.n_mom:
            fq = f(self.quad.points)
            out[nb:] = (self.qvals[:, : self.n_mom].T @ (self.quad.weights * fq)) / self.area
        return out


def interpolate_scalar(mesh: PolygonalMesh, dofmap: DofMap, field, quad_degree: int | None = None) -> np.ndarray:
    """Global DOF vector of the VEM interpolant of ``field`` (vectorised callable on (n, 2) points)."""
    k = dofmap.k
    out = np.empty(dofmap.n)
    nb = dofmap.n_vertex + dofmap.n_edge_nodes
    out[:nb] = field(dofmap.node_coords)
    if dofmap.n_moments:
        for e in range(mesh.n_cells):
            ws = ElementWorkspace(mesh, e, k, quad_degree)
            fq = field(ws.quad.points)
            out[dofmap.moment_dofs(e)] = (ws.qvals[:, : ws.n_mom].T @ (ws.quad.weights * fq)) / ws.area
    return out
