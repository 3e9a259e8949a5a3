import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import (grad_dot, lagrange_trace_integral, poly_d, poly_eval, poly_integral, poly_mul,
                     scaled_monomial)
from shapes import ZOO, single_cell

from spbvem.mesh import generate_composite_hanging, generate_distorted_hex, generate_nonconvex, generate_voronoi
from spbvem.polyspace import ElementWorkspace, dim_poly, gauss_lobatto_nodes, monomial_exponents
from spbvem.projectors import ProjectorError, compute_projectors

ORDERS = [1, 2, 3]

pytestmark = pytest.mark.property


def workspace(coords, k):
    return ElementWorkspace(single_cell(coords), 0, k)


def frame(ws):
    """Element vertices in the scaled frame x' = (x - x_P) / h_P, where m_a is a plain monomial."""
    return (ws.coords - ws.centroid) / ws.h


def basis_polys(ws, k=None):
    k = ws.k if k is None else k
    return [scaled_monomial(a, b, (0.0, 0.0), 1.0) for a, b in monomial_exponents(k)]


def coeffs_to_poly(ws, c):
    out = 0
    for ci, m in zip(c, basis_polys(ws, _degree_of(len(c)))):
        out = _add(out, ci * m)
    return out


def _degree_of(n):
    k = 0
    while dim_poly(k) < n:
        k += 1
    return k


def _add(x, y):
    if np.isscalar(x):
        return y
    out = np.zeros((max(x.shape[0], y.shape[0]), max(x.shape[1], y.shape[1])))
    out[: x.shape[0], : x.shape[1]] += x
    out[: y.shape[0], : y.shape[1]] += y
    return out


def value_error(ws, coef, exact_poly):
    """max |poly(coef) - exact| at the quadrature points (function-value sense, exact given in the frame)."""
    x = ws.quad.points
    return np.abs(ws.basis.values(x) @ coef - poly_eval(exact_poly, (x - ws.centroid) / ws.h)).max()


def _all_shapes():
    return [(name, k) for name in sorted(ZOO) for k in ORDERS]


def _scaled_eval(ws, a, b, x, da=0, db=0):
    """Direct evaluation of h^(da+db) d^(da,db) ((x - xc)/h)^a ((y - yc)/h)^b in scaled coordinates."""
    s = (x - ws.centroid) / ws.h
    ca = np.prod(range(a - da + 1, a + 1)) if da <= a else 0
    cb = np.prod(range(b - db + 1, b + 1)) if db <= b else 0
    if ca == 0 or cb == 0:
        return np.zeros(len(x))
    return ca * cb * s[:, 0] ** (a - da) * s[:, 1] ** (b - db)


@pytest.mark.parametrize("name,k", _all_shapes())
def test_polynomial_reproduction_zoo(name, k):
    ws = workspace(ZOO[name], k)
    P = compute_projectors(ws)
    x = ws.quad.points
    V = ws.basis.values(x)
    n1 = dim_poly(k - 1)
    for a, b in monomial_exponents(k):
        dofs = ws.interpolate(lambda y, a=a, b=b: _scaled_eval(ws, a, b, y))
        exact = _scaled_eval(ws, a, b, x)
        assert np.abs(V @ (P.Pnab @ dofs) - exact).max() <= 1e-12
        assert np.abs(V @ (P.P0 @ dofs) - exact).max() <= 1e-12
        # gradient projectors compared with h * grad so the check is scale-free
        for comp, (da, db) in enumerate(((1, 0), (0, 1))):
            d_exact = _scaled_eval(ws, a, b, x, da, db)
            assert np.abs(V @ (P.Gk[comp] @ dofs) * ws.h - d_exact).max() <= 1e-12
            assert np.abs(V[:, :n1] @ (P.G1[comp] @ dofs) * ws.h - d_exact).max() <= 1e-12


def test_constant_and_linear_examples():
    ws = workspace(ZOO["square"], 2)
    P = compute_projectors(ws)
    one = ws.interpolate(lambda x: np.ones(len(x)))
    assert np.allclose(P.Pnab @ one, np.eye(dim_poly(2))[0], atol=1e-14)
    assert np.allclose(P.G1[0] @ one, 0, atol=1e-13) and np.allclose(P.G1[1] @ one, 0, atol=1e-13)
    m10 = ws.interpolate(lambda x: (x[:, 0] - ws.centroid[0]) / ws.h)
    ws1 = workspace(ZOO["square"], 1)
    P1 = compute_projectors(ws1)
    m10_1 = ws1.interpolate(lambda x: (x[:, 0] - ws1.centroid[0]) / ws1.h)
    assert np.allclose(P1.G1[0] @ m10_1, [1 / ws1.h], atol=1e-13)
    assert np.allclose(P1.G1[1] @ m10_1, [0.0], atol=1e-13)
    assert np.allclose(P.Pnab @ m10, np.eye(dim_poly(2))[1], atol=1e-13)


@pytest.mark.parametrize("name", sorted(ZOO))
def test_k1_l2_equals_nabla(name):
    ws = workspace(ZOO[name], 1)
    P = compute_projectors(ws)
    assert np.allclose(P.P0, P.Pnab, atol=1e-13)


def _trace_values(ws, phi):
    """Per edge, the k+1 trace DOFs of a local DOF vector."""
    return [phi[ed.dofs] for ed in ws.edges]


def _lap_as_moment_combination(ws, m):
    """Coefficients c with Delta' m = sum_b c_b m_b, |b| <= k-2, in the scaled frame."""
    lap = _add(poly_d(poly_d(m, 0), 0), poly_d(poly_d(m, 1), 1))
    lower = basis_polys(ws, ws.k - 2)
    pts = np.random.default_rng(0).uniform(-1, 1, (40, 2))
    A = np.column_stack([poly_eval(q, pts) for q in lower])
    c, *_ = np.linalg.lstsq(A, poly_eval(lap, pts), rcond=None)
    return c


def nabla_oracle_residual(ws, P, phi):
    """Defining identities of Pi^nabla for an arbitrary DOF vector, assembled in the scaled frame.

    With x' = (x - x_P)/h_P every term of the gradient identity keeps its form
    (the h factors cancel), the boundary-mean row scales by h on both sides.
    """
    k = ws.k
    xy = frame(ws)
    area = poly_integral([[1.0]], xy)
    pi = coeffs_to_poly(ws, P.Pnab @ phi)
    traces = _trace_values(ws, phi)
    mom = phi[ws.moment_slice]
    res = []
    for alpha, m in enumerate(basis_polys(ws)):
        if alpha == 0:
            lhs = lagrange_trace_integral(xy, k, [np.ones(k + 1)] * ws.n_vert, lambda x, n: poly_eval(pi, x))
            rhs = lagrange_trace_integral(xy, k, traces, lambda x, n: np.ones(len(x)))
        else:
            lhs = poly_integral(grad_dot(pi, m), xy)
            bnd = lagrange_trace_integral(
                xy, k, traces,
                lambda x, n, m=m: poly_eval(poly_d(m, 0), x) * n[0] + poly_eval(poly_d(m, 1), x) * n[1])
            vol = area * (_lap_as_moment_combination(ws, m) @ mom) if k >= 2 else 0.0
            rhs = bnd - vol
        res.append(abs(lhs - rhs))
    return max(res)


def _probe_vectors(n, k):
    """Unit DOF vectors for k <= 2. The identities are linear in phi, so for k = 3 a few random
    vectors with entries in [-1, 1] cover the space at a fraction of the cost."""
    if k <= 2:
        return np.eye(n)
    return np.random.default_rng(n).uniform(-1.0, 1.0, (3, n))


@pytest.mark.parametrize("name", ["square", "chevron", "voronoi", "hanging-heptagon", "l-hexagon"])
@pytest.mark.parametrize("k", ORDERS)
def test_nabla_defining_system_virtual_functions(name, k):
    ws = workspace(ZOO[name], k)
    P = compute_projectors(ws)
    for phi in _probe_vectors(ws.n_loc, k):
        assert nabla_oracle_residual(ws, P, phi) <= 1e-12


def test_k2_square_moment_basis_function_frozen():
    # DOF vector of the interior moment on the unit square: zero trace, mean 1. By symmetry only
    # 1, m_20 and m_02 survive. Hand solve: int |grad m_20|^2 = (4 / h^4) / 12 and the right-hand
    # side is -|P| Delta m_20 = -2 / h^2, so c_20 = -6 h^2 = -12 for h = sqrt 2.
    ws = workspace(ZOO["square"], 2)
    P = compute_projectors(ws)
    phi = np.zeros(ws.n_loc)
    phi[-1] = 1.0
    coef = P.Pnab @ phi
    assert nabla_oracle_residual(ws, P, phi) <= 1e-13
    exps = [tuple(e) for e in monomial_exponents(2)]
    i20, i02 = exps.index((2, 0)), exps.index((0, 2))
    for j, e in enumerate(exps):
        if e not in ((0, 0), (2, 0), (0, 2)):
            assert abs(coef[j]) < 1e-12
    assert coef[i20] == pytest.approx(-12.0, rel=1e-12)
    assert coef[i02] == pytest.approx(-12.0, rel=1e-12)
    # boundary mean zero: c0 * 4 + c20 * oint m_20 + c02 * oint m_02 = 0, oint m_20 = (2 * 1/4 + 2/12) / 2
    oint_m20 = (2 * 0.25 + 2 * (1 / 12)) / 2
    assert coef[0] == pytest.approx(24.0 * oint_m20 / 4.0, rel=1e-12)


def l2_oracle_residual(ws, P, phi):
    """Enhancement identities of Pi^0 in the scaled frame (both sides carry h^2)."""
    k = ws.k
    xy = frame(ws)
    area = poly_integral([[1.0]], xy)
    pi0 = coeffs_to_poly(ws, P.P0 @ phi)
    pin = coeffs_to_poly(ws, P.Pnab @ phi)
    mom = phi[ws.moment_slice]
    n2 = dim_poly(k - 2)
    res = []
    for beta, m in enumerate(basis_polys(ws)):
        lhs = poly_integral(poly_mul(pi0, m), xy)
        rhs = area * mom[beta] if beta < n2 else poly_integral(poly_mul(pin, m), xy)
        res.append(abs(lhs - rhs))
    return max(res)


def grad_oracle_residual(ws, P, phi, order):
    """int (h Pi^0_order d_a phi) m = -int Pi^0 phi d'_a m + oint phi m n_a, all in the scaled frame."""
    k = ws.k
    xy = frame(ws)
    G = P.Gk if order == k else P.G1
    pi0 = coeffs_to_poly(ws, P.P0 @ phi)
    traces = _trace_values(ws, phi)
    res = []
    for a in (0, 1):
        g = coeffs_to_poly(ws, ws.h * (G[a] @ phi))
        for m in basis_polys(ws, order):
            lhs = poly_integral(poly_mul(g, m), xy)
            vol = poly_integral(poly_mul(pi0, poly_d(m, a)), xy)
            bnd = lagrange_trace_integral(xy, k, traces, lambda x, n, m=m, a=a: poly_eval(m, x) * n[a])
            res.append(abs(lhs - (bnd - vol)))
    return max(res)


@pytest.mark.parametrize("name", ["square", "chevron", "voronoi", "hanging-heptagon", "distorted-hexagon"])
@pytest.mark.parametrize("k", ORDERS)
def test_l2_and_gradient_projectors_virtual_functions(name, k):
    ws = workspace(ZOO[name], k)
    P = compute_projectors(ws)
    for phi in _probe_vectors(ws.n_loc, k):
        assert l2_oracle_residual(ws, P, phi) <= 1e-12
        assert grad_oracle_residual(ws, P, phi, k - 1) <= 1e-10
        assert grad_oracle_residual(ws, P, phi, k) <= 1e-10


def test_l2_stability_random_dofs():
    ws = workspace(ZOO["regular-hexagon"], 2)
    P = compute_projectors(ws)
    rng = np.random.default_rng(5)
    ratios = []
    for _ in range(100):
        phi = rng.standard_normal(ws.n_loc)
        c = P.P0 @ phi
        ratios.append(np.sqrt(c @ ws.mass @ c) / (np.sqrt(ws.area) * np.abs(phi).max()))
    assert max(ratios) < 10.0


def test_stabilizer_symmetric_psd_kernel():
    for name in sorted(ZOO):
        for k in ORDERS:
            ws = workspace(ZOO[name], k)
            P = compute_projectors(ws)
            S = P.S
            assert np.allclose(S, S.T, atol=1e-13)
            ev = np.linalg.eigvalsh(S)
            assert ev.min() >= -1e-12 * np.abs(ev).max()
            # kernel contains the polynomials and nothing more
            assert np.abs(S @ ws.dof_matrix).max() <= 1e-11
            assert (ev > 1e-10).sum() == ws.n_loc - dim_poly(k)


def test_degenerate_sliver_raises():
    ws = workspace(np.array([[0, 0], [1, 0], [0.5, 1e-9]]), 2)
    with pytest.raises(ProjectorError, match="element 0"):
        compute_projectors(ws)


def _random_star(r, jit):
    n = len(r)
    t = np.sort((np.arange(n) + 0.45 * np.array(jit)) / n) * 2 * np.pi
    return np.column_stack([np.array(r) * np.cos(t), np.array(r) * np.sin(t)]) * 0.3 + 0.5


STAR = st.lists(st.floats(0.3, 1.0), min_size=3, max_size=9).flatmap(
    lambda r: st.tuples(st.just(r), st.lists(st.floats(-1, 1), min_size=len(r), max_size=len(r))))


@settings(max_examples=30, deadline=None)
@given(shape=STAR, k=st.sampled_from(ORDERS), seed=st.integers(0, 10**6))
def test_reproduction_and_idempotence_random_polygons(shape, k, seed):
    xy = _random_star(*shape)
    if poly_integral([[1.0]], xy) < 0.02:
        return
    ws = workspace(xy, k)
    P = compute_projectors(ws)
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(dim_poly(k))
    q = coeffs_to_poly(ws, c)
    dofs = ws.interpolate(lambda x: poly_eval(q, (x - ws.centroid) / ws.h))
    norm = np.abs(poly_eval(q, (ws.quad.points - ws.centroid) / ws.h)).max()
    assert value_error(ws, P.Pnab @ dofs, q) <= 1e-12 * max(norm, 1.0)
    assert value_error(ws, P.P0 @ dofs, q) <= 1e-12 * max(norm, 1.0)
    # Pi^nabla is a projector on DOF space
    phi = rng.standard_normal(ws.n_loc)
    proj = ws.dof_matrix @ (P.Pnab @ phi)
    assert np.allclose(ws.dof_matrix @ (P.Pnab @ proj), proj, atol=1e-12 * np.abs(proj).max())
    # boundary-mean constraint
    xy = frame(ws)
    lhs = lagrange_trace_integral(xy, k, _trace_values(ws, phi), lambda x, n: np.ones(len(x)))
    pi = coeffs_to_poly(ws, P.Pnab @ phi)
    rhs = lagrange_trace_integral(xy, k, [np.ones(k + 1)] * ws.n_vert, lambda x, n: poly_eval(pi, x))
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, np.abs(phi).max())


@pytest.mark.parametrize("make", [
    lambda: generate_distorted_hex(4, 0.2, seed=7),
    lambda: generate_nonconvex(3),
    lambda: generate_composite_hanging(2, 4, coarse_kind="nonconvex"),
    lambda: generate_voronoi("lshape", 4, seed=3),
], ids=["hex", "nonconvex", "composite", "lshape-voronoi"])
def test_reproduction_every_element_of_families(make):
    mesh = make()
    for k in ORDERS:
        for e in range(mesh.n_cells):
            ws = ElementWorkspace(mesh, e, k)
            P = compute_projectors(ws)
            D = ws.dof_matrix               # DOFs of each scaled monomial, column by column
            V = ws.basis.values(ws.quad.points)
            assert np.abs(V @ (P.Pnab @ D) - V).max() <= 1e-12
            assert np.abs(V @ (P.P0 @ D) - V).max() <= 1e-12


def test_edge_interpolation_reproduces_degree_k_traces():
    ws = workspace(ZOO["voronoi"], 3)
    t = gauss_lobatto_nodes(3)
    for ed in ws.edges:
        pa = ws.coords[ed.dofs[0]]
        s = np.linalg.norm(ed.points - pa, axis=1) / ed.length
        assert np.allclose(ed.interp @ (t**3 - 2 * t), s**3 - 2 * s, atol=1e-14)
        assert ed.weights.sum() == pytest.approx(ed.length, rel=1e-14)
