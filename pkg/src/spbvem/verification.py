"""Manufactured solutions, load derivation, error norms and convergence tables."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as P

from .forms import Coefficients, Discretization, build_discretization
from .mesh import (PolygonalMesh, generate_composite_hanging, generate_distorted_hex,
                   generate_nonconvex, generate_structured, generate_voronoi, is_lshape)
from .polyspace import MonomialBasis, polygon_quadrature
from .solver import BoundaryData, ConvergenceError, SolutionState, SolverConfig, coupled_fixed_point

log = logging.getLogger(__name__)


class Poly2:
    """Bivariate polynomial with coefficients c[i, j] of x^i y^j."""

    def __init__(self, coeffs):
        self.c = np.atleast_2d(np.asarray(coeffs, dtype=float))

    def __call__(self, xy):
        xy = np.atleast_2d(xy)
        return P.polyval2d(xy[:, 0], xy[:, 1], self.c)

    def d(self, axis: int, m: int = 1) -> "Poly2":
        return Poly2(P.polyder(self.c, m, axis=axis)) if self.c.shape[axis] > m else Poly2([[0.0]])

    def __neg__(self):
        return Poly2(-self.c)

    @staticmethod
    def separable(cx, cy) -> "Poly2":
        return Poly2(np.outer(cx, cy))


@dataclass(eq=False)
class ManufacturedCase:
    u: Callable           # (n,2) -> (n,2)
    grad_u: Callable      # (n,2) -> (n,2,2), [:, component, direction]
    lap_u: Callable       # (n,2) -> (n,2)
    p: Callable
    grad_p: Callable
    psi: Callable
    grad_psi: Callable
    lap_psi: Callable
    domain: object = "square"
    p0: float = 0.0
    name: str = ""


def stream_case(stream: Poly2, p: Callable, grad_p: Callable, psi: Poly2, domain="square",
                p0: float = 0.0, name: str = "") -> ManufacturedCase:
    """u = (d xi/dy, -d xi/dx) for a polynomial stream function xi; psi polynomial."""
    u1, u2 = stream.d(1), -stream.d(0)
    g1 = (u1.d(0), u1.d(1))
    g2 = (u2.d(0), u2.d(1))
    l1 = (u1.d(0, 2), u1.d(1, 2))
    l2 = (u2.d(0, 2), u2.d(1, 2))
    gp = (psi.d(0), psi.d(1))
    lp = (psi.d(0, 2), psi.d(1, 2))
    return ManufacturedCase(
        u=lambda x: np.column_stack([u1(x), u2(x)]),
        grad_u=lambda x: np.stack([np.column_stack([g1[0](x), g1[1](x)]),
                                   np.column_stack([g2[0](x), g2[1](x)])], axis=1),
        lap_u=lambda x: np.column_stack([l1[0](x) + l1[1](x), l2[0](x) + l2[1](x)]),
        p=p, grad_p=grad_p, psi=psi,
        grad_psi=lambda x: np.column_stack([gp[0](x), gp[1](x)]),
        lap_psi=lambda x: lp[0](x) + lp[1](x),
        domain=domain, p0=p0, name=name)


def example1_case(domain="square") -> ManufacturedCase:
    """xi = x^3 y^3 (1-x)^3 (1-y)^3, p = sin(pi x) cos(pi x) + p0, psi = x^2 y^2 (x-1)(y-1)."""
    cubic = P.polypow([0.0, 1.0], 3)
    one_minus = P.polypow([1.0, -1.0], 3)
    X = P.polymul(cubic, one_minus)
    xi = Poly2.separable(X, X)
    A = [0.0, 0.0, -1.0, 1.0]                  # x^3 - x^2
    psi = Poly2.separable(A, A)
    # p0 makes the pressure mean vanish: zero on the square, 1/(3 pi) on the L-shape
    p0 = 1.0 / (3.0 * math.pi) if is_lshape(domain) else 0.0

    def p(x):
        x = np.atleast_2d(x)
        return np.sin(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 0]) + p0

    def grad_p(x):
        x = np.atleast_2d(x)
        return np.column_stack([np.pi * np.cos(2 * np.pi * x[:, 0]), np.zeros(len(x))])

    return stream_case(xi, p, grad_p, psi, domain, p0, name="example1")


def polynomial_case(stream, p_coeffs, psi_coeffs, domain="square") -> ManufacturedCase:
    """Fully polynomial data (coefficient arrays c[i, j] of x^i y^j)."""
    pp = Poly2(p_coeffs)
    gp = (pp.d(0), pp.d(1))
    return stream_case(Poly2(stream), pp, lambda x: np.column_stack([gp[0](x), gp[1](x)]),
                       Poly2(psi_coeffs), domain, name="polynomial")


def derive_loads(case: ManufacturedCase, coeffs: Coefficients):
    """f = -mu lap u + grad p + eps lap(psi) E and g = -eps lap psi + u . grad psi + kappa(psi)."""
    E = np.asarray(coeffs.E_field)

    def f(x):
        return -coeffs.mu * case.lap_u(x) + case.grad_p(x) + coeffs.eps * case.lap_psi(x)[:, None] * E

    def g(x):
        adv = np.einsum("ij,ij->i", case.u(x), case.grad_psi(x))
        return -coeffs.eps * case.lap_psi(x) + adv + coeffs.kappa(case.psi(x))

    return f, g


def case_coefficients(case: ManufacturedCase, **kw) -> Coefficients:
    c = Coefficients(**kw)
    c.f, c.g = derive_loads(case, c)
    return c


def case_boundary(case: ManufacturedCase) -> BoundaryData:
    return BoundaryData(u=case.u, psi=case.psi)


def error_norms(disc: Discretization, state: SolutionState, case: ManufacturedCase,
                quad_degree: int | None = None) -> tuple[float, float, float]:
    """(|u - Pi^nabla u_h|_1, ||p - Pi^0 p_h||_0, |psi - Pi^nabla psi_h|_1), element-wise broken."""
    deg = 2 * disc.k + 4 if quad_degree is None else quad_degree
    eu = ep = es = 0.0
    for e, ws in enumerate(disc.workspaces):
        pr = disc.projectors[e]
        dofs = disc.dofmap.element_dofs[e]
        q = polygon_quadrature(ws.coords, deg, e)
        x, w = q.points, q.weights
        G = ws.basis.gradients(x)                  # (nq, nk, 2)
        Vv = ws.basis.values(x)
        gu = case.grad_u(x)
        for a in (0, 1):
            gh = np.einsum("qkd,k->qd", G, pr.Pnab @ state.u[a][dofs])
            eu += w @ np.sum((gu[:, a, :] - gh) ** 2, axis=1)
        ep += w @ (case.p(x) - Vv @ (pr.P0 @ state.p[dofs])) ** 2
        gs = np.einsum("qkd,k->qd", G, pr.Pnab @ state.psi[dofs])
        es += w @ np.sum((case.grad_psi(x) - gs) ** 2, axis=1)
    return math.sqrt(eu), math.sqrt(ep), math.sqrt(es)


def divergence_norm(disc: Discretization, state: SolutionState) -> float:
    """||Pi^0_{k-1} div u_h||_{L2}."""
    V = disc.view
    div = V.g1[0] @ state.u[0] + V.g1[1] @ state.u[1]
    return float(np.sqrt(V.w @ div**2))


def pressure_mean(disc: Discretization, state: SolutionState) -> float:
    V = disc.view
    return float(V.w @ (V.val @ state.p))


# ----------------------------------------------------------------------------
# convergence tables
# ----------------------------------------------------------------------------


def convergence_rates(h, e) -> list:
    """rate_i = log(e_{i-1}/e_i) / log(h_{i-1}/h_i); None where undefined."""
    out = [None]
    for i in range(1, len(e)):
        if e[i - 1] is None or e[i] is None or e[i - 1] <= 0 or e[i] <= 0 or h[i - 1] == h[i]:
            out.append(None)
        else:
            out.append(math.log(e[i - 1] / e[i]) / math.log(h[i - 1] / h[i]))
    return out


COLUMNS = ("h", "E_u", "rate_u", "E_p", "rate_p", "E_psi", "rate_psi", "itr")


@dataclass
class ConvergenceRow:
    N: int
    h: float
    E_u: float | None
    E_p: float | None
    E_psi: float | None
    itr: int | None
    newton: list = field(default_factory=list)
    seconds: float = 0.0
    n_dofs: int = 0
    h_max: float = 0.0
    div_norm: float | None = None


@dataclass
class ConvergenceTable:
    rows: list = field(default_factory=list)
    label: str = ""

    def rates(self, key: str) -> list:
        return convergence_rates([r.h for r in self.rows], [getattr(r, key) for r in self.rows])

    def final_rates(self) -> dict:
        return {key: self.rates(key)[-1] for key in ("E_u", "E_p", "E_psi")}

    def records(self) -> list[dict]:
        ru, rp, rs = self.rates("E_u"), self.rates("E_p"), self.rates("E_psi")
        return [dict(h=r.h, E_u=r.E_u, rate_u=ru[i], E_p=r.E_p, rate_p=rp[i], E_psi=r.E_psi,
                     rate_psi=rs[i], itr=r.itr) for i, r in enumerate(self.rows)]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(COLUMNS)
            for rec in self.records():
                wr.writerow([_fmt(rec[c]) for c in COLUMNS])

    def format(self) -> str:
        lines = ["{:>12} {:>12} {:>7} {:>12} {:>7} {:>12} {:>7} {:>4}".format(*COLUMNS)]
        for rec in self.records():
            lines.append("{:>12} {:>12} {:>7} {:>12} {:>7} {:>12} {:>7} {:>4}".format(
                f"1/{round(1 / rec['h'])}", _fmt(rec["E_u"]), _rate(rec["rate_u"]), _fmt(rec["E_p"]),
                _rate(rec["rate_p"]), _fmt(rec["E_psi"]), _rate(rec["rate_psi"]),
                "" if rec["itr"] is None else rec["itr"]))
        return "\n".join(lines)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{v:.5e}"


def _rate(v) -> str:
    return "" if v is None else f"{v:.3f}"


# Lloyd sweeps for the L-shape Voronoi family; 10 sweeps leave the seed layout visible in the k = 2 rates
VORONOI_LLOYD_ITERS = 30

FAMILIES = ("hex", "nonconvex", "composite", "lshape-voronoi", "square")


def make_mesh(family: str, N: int, seed: int = 0, lloyd_iters: int = VORONOI_LLOYD_ITERS) -> PolygonalMesh:
    """Mesh of the named family at nominal size h = 1/N."""
    if family == "hex":
        return generate_distorted_hex(N, seed=seed)
    if family == "nonconvex":
        return generate_nonconvex(N)
    if family == "composite":
        return generate_composite_hanging(N, 2 * N, coarse_kind="nonconvex")
    if family == "lshape-voronoi":
        return generate_voronoi("lshape", N, lloyd_iters, seed)
    if family == "square":
        return generate_structured("square", N)
    raise ValueError(f"unknown mesh family {family!r}; choose from {FAMILIES}")


def family_domain(family: str) -> str:
    return "lshape" if family == "lshape-voronoi" else "square"


def solve_case(mesh: PolygonalMesh, k: int, case: ManufacturedCase, config: SolverConfig = SolverConfig(),
               **coeff_kw):
    coeffs = case_coefficients(case, **coeff_kw)
    disc = build_discretization(mesh, k, config.stab)
    state = coupled_fixed_point(disc, coeffs, config, case_boundary(case))
    return disc, state


def run_convergence(family: str, Ns, k: int, config: SolverConfig = SolverConfig(), seed: int = 0,
                    case: ManufacturedCase | None = None, lloyd_iters: int = VORONOI_LLOYD_ITERS,
                    **coeff_kw) -> ConvergenceTable:
    case = case or example1_case(family_domain(family))
    table = ConvergenceTable(label=f"{family} k={k}")
    for N in Ns:
        t0 = time.perf_counter()
        mesh = make_mesh(family, N, seed, lloyd_iters)
        try:
            disc, state = solve_case(mesh, k, case, config, **coeff_kw)
        except ConvergenceError as exc:
            log.error("N=%d: %s", N, exc)
            table.rows.append(ConvergenceRow(N, 1.0 / N, None, None, None, None, h_max=mesh.h))
            continue
        eu, ep, es = error_norms(disc, state, case)
        row = ConvergenceRow(N, 1.0 / N, eu, ep, es, state.outer_iterations, state.newton_iterations,
                             time.perf_counter() - t0, 3 * disc.dofmap.n, mesh.h, divergence_norm(disc, state))
        log.info("%s k=%d N=%d: Eu=%.4e Ep=%.4e Epsi=%.4e itr=%d (%.1fs)", family, k, N, eu, ep, es,
                 row.itr, row.seconds)
        table.rows.append(row)
    return table
