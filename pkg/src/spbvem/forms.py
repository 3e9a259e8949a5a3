"""Discrete bilinear and trilinear forms.

Every form is written once against a *quadrature view*: a set of quadrature
points with weights and matrices mapping DOF vectors to projected values
(Pi^0_k), projected gradients (Pi^0_k grad, Pi^0_{k-1} grad) and the divergence
of the projected gradient. An element view (dense, local DOF columns) yields
the local matrices; the stacked global view (sparse, global DOF columns) yields
the assembled matrices directly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .mesh import PolygonalMesh
from .polyspace import DofMap, ElementWorkspace, build_dof_map, dim_poly
from .projectors import LocalProjectors, compute_projectors, dofi_dofi

SINH_LIMIT = 700.0


class SolutionBlowUp(FloatingPointError):
    pass


def _zero_vec(x):
    return np.zeros((len(x), 2))


def _zero(x):
    return np.zeros(len(x))


@dataclass
class Coefficients:
    mu: float = 1.0
    eps: float = 1.0
    E_field: tuple[float, float] = (0.0, -1.0)
    alpha0: float = 1.0
    alpha1: float = 1.0
    f: Callable = field(default=_zero_vec, repr=False)
    g: Callable = field(default=_zero, repr=False)

    def __post_init__(self):
        if not self.mu > 0 or not self.eps > 0:
            raise ValueError("mu and eps must be positive")
        if self.alpha0 < 0 or not self.alpha1 > 0:
            raise ValueError("need alpha0 >= 0 and alpha1 > 0")
        if not np.all(np.isfinite(self.E_field)) or len(self.E_field) != 2:
            raise ValueError("E_field must be a finite 2-vector")
        self.E_field = tuple(float(e) for e in self.E_field)

    def _arg(self, s):
        z = self.alpha1 * np.asarray(s, dtype=float)
        if self.alpha0 and np.any(np.abs(z) > SINH_LIMIT):
            raise SolutionBlowUp("|alpha1 * psi| exceeds 700; the potential iterate has blown up")
        return z

    def kappa(self, s):
        if not self.alpha0:
            return np.zeros(np.shape(s))
        return self.alpha0 * np.sinh(self._arg(s))

    def dkappa(self, s):
        if not self.alpha0:
            return np.zeros(np.shape(s))
        return self.alpha0 * self.alpha1 * np.cosh(self._arg(s))


@dataclass(frozen=True)
class StabParams:
    # tau = c_tau h^2 must stay below h^2 / (16 C_inv^2); C_inv^2 is about 24 for scaled P_k on these meshes
    c_tau: float = 0.0025
    c_delta: float = 1.0

    def __post_init__(self):
        if not self.c_tau > 0 or not self.c_delta > 0:
            raise ValueError("stabilization constants must be positive")

    def tau(self, h):
        return self.c_tau * np.asarray(h, dtype=float) ** 2

    def delta(self, h):
        return self.c_delta * np.asarray(h, dtype=float)


def wmat(A, d, B):
    """A^T diag(d) B for dense or sparse A, B."""
    if sp.issparse(A):
        return (A.T @ sp.diags(d) @ B).tocsr()
    return A.T @ (d[:, None] * B)


@dataclass(eq=False)
class QuadView:
    w: np.ndarray
    xq: np.ndarray
    val: object
    gk: tuple
    g1: tuple
    lap: object
    tau: np.ndarray        # tau_P at each quadrature point
    delta: np.ndarray      # delta_P at each quadrature point
    S: object
    S_tau: object
    S_delta: object
    project: Callable      # values at xq -> values of their Pi^0_k projection at xq

    @property
    def n(self) -> int:
        return self.val.shape[1]


def element_view(ws: ElementWorkspace, P: LocalProjectors, stab: StabParams = StabParams()) -> QuadView:
    V = ws.qvals
    n1, n2 = dim_poly(ws.k - 1), dim_poly(ws.k - 2)
    w = ws.quad.weights
    Minv = np.linalg.inv(ws.mass)
    tau, delta = float(stab.tau(ws.h)), float(stab.delta(ws.h))
    nq = len(w)

    def project(fq):
        return V @ (Minv @ (V.T @ (w * fq)))

    lap = V[:, :n2] @ P.lap if n2 else np.zeros((nq, ws.n_loc))
    return QuadView(w, ws.quad.points, V @ P.P0,
                    (V @ P.Gk[0], V @ P.Gk[1]),
                    (V[:, :n1] @ P.G1[0], V[:, :n1] @ P.G1[1]),
                    lap, np.full(nq, tau), np.full(nq, delta),
                    P.S, tau * P.S, delta * P.S, project)


@dataclass(eq=False)
class Discretization:
    """Mesh, DOF map, per-element workspaces/projectors and the stacked global view."""

    mesh: PolygonalMesh
    dofmap: DofMap
    k: int
    stab: StabParams
    workspaces: list
    projectors: list
    view: QuadView
    elem_rows: list        # quadrature-row slice of each element in the global view


def build_discretization(mesh: PolygonalMesh, k: int, stab: StabParams = StabParams(),
                         quad_degree: int | None = None) -> Discretization:
    dm = build_dof_map(mesh, k)
    wss, projs, views, rows = [], [], [], []
    start = 0
    for e in range(mesh.n_cells):
        ws = ElementWorkspace(mesh, e, k, quad_degree, dm)
        P = compute_projectors(ws)
        v = element_view(ws, P, stab)
        wss.append(ws)
        projs.append(P)
        views.append(v)
        rows.append(slice(start, start + len(v.w)))
        start += len(v.w)
    nq, n = start, dm.n

    def stack(get):
        r, c, d = [], [], []
        for e, v in enumerate(views):
            A = get(v)
            rr, cc = np.nonzero(np.ones_like(A, dtype=bool))
            r.append(rr + rows[e].start)
            c.append(dm.element_dofs[e][cc])
            d.append(A.ravel())
        return sp.csr_matrix((np.concatenate(d), (np.concatenate(r), np.concatenate(c))), shape=(nq, n))

    def stab_sum(scale):
        r, c, d = [], [], []
        for e, v in enumerate(views):
            g = dm.element_dofs[e]
            r.append(np.repeat(g, len(g)))
            c.append(np.tile(g, len(g)))
            d.append((scale(e) * v.S).ravel())
        return sp.csr_matrix((np.concatenate(d), (np.concatenate(r), np.concatenate(c))), shape=(n, n))

    # block-diagonal monomial pieces for the global L2 projection of loads
    Vblk = sp.block_diag([ws.qvals for ws in wss], format="csr")
    Minv = sp.block_diag([np.linalg.inv(ws.mass) for ws in wss], format="csr")
    VblkT = Vblk.T.tocsr()
    w = np.concatenate([v.w for v in views])

    def project(fq):
        return Vblk @ (Minv @ (VblkT @ (w * fq)))

    h = mesh.diameters
    gv = QuadView(
        w, np.vstack([v.xq for v in views]), stack(lambda v: v.val),
        (stack(lambda v: v.gk[0]), stack(lambda v: v.gk[1])),
        (stack(lambda v: v.g1[0]), stack(lambda v: v.g1[1])),
        stack(lambda v: v.lap),
        np.concatenate([v.tau for v in views]), np.concatenate([v.delta for v in views]),
        stab_sum(lambda e: 1.0), stab_sum(lambda e: float(stab.tau(h[e]))),
        stab_sum(lambda e: float(stab.delta(h[e]))), project)
    return Discretization(mesh, dm, k, stab, wss, projs, gv, rows)


# ----------------------------------------------------------------------------
# forms on a quadrature view
# ----------------------------------------------------------------------------


def a_V(V: QuadView, mu: float):
    """mu (Pi^0_{k-1} grad u, Pi^0_{k-1} grad v) + mu S, for one velocity component."""
    return mu * (wmat(V.g1[0], V.w, V.g1[0]) + wmat(V.g1[1], V.w, V.g1[1]) + V.S)


def b_blocks(V: QuadView):
    """B_a with b_h(u, q) = sum_a q^T B_a u_a (rows: pressure, cols: velocity component a)."""
    return wmat(V.val, V.w, V.g1[0]), wmat(V.val, V.w, V.g1[1])


def c_blocks(V: QuadView, psi, E):
    """c_h(psi; u, v) = int (Pi^0 u . Pi^0_k grad psi)(E . Pi^0 v); block [a][b] tests v_a, trials u_b."""
    dpsi = (V.gk[0] @ psi, V.gk[1] @ psi)
    return [[E[a] * wmat(V.val, V.w * dpsi[b], V.val) if E[a] else _zeros_like(V.S) for b in (0, 1)]
            for a in (0, 1)]


def _zeros_like(S):
    return sp.csr_matrix(S.shape) if sp.issparse(S) else np.zeros(S.shape)


def L1(V: QuadView):
    wt = V.w * V.tau
    return wmat(V.gk[0], wt, V.gk[0]) + wmat(V.gk[1], wt, V.gk[1]) + V.S_tau


def L2_lap_blocks(V: QuadView, mu: float):
    """-mu tau (div Pi^0_{k-1} grad u_b, d_b q): the psi-independent part of L2."""
    wt = V.w * V.tau
    return [-mu * wmat(V.g1[b], wt, V.lap) for b in (0, 1)]


def L2_coupling_blocks(V: QuadView, psi, E):
    """tau ((Pi^0 u . Pi^0_{k-1} grad psi) E, Pi^0_{k-1} grad q), split by velocity component."""
    wt = V.w * V.tau
    dpsi = (V.g1[0] @ psi, V.g1[1] @ psi)
    out = []
    for b in (0, 1):
        blk = _zeros_like(V.S)
        for a in (0, 1):
            if E[a]:
                blk = blk + E[a] * wmat(V.g1[a], wt * dpsi[b], V.val)
        out.append(blk)
    return out


def L2_blocks(V: QuadView, psi, coeffs: Coefficients):
    """PSPG momentum-residual rows: block b maps velocity component b to pressure rows."""
    lap = L2_lap_blocks(V, coeffs.mu)
    cpl = L2_coupling_blocks(V, psi, coeffs.E_field)
    return [lap[b] + cpl[b] for b in (0, 1)]


def L3_blocks(V: QuadView):
    wd = V.w * V.delta
    blocks = [[wmat(V.g1[a], wd, V.g1[b]) for b in (0, 1)] for a in (0, 1)]
    blocks[0][0] = blocks[0][0] + V.S_delta
    blocks[1][1] = blocks[1][1] + V.S_delta
    return blocks


def momentum_source(V: QuadView, coeffs: Coefficients, psi):
    """Pi^0_k f + (g - kappa(Pi^0_k psi)) E at the quadrature points, shape (nq, 2)."""
    fq = np.asarray(coeffs.f(V.xq), dtype=float)
    s = np.asarray(coeffs.g(V.xq), dtype=float) - coeffs.kappa(V.val @ psi)
    E = coeffs.E_field
    return np.column_stack([V.project(fq[:, a]) + s * E[a] for a in (0, 1)])


def F_pspg(V: QuadView, coeffs: Coefficients, psi):
    """Right-hand sides (rhs_v1, rhs_v2, rhs_q)."""
    src = momentum_source(V, coeffs, psi)
    rv = [V.val.T @ (V.w * src[:, a]) for a in (0, 1)]
    wt = V.w * V.tau
    rq = V.g1[0].T @ (wt * src[:, 0]) + V.g1[1].T @ (wt * src[:, 1])
    return rv[0], rv[1], rq


def a_p(V: QuadView, eps: float):
    return eps * (wmat(V.g1[0], V.w, V.g1[0]) + wmat(V.g1[1], V.w, V.g1[1]) + V.S)


def c_p(V: QuadView, u1, u2):
    """c_p(u; phi, xi) = int (Pi^0 u . Pi^0_{k-1} grad phi) Pi^0 xi; rows xi, cols phi."""
    return wmat(V.val, V.w * (V.val @ u1), V.g1[0]) + wmat(V.val, V.w * (V.val @ u2), V.g1[1])


def c_skew(V: QuadView, u1, u2):
    C = c_p(V, u1, u2)
    return 0.5 * (C - C.T)


def d_h(V: QuadView, psi, coeffs: Coefficients):
    return V.val.T @ (V.w * coeffs.kappa(V.val @ psi))


def d_jacobian(V: QuadView, psi, coeffs: Coefficients):
    return wmat(V.val, V.w * coeffs.dkappa(V.val @ psi), V.val)


def g_h(V: QuadView, coeffs: Coefficients):
    return V.val.T @ (V.w * np.asarray(coeffs.g(V.xq), dtype=float))


def dofi_dofi_stabilizer(D: np.ndarray, Pi: np.ndarray) -> np.ndarray:
    return dofi_dofi(D, Pi)


@dataclass(eq=False)
class LocalStokesBlocks:
    A: np.ndarray       # velocity-velocity: a_V + c_h + L3, components stacked (u1 | u2)
    Bt: np.ndarray      # velocity rows, pressure cols: -b_h
    B: np.ndarray       # pressure rows, velocity cols: +b_h
    C: np.ndarray       # L1
    L2row: np.ndarray   # pressure rows, velocity cols
    rhs_v: np.ndarray
    rhs_q: np.ndarray


def local_stokes_blocks(V: QuadView, coeffs: Coefficients, psi) -> LocalStokesBlocks:
    aV = a_V(V, coeffs.mu)
    c = c_blocks(V, psi, coeffs.E_field)
    l3 = L3_blocks(V)
    A = np.block([[aV * (a == b) + c[a][b] + l3[a][b] for b in (0, 1)] for a in (0, 1)])
    Bx, By = b_blocks(V)
    B = np.hstack([Bx, By])
    l2 = L2_blocks(V, psi, coeffs)
    rv1, rv2, rq = F_pspg(V, coeffs, psi)
    return LocalStokesBlocks(A, -B.T, B, L1(V), np.hstack(l2), np.concatenate([rv1, rv2]), rq)
