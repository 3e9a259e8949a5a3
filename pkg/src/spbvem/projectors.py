"""Element projectors Pi^nabla_k, Pi^0_k and the projected gradients.

All projectors are matrices acting on the local DOF vector and returning
coefficients in the element's scaled monomial basis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import MeshError
from .polyspace import ElementWorkspace, derivative_matrices, dim_poly, laplacian_matrix

COND_LIMIT = 1e13


class ProjectorError(MeshError):
    pass


def _solve(A, B, what, ws):
    try:
        if np.linalg.cond(A) > COND_LIMIT:
            raise np.linalg.LinAlgError("ill conditioned")
        return np.linalg.solve(A, B)
    except np.linalg.LinAlgError:
        raise ProjectorError(f"singular {what} system on element {ws.element_id} "
                             "(degenerate geometry?)") from None


def grad_gram(ws: ElementWorkspace) -> np.ndarray:
    """int grad m_a . grad m_b over the element, for a, b in P_k."""
    k, h = ws.k, ws.h
    n1 = dim_poly(k - 1)
    dx, dy = derivative_matrices(k)
    M1 = ws.mass[:n1, :n1]
    return (dx @ M1 @ dx.T + dy @ M1 @ dy.T) / h**2


def compute_nabla_projector(ws: ElementWorkspace):
    """Return (Pnab, G, B) with G @ Pnab = B."""
    k, h, area = ws.k, ws.h, ws.area
    nk = dim_poly(k)
    G = grad_gram(ws)
    B = np.zeros((nk, ws.n_loc))
    if k >= 2:
        lap = laplacian_matrix(k) / h**2          # (nk, n_{k-2})
        B[:, ws.moment_slice] -= area * lap
    G[0, :] = 0.0
    for ed in ws.edges:
        vals = ws.local_basis.values(ed.local_points)
        grads = ws.local_basis.gradients(ed.local_points)
        dn = grads @ ed.normal                     # (ng, nk)
        B[1:, ed.dofs] += (dn[:, 1:] * ed.weights[:, None]).T @ ed.interp
        B[0, ed.dofs] += ed.weights @ ed.interp
        G[0, :] += ed.weights @ vals
    return _solve(G, B, "H1-projection", ws), G, B


def compute_l2_projector(ws: ElementWorkspace, Pnab: np.ndarray) -> np.ndarray:
    """Pi^0_k via the enhancement: degree k-1 and k moments taken from Pi^nabla_k."""
    n2 = dim_poly(ws.k - 2)
    H = ws.mass @ Pnab
    if n2:
        H[:n2, :] = 0.0
        H[:n2, ws.moment_slice] = ws.area * np.eye(n2)
    return _solve(ws.mass, H, "L2-projection", ws)


def compute_grad_l2_projector(ws: ElementWorkspace, order: int, P0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Coefficient matrices (x and y components) of Pi^0_order grad phi, order <= k."""
    nm = dim_poly(order)
    if nm == 0:
        raise ValueError("order must be >= 0")
    Mm = ws.mass[:nm, :nm]
    out = []
    dmats = derivative_matrices(order) if order >= 1 else (np.zeros((1, 0)), np.zeros((1, 0)))
    for a in (0, 1):
        n_lo = dmats[a].shape[1]
        rhs = -(dmats[a] @ ws.mass[:n_lo, :]) @ P0 / ws.h if n_lo else np.zeros((nm, ws.n_loc))
        for ed in ws.edges:
            vals = ws.local_basis.values(ed.local_points)[:, :nm]
            rhs[:, ed.dofs] += (vals * (ed.weights * ed.normal[a])[:, None]).T @ ed.interp
        out.append(_solve(Mm, rhs, "gradient-projection", ws))
    return out[0], out[1]


def dofi_dofi(D: np.ndarray, Pi: np.ndarray) -> np.ndarray:
    """(I - D Pi)^T (I - D Pi): Euclidean product of the DOF residuals."""
    R = np.eye(D.shape[0]) - D @ Pi
    return R.T @ R


@dataclass(frozen=True, eq=False)
class LocalProjectors:
    k: int
    Pnab: np.ndarray
    P0: np.ndarray
    G1: tuple[np.ndarray, np.ndarray]   # Pi^0_{k-1} grad, coefficients in P_{k-1}
    Gk: tuple[np.ndarray, np.ndarray]   # Pi^0_k grad, coefficients in P_k
    lap: np.ndarray                     # div of Pi^0_{k-1} grad, coefficients in P_{k-2}
    S: np.ndarray                       # dofi-dofi stabilizer on (I - Pi^nabla)
    B: np.ndarray
    G: np.ndarray

    @property
    def P0grad(self) -> np.ndarray:
        return np.vstack(self.G1)


def compute_projectors(ws: ElementWorkspace) -> LocalProjectors:
    k = ws.k
    Pnab, G, B = compute_nabla_projector(ws)
    P0 = compute_l2_projector(ws, Pnab)
    G1 = compute_grad_l2_projector(ws, k - 1, P0)
    Gk = compute_grad_l2_projector(ws, k, P0)
    if k >= 2:
        dx, dy = derivative_matrices(k - 1)
        lap = (dx.T @ G1[0] + dy.T @ G1[1]) / ws.h
    else:
        lap = np.zeros((0, ws.n_loc))
    S = dofi_dofi(ws.dof_matrix, Pnab)
    return LocalProjectors(k, Pnab, P0, G1, Gk, lap, S, B, G)
