"""Global assembly, boundary conditions and the coupled fixed-point solve.

Unknown layout of the Stokes system: u1 | u2 | p (each ``dofmap.n`` long),
plus one Lagrange multiplier for the pressure mean. The potential is solved
separately by Newton's method with the velocity frozen.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import forms
from .forms import Coefficients, Discretization, StabParams, build_discretization
from .mesh import PolygonalMesh
from .polyspace import interpolate_scalar

log = logging.getLogger(__name__)

LINEAR_RESIDUAL_TOL = 1e-9

# The assembled matrices are structurally symmetric with a nonzero diagonal (the pressure block
# carries L1), so a symmetric minimum-degree ordering without pivoting is tried first. It cuts
# fill several-fold against COLAMD with partial pivoting, which remains the fallback whenever the
# fast factorization fails or misses the residual tolerance.
FAST_LU = dict(permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options=dict(SymmetricMode=True))
ROBUST_LU: dict = {}


class LinearSolveError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, msg, history=()):
        super().__init__(msg)
        self.history = list(history)


@dataclass(frozen=True)
class SolverConfig:
    fixed_point_tol: float = 1e-6
    max_outer: int = 50
    newton_tol: float = 1e-10
    max_newton: int = 30
    linear_solver: str = "direct"     # or "iterative"
    newton_method: str = "newton"     # or "picard"
    stab: StabParams = field(default_factory=StabParams)

    def __post_init__(self):
        for name in ("fixed_point_tol", "newton_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer < 1 or self.max_newton < 1:
            raise ValueError("iteration limits must be >= 1")
        if self.linear_solver not in ("direct", "iterative"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")
        if self.newton_method not in ("newton", "picard"):
            raise ValueError(f"unknown nonlinear method {self.newton_method!r}")


@dataclass(eq=False)
class GlobalSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    n: int                              # scalar DOFs per field
    multiplier: bool = False
    free: np.ndarray | None = None      # retained unknowns after Dirichlet elimination
    fixed: np.ndarray | None = None
    fixed_values: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def expand(self, x_free: np.ndarray) -> np.ndarray:
        """Full unknown vector (multiplier included) from the reduced solution."""
        if self.free is None:
            return x_free
        full = np.zeros(len(self.free) + len(self.fixed))
        full[self.free] = x_free
        full[self.fixed] = self.fixed_values
        return full


@dataclass(eq=False)
class SolutionState:
    u: tuple[np.ndarray, np.ndarray]
    p: np.ndarray
    psi: np.ndarray
    outer_iterations: int = 0
    residual_history: list = field(default_factory=list)
    newton_iterations: list = field(default_factory=list)
    multiplier: float = 0.0


# ----------------------------------------------------------------------------
# linear algebra
# ----------------------------------------------------------------------------


def _check_residual(A, x, b):
    bn = np.abs(b).max() if len(b) else 0.0
    res = np.abs(A @ x - b).max() if len(b) else 0.0
    if not np.all(np.isfinite(x)) or res > LINEAR_RESIDUAL_TOL * max(bn, 1.0):
        raise LinearSolveError(f"linear residual {res:.3e} exceeds tolerance (singular system?)")


def _with_fallback(solve):
    """Run ``solve(lu_options)`` with the fast factorization, retrying with pivoting on failure."""
    try:
        return solve(FAST_LU)
    except LinearSolveError as exc:
        log.debug("fast factorization rejected (%s); retrying with partial pivoting", exc)
        return solve(ROBUST_LU)


def _splu(A, options):
    try:
        return spla.splu(A, **options)
    except RuntimeError as exc:
        raise LinearSolveError(f"sparse factorization failed: {exc}") from None


def solve_bordered(A, b, j: int | None = None) -> np.ndarray:
    """Direct solve of [[K, c], [r^T, 0]] [x; lam] = [b; d] with a dense border.

    A dense border wrecks the sparse LU ordering, so the border is handled by
    hand: K~ = K + gamma e_j e_j^T is factorized once and the two scalars
    lam and x_j follow from a 2x2 system. The result solves the full bordered
    system exactly (checked by residual).
    """
    A = sp.csc_matrix(A)
    m = A.shape[0] - 1
    K = A[:m, :m].tocsc()
    c = A[:m, m].toarray().ravel()
    r = A[m, :m].toarray().ravel()
    bx, d = np.asarray(b[:m], dtype=float), float(b[m])
    if j is None:
        j = int(np.argmax(np.abs(c) * np.abs(r)))
    gamma = max(abs(K[j, j]), np.abs(K[:, j].data).max(initial=0.0), 1e-300)
    Kt = (K + sp.csc_matrix(([gamma], ([j], [j])), shape=(m, m))).tocsc()
    ej = np.zeros(m)
    ej[j] = gamma

    def solve(options):
        lu = _splu(Kt, options)
        a, g, h = (lu.solve(v) for v in (bx, c, ej))
        # x = a - lam g + x_j h with x_j = a_j - lam g_j + x_j h_j and r.x = d
        M2 = np.array([[g[j], 1.0 - h[j]], [r @ g, -(r @ h)]])
        try:
            lam, xj = np.linalg.solve(M2, [a[j], r @ a - d])
        except np.linalg.LinAlgError:
            raise LinearSolveError("singular border system") from None
        x = np.append(a - lam * g + xj * h, lam)
        _check_residual(A, x, b)
        return x

    return _with_fallback(solve)


def linear_solve(A, b, method: str = "direct", bordered: bool = False) -> np.ndarray:
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    if method == "direct" and bordered:
        return solve_bordered(A, b)
    if method == "direct":
        def solve(options):
            x = _splu(A, options).solve(b)
            _check_residual(A, x, b)
            return x

        return _with_fallback(solve)
    if method == "iterative":
        ilu = spla.spilu(A, drop_tol=1e-6, fill_factor=20)
        M = spla.LinearOperator(A.shape, ilu.solve)
        x, info = spla.gmres(A, b, M=M, rtol=1e-13, atol=0.0, restart=200, maxiter=50)
        if info != 0:
            raise LinearSolveError(f"GMRES did not converge (info={info})")
        _check_residual(A, x, b)
        return x
    raise ValueError(f"unknown linear solver {method!r}")


# ----------------------------------------------------------------------------
# Stokes assembly
# ----------------------------------------------------------------------------


class StokesOperator:
    """Caches the psi-independent Stokes blocks of a discretization."""

    def __init__(self, disc: Discretization, coeffs: Coefficients):
        V = disc.view
        self.disc, self.coeffs = disc, coeffs
        self.aV = forms.a_V(V, coeffs.mu)
        self.Bx, self.By = forms.b_blocks(V)
        self.L1 = forms.L1(V)
        self.L3 = forms.L3_blocks(V)
        self.L2lap = forms.L2_lap_blocks(V, coeffs.mu)

    def assemble(self, psi) -> GlobalSystem:
        V, c = self.disc.view, self.coeffs
        cb = forms.c_blocks(V, psi, c.E_field)
        cpl = forms.L2_coupling_blocks(V, psi, c.E_field)
        l2 = [self.L2lap[b] + cpl[b] for b in (0, 1)]
        rv1, rv2, rq = forms.F_pspg(V, c, psi)
        A = sp.bmat([
            [self.aV + cb[0][0] + self.L3[0][0], cb[0][1] + self.L3[0][1], -self.Bx.T],
            [cb[1][0] + self.L3[1][0], self.aV + cb[1][1] + self.L3[1][1], -self.By.T],
            [self.Bx + l2[0], self.By + l2[1], self.L1],
        ], format="csr")
        return GlobalSystem(A, np.concatenate([rv1, rv2, rq]), self.disc.dofmap.n)


def assemble_stokes(disc: Discretization, coeffs: Coefficients, psi_frozen) -> GlobalSystem:
    return StokesOperator(disc, coeffs).assemble(psi_frozen)


def pressure_mean_weights(disc: Discretization) -> np.ndarray:
    """w_i = integral over the domain of Pi^0_k of pressure basis function i."""
    V = disc.view
    return V.val.T @ V.w


def apply_zero_mean_pressure(system: GlobalSystem, weights: np.ndarray) -> GlobalSystem:
    n = system.n
    col = np.zeros(system.size)
    col[2 * n:3 * n] = weights
    c = sp.csr_matrix(col[:, None])
    A = sp.bmat([[system.matrix, c], [c.T, None]], format="csr")
    return replace(system, matrix=A, rhs=np.append(system.rhs, 0.0), multiplier=True)


def apply_dirichlet(system: GlobalSystem, fixed: np.ndarray, values: np.ndarray) -> GlobalSystem:
    """Eliminate ``fixed`` unknowns, lifting their prescribed values into the RHS."""
    fixed = np.asarray(fixed, dtype=int)
    mask = np.ones(system.size, dtype=bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    A = system.matrix
    A_f = A[free]
    rhs = system.rhs[free] - A_f[:, fixed] @ values
    return replace(system, matrix=A_f[:, free].tocsr(), rhs=rhs, free=free, fixed=fixed,
                   fixed_values=np.asarray(values, dtype=float))


def _check_tags(mesh: PolygonalMesh):
    bad = {t for t in mesh.boundary_tags.values() if t != "dirichlet"}
    if bad:
        raise ValueError(f"unsupported boundary tags {sorted(bad)}; only 'dirichlet' is implemented")


@dataclass
class BoundaryData:
    """Dirichlet traces; ``None`` means homogeneous."""

    u: Callable | None = None      # x -> (n, 2)
    psi: Callable | None = None    # x -> (n,)

    def velocity_values(self, disc: Discretization) -> np.ndarray:
        b = disc.dofmap.boundary
        if self.u is None:
            return np.zeros(2 * len(b))
        vals = np.asarray(self.u(disc.dofmap.node_coords[b]), dtype=float)
        return np.concatenate([vals[:, 0], vals[:, 1]])

    def psi_values(self, disc: Discretization) -> np.ndarray:
        b = disc.dofmap.boundary
        if self.psi is None:
            return np.zeros(len(b))
        return np.asarray(self.psi(disc.dofmap.node_coords[b]), dtype=float)


def solve_stokes(op: StokesOperator, psi, bc: BoundaryData, weights, method="direct"):
    disc = op.disc
    n, b = disc.dofmap.n, disc.dofmap.boundary
    sysm = apply_zero_mean_pressure(op.assemble(psi), weights)
    sysm = apply_dirichlet(sysm, np.concatenate([b, n + b]), bc.velocity_values(disc))
    x = sysm.expand(linear_solve(sysm.matrix, sysm.rhs, method, bordered=True))
    return x[:n], x[n:2 * n], x[2 * n:3 * n], x[3 * n]


# ----------------------------------------------------------------------------
# Poisson-Boltzmann
# ----------------------------------------------------------------------------


def solve_pb_newton(disc: Discretization, coeffs: Coefficients, u_frozen, psi_init,
                    config: SolverConfig = SolverConfig(), bc: BoundaryData | None = None,
                    K=None, rhs=None):
    """Newton iteration for a_p + c_skew(u) + d(psi) = g_h; returns (psi, iterations)."""
    V = disc.view
    bc = bc or BoundaryData()
    if K is None:
        K = forms.a_p(V, coeffs.eps) + forms.c_skew(V, *u_frozen)
    if rhs is None:
        rhs = forms.g_h(V, coeffs)
    b = disc.dofmap.boundary
    free = np.setdiff1d(np.arange(disc.dofmap.n), b)
    psi = np.array(psi_init, dtype=float)
    psi[b] = bc.psi_values(disc)
    K = K.tocsr()
    Kff = K[free][:, free]
    history = []
    for it in range(config.max_newton + 1):
        R = (K @ psi + forms.d_h(V, psi, coeffs) - rhs)[free]
        history.append(float(np.abs(R).max()))
        if history[-1] <= config.newton_tol:
            return psi, it
        if it == config.max_newton:
            break
        if config.newton_method == "newton":
            J = Kff + forms.d_jacobian(V, psi, coeffs)[free][:, free]
            psi[free] -= linear_solve(J, R, config.linear_solver)
        else:
            # Picard: freeze kappa(psi)/psi as a positive reaction coefficient
            s = V.val @ psi
            ratio = np.where(np.abs(s) > 1e-12, coeffs.kappa(s) / np.where(s == 0, 1, s),
                             coeffs.alpha0 * coeffs.alpha1)
            J = (K + forms.wmat(V.val, V.w * ratio, V.val)).tocsr()
            rhs_f = rhs[free] - (J[free][:, b] @ psi[b])
            psi[free] = linear_solve(J[free][:, free], rhs_f, config.linear_solver)
    raise ConvergenceError(f"Newton did not converge in {config.max_newton} iterations", history)


def broken_h1(disc: Discretization, v) -> float:
    V = disc.view
    gx, gy = V.g1[0] @ v, V.g1[1] @ v
    return float(np.sqrt(V.w @ (gx**2 + gy**2)))


def coupled_fixed_point(disc: Discretization, coeffs: Coefficients,
                        config: SolverConfig = SolverConfig(), bc: BoundaryData | None = None,
                        psi0=None) -> SolutionState:
    """Outer iteration psi -> (u, p) -> psi until both increments fall below the tolerance."""
    _check_tags(disc.mesh)
    bc = bc or BoundaryData()
    n = disc.dofmap.n
    op = StokesOperator(disc, coeffs)
    weights = pressure_mean_weights(disc)
    aP = forms.a_p(disc.view, coeffs.eps)
    gvec = forms.g_h(disc.view, coeffs)
    psi = np.zeros(n) if psi0 is None else np.array(psi0, dtype=float)
    u_old = None
    history, newton_its = [], []
    for it in range(1, config.max_outer + 1):
        u1, u2, p, lam = solve_stokes(op, psi, bc, weights, config.linear_solver)
        K = aP + forms.c_skew(disc.view, u1, u2)
        psi_new, nits = solve_pb_newton(disc, coeffs, (u1, u2), psi, config, bc, K=K, rhs=gvec)
        newton_its.append(nits)
        d_psi = broken_h1(disc, psi_new - psi)
        d_u = np.inf if u_old is None else float(np.abs(np.concatenate([u1, u2]) - u_old).max())
        history.append((d_psi, d_u))
        log.debug("outer %d: |dpsi|_1=%.3e |du|_inf=%.3e newton=%d", it, d_psi, d_u, nits)
        psi, u_old = psi_new, np.concatenate([u1, u2])
        if d_psi <= config.fixed_point_tol and d_u <= config.fixed_point_tol:
            return SolutionState((u1, u2), p, psi, it, history, newton_its, float(lam))
    raise ConvergenceError(f"fixed point did not converge in {config.max_outer} iterations", history)


def solve_problem(mesh: PolygonalMesh, k: int, coeffs: Coefficients, config: SolverConfig = SolverConfig(),
                  bc: BoundaryData | None = None) -> tuple[Discretization, SolutionState]:
    disc = build_discretization(mesh, k, config.stab)
    return disc, coupled_fixed_point(disc, coeffs, config, bc)


def interpolate_state(disc: Discretization, u: Callable, p: Callable, psi: Callable) -> SolutionState:
    """DOF interpolant of exact fields, packaged as a state."""
    m, dm = disc.mesh, disc.dofmap
    u1 = interpolate_scalar(m, dm, lambda x: u(x)[:, 0])
    u2 = interpolate_scalar(m, dm, lambda x: u(x)[:, 1])
    return SolutionState((u1, u2), interpolate_scalar(m, dm, p), interpolate_scalar(m, dm, psi))
