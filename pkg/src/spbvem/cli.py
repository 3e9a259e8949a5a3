"""Command-line drivers: ``mesh``, ``convergence`` and ``solve``.

Every option can also come from a JSON file given with ``--config``; flags
given explicitly on the command line win. Exit codes: 0 success,
2 invalid input, 3 solver non-convergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .fileio import read_vtk_header, solution_point_data, write_provenance, write_vtk
from .forms import Coefficients, SolutionBlowUp, StabParams
from .mesh import (MeshError, generate_composite_hanging, generate_distorted_hex, generate_nonconvex,
                   generate_structured, generate_voronoi, read_mesh, write_mesh)
from .solver import ConvergenceError, LinearSolveError, SolverConfig
from .verification import (FAMILIES, VORONOI_LLOYD_ITERS, error_norms, example1_case, family_domain,
                           make_mesh, pressure_mean, run_convergence, solve_case)

log = logging.getLogger("spbvem")

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3
MESH_FAMILIES = FAMILIES + ("voronoi", "lshape")


@dataclass
class RunConfig:
    family: str = "hex"
    n: list = field(default_factory=lambda: [5, 10, 20, 40])
    seed: int = 0
    k: int = 1
    mu: float = 1.0
    eps: float = 1.0
    E: list = field(default_factory=lambda: [0.0, -1.0])
    alpha0: float = 1.0
    alpha1: float = 1.0
    c_tau: float = StabParams.c_tau
    c_delta: float = StabParams.c_delta
    fixed_point_tol: float = 1e-6
    max_outer: int = 50
    newton_tol: float = 1e-10
    max_newton: int = 30
    linear_solver: str = "direct"
    distortion: float = 0.2
    lloyd_iters: int = VORONOI_LLOYD_ITERS
    coarse: int | None = None
    fine: int | None = None
    rate_tol: float = 0.2
    mesh: str | None = None
    output: str = "out"

    def validate(self, command: str) -> None:
        fams = MESH_FAMILIES if command == "mesh" else FAMILIES
        if self.family not in fams:
            raise ValueError(f"unknown family {self.family!r}; choose from {', '.join(fams)}")
        if self.k not in (1, 2, 3):
            raise ValueError("k must be 1, 2 or 3")
        if not self.n or any(int(v) < 1 for v in self.n):
            raise ValueError("--n values must be positive integers")
        if len(self.E) != 2:
            raise ValueError("E needs two components")
        if not 0.0 <= self.distortion <= 0.3:
            raise ValueError("distortion must lie in [0, 0.3]")
        if self.rate_tol <= 0:
            raise ValueError("rate_tol must be positive")
        self.solver_config()          # raises on bad tolerances
        self.coefficients()

    def stab(self) -> StabParams:
        return StabParams(self.c_tau, self.c_delta)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(self.fixed_point_tol, self.max_outer, self.newton_tol, self.max_newton,
                            self.linear_solver, stab=self.stab())

    def coefficients(self) -> dict:
        kw = dict(mu=self.mu, eps=self.eps, E_field=tuple(self.E), alpha0=self.alpha0, alpha1=self.alpha1)
        Coefficients(**kw)
        return kw


def _add_common(p: argparse.ArgumentParser, solver: bool) -> None:
    p.add_argument("--config", help="JSON file with option values")
    p.add_argument("--family", help=f"mesh family ({', '.join(MESH_FAMILIES)})")
    p.add_argument("--n", type=int, nargs="+", help="resolution(s) N, h = 1/N")
    p.add_argument("--seed", type=int)
    p.add_argument("--output", "-o", help="output file (mesh) or directory")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--lloyd-iters", type=int, dest="lloyd_iters", help="Lloyd sweeps for Voronoi meshes")
    if not solver:
        p.add_argument("--distortion", type=float)
        p.add_argument("--coarse", type=int)
        p.add_argument("--fine", type=int)
        return
    p.add_argument("--k", type=int, help="VEM order (1, 2 or 3)")
    p.add_argument("--mu", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--E", type=float, nargs=2, metavar=("EX", "EY"))
    p.add_argument("--alpha0", type=float)
    p.add_argument("--alpha1", type=float)
    p.add_argument("--c-tau", type=float, dest="c_tau")
    p.add_argument("--c-delta", type=float, dest="c_delta")
    p.add_argument("--fixed-point-tol", type=float, dest="fixed_point_tol")
    p.add_argument("--max-outer", type=int, dest="max_outer")
    p.add_argument("--newton-tol", type=float, dest="newton_tol")
    p.add_argument("--max-newton", type=int, dest="max_newton")
    p.add_argument("--linear-solver", choices=("direct", "iterative"), dest="linear_solver")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spbvem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    pm = sub.add_parser("mesh", help="generate a mesh and write it as JSON")
    _add_common(pm, solver=False)
    pc = sub.add_parser("convergence", help="manufactured-solution convergence study")
    _add_common(pc, solver=True)
    pc.add_argument("--rate-tol", type=float, dest="rate_tol")
    ps = sub.add_parser("solve", help="solve once and export fields as legacy VTK")
    _add_common(ps, solver=True)
    ps.add_argument("--mesh", help="mesh JSON file (overrides --family/--n)")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    if args.config:
        data = json.loads(Path(args.config).read_text())
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key, val in data.items():
            setattr(cfg, key, val)
    for key, val in vars(args).items():
        if key in known and val is not None:
            setattr(cfg, key, val)
    if isinstance(cfg.n, int):
        cfg.n = [cfg.n]
    cfg.n = [int(v) for v in cfg.n]
    return cfg


def cmd_mesh(cfg: RunConfig) -> int:
    N = cfg.n[0]
    fam = cfg.family
    if fam == "hex":
        mesh = generate_distorted_hex(N, cfg.distortion, cfg.seed)
    elif fam == "nonconvex":
        mesh = generate_nonconvex(N)
    elif fam == "composite":
        coarse = cfg.coarse or N
        mesh = generate_composite_hanging(coarse, cfg.fine or 2 * coarse)
    elif fam in ("voronoi", "lshape-voronoi"):
        mesh = generate_voronoi("lshape" if fam == "lshape-voronoi" else "square", N, cfg.lloyd_iters, cfg.seed)
    else:
        mesh = generate_structured("lshape" if fam == "lshape" else "square", N)
    out = Path(cfg.output if cfg.output.endswith(".json") else Path(cfg.output) / "mesh.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_mesh(mesh, out)
    write_provenance(out.parent, asdict(cfg))
    print(f"wrote {out}: {mesh.n_cells} elements, {mesh.n_vertices} vertices, h = {mesh.h:.4g}")
    return EXIT_OK


def cmd_convergence(cfg: RunConfig) -> int:
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    table = run_convergence(cfg.family, cfg.n, cfg.k, cfg.solver_config(), cfg.seed,
                            lloyd_iters=cfg.lloyd_iters, **cfg.coefficients())
    csv_path = outdir / f"convergence_{cfg.family}_k{cfg.k}.csv"
    table.write_csv(csv_path)
    write_provenance(outdir, asdict(cfg))
    print(table.format())
    failed = [r.N for r in table.rows if r.E_u is None]
    rates = table.final_rates()
    if len(table.rows) < 2 or any(v is None for v in rates.values()):
        print(f"SUMMARY {cfg.family} k={cfg.k}: rates undefined (need two solved rows)")
    else:
        ok = all(abs(v - cfg.k) <= cfg.rate_tol for v in rates.values())
        shown = " ".join(f"{key}={val:.3f}" for key, val in rates.items())
        print(f"SUMMARY {cfg.family} k={cfg.k}: {'PASS' if ok else 'FAIL'} final-pair rates {shown} "
              f"(expected {cfg.k} +/- {cfg.rate_tol})")
    print(f"wrote {csv_path}")
    if failed:
        print(f"rows without convergence: N = {failed}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_solve(cfg: RunConfig) -> int:
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    if cfg.mesh:
        mesh = read_mesh(cfg.mesh)
        domain = "lshape" if abs(mesh.areas.sum() - 0.75) < 1e-10 else "square"
    else:
        mesh = make_mesh(cfg.family, cfg.n[0], cfg.seed, cfg.lloyd_iters)
        domain = family_domain(cfg.family)
    case = example1_case(domain)
    disc, state = solve_case(mesh, cfg.k, case, cfg.solver_config(), **cfg.coefficients())
    eu, ep, es = error_norms(disc, state, case)
    vtk = outdir / "solution.vtk"
    write_vtk(vtk, mesh, solution_point_data(disc, state))
    write_provenance(outdir, asdict(cfg))
    hdr = read_vtk_header(vtk)
    print(f"outer iterations {state.outer_iterations}, Newton steps {state.newton_iterations}")
    print(f"E_u = {eu:.6e}  E_p = {ep:.6e}  E_psi = {es:.6e}  pressure mean = {pressure_mean(disc, state):.2e}")
    print(f"wrote {vtk} ({hdr['n_points']} points, {hdr['n_cells']} cells)")
    return EXIT_OK


COMMANDS = {"mesh": cmd_mesh, "convergence": cmd_convergence, "solve": cmd_solve}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "solve" and cfg.mesh is None:
            cfg.n = cfg.n[:1]
        cfg.validate(args.command)
        return COMMANDS[args.command](cfg)
    except (ConvergenceError, LinearSolveError, SolutionBlowUp) as exc:
        print(f"error: solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, MeshError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
