"""Reproduce the convergence tables for every mesh family and compare them with the reference values.

Usage: python scripts/run_tables.py [-o OUTDIR] [--k 1 2] [--families hex nonconvex ...]
"""
import argparse
import time
from pathlib import Path

from spbvem.reference import reference_row
from spbvem.verification import run_convergence

NS = {"hex": (5, 10, 20, 40), "nonconvex": (5, 10, 20, 40), "composite": (5, 10, 20, 40),
      "lshape-voronoi": (4, 8, 16, 32)}
FIELDS = ("E_u", "E_p", "E_psi")


def reference_factors(table, family, k):
    """Per row, the measured/reference ratio for each field (None where no reference exists)."""
    out = []
    for row in table.rows:
        ref = reference_row(family, k, row.N)
        if ref is None:
            out.append((row.N, None))
            continue
        out.append((row.N, [getattr(row, f) / ref[i + 1] if getattr(row, f) else None for i, f in enumerate(FIELDS)]))
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("-o", "--output", default="tables", help="directory for the CSV files")
    ap.add_argument("--k", type=int, nargs="+", default=[1, 2])
    ap.add_argument("--families", nargs="+", default=list(NS), choices=list(NS))
    args = ap.parse_args(argv)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    for family in args.families:
        for k in args.k:
            t0 = time.perf_counter()
            table = run_convergence(family, NS[family], k)
            table.write_csv(outdir / f"convergence_{family}_k{k}.csv")
            print(f"\n{family} k={k}  ({time.perf_counter() - t0:.1f} s)")
            print(table.format())
            for N, fac in reference_factors(table, family, k):
                text = "no reference" if fac is None else "  ".join(
                    f"{f}={'-' if x is None else f'{x:.2f}'}" for f, x in zip(FIELDS, fac))
                print(f"  N={N:<3d} measured/reference: {text}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
