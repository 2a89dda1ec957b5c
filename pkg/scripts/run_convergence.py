"""Manufactured-solution convergence sweep over Cauchy-data degrees.

    python3 scripts/run_convergence.py --geometry circle --out-dir results
"""
import argparse
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from igahbem.cli import StudyConfig, write_csv, convergence_table, load_geometry


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--geometry", default="circle")
    ap.add_argument("--degrees", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--start-level", type=int, default=2)
    ap.add_argument("--levels", type=int, default=4)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--out-dir", default="results")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    geo = load_geometry(args.geometry)
    base = StudyConfig("convergence", k=args.k, levels=args.levels, start_level=args.start_level, tol=1e-12)
    for p in args.degrees:
        cfg = replace(base, p=p, out=str(out / f"convergence_{args.geometry}_p{p}.csv"))
        rows = convergence_table(geo, cfg)
        write_csv(["level", "n_dofs", "h", "err_max"], rows, cfg.out)
        err, h = np.array([r[3] for r in rows]), np.array([r[2] for r in rows])
        orders = np.log(err[:-1] / err[1:]) / np.log(h[:-1] / h[1:])
        print(f"p={p}: errors " + " ".join(f"{e:.2e}" for e in err)
              + " | orders " + " ".join(f"{o:.2f}" for o in orders))


if __name__ == "__main__":
    main()
