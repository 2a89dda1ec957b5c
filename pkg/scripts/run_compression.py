"""Compression sweep of V and K under uniform refinement.

    python3 scripts/run_compression.py --geometry circle --out-dir results
"""
import argparse
import logging
from pathlib import Path

import numpy as np

from igahbem.cli import StudyConfig, write_csv, compression_table, load_geometry

HEADER = ["operator", "level", "n_dofs", "bytes_dense", "bytes_H", "c_H", "matvec_err"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--geometry", default="circle")
    ap.add_argument("--start-level", type=int, default=6)
    ap.add_argument("--levels", type=int, default=4)
    ap.add_argument("--k", type=int, default=6)
    ap.add_argument("--eta", type=float, default=1.0)
    ap.add_argument("--nmin", type=int, default=16)
    ap.add_argument("--out-dir", default="results")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = StudyConfig("compression", k=args.k, eta=args.eta, n_min=args.nmin, levels=args.levels,
                      start_level=args.start_level, out=str(out / f"compression_{args.geometry}.csv"))
    rows = compression_table(load_geometry(args.geometry), cfg)
    write_csv(HEADER, rows, cfg.out)
    for op, level, n, _, bytes_H, c_H, err in rows:
        e = "n/a" if err is None else f"{err:.1e}"
        print(f"{op} n={n:5d} c_H={c_H:6.2f} bytes/(n log2 n)={bytes_H / (n * np.log2(n)):6.1f} matvec_err={e}")


if __name__ == "__main__":
    main()
