"""Command-line experiment driver: single solves, convergence and compression sweeps."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .assembly import Assembler, HConfig, K_OP, V_OP
from .discretization import DIRICHLET, NEUMANN, Discretization, GeometryError, build_collocation, signed_area
from .hmatrix import DENSE_GUARD
from .kernels import ElasticKernel, Material
from .nurbs import KnotVector, NurbsCurve
from .solver import BvpCase, ConvergenceError, eval_interior, kelvin_field, solve_case

log = logging.getLogger(__name__)

BUNDLED = ("circle", "tunnel2d")
N_RANDOM_VECTORS = 5


@dataclass
class GeometryFile:
    curves: list
    bcs: list
    material: Material
    sources: list = field(default_factory=list)
    probes: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))


@dataclass
class StudyConfig:
    study: str = "solve"
    p: int | None = None
    k: int = 6
    eta: float = 1.0
    n_min: int = 16
    levels: int = 4
    start_level: int = 1
    tol: float = 1e-8
    out: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.levels < 1:
            raise GeometryError("levels must be >= 1")
        if self.start_level < 0:
            raise GeometryError("start level must be >= 0")

    @property
    def hconfig(self) -> HConfig:
        return HConfig(k=self.k, eta=self.eta, n_min=self.n_min)


def _read_json(source: str) -> dict:
    if source in BUNDLED:
        text = resources.files("igahbem").joinpath("geometries", f"{source}.json").read_text()
    else:
        text = Path(source).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise GeometryError(f"malformed JSON: {exc}") from exc


def load_geometry(source: str) -> GeometryFile:
    """Parse and validate a geometry file (path or bundled name)."""
    doc = _read_json(source)
    if not isinstance(doc, dict) or not doc.get("patches"):
        raise GeometryError("geometry needs a non-empty 'patches' list")
    curves, bcs = [], []
    for e, p in enumerate(doc["patches"]):
        try:
            kv = KnotVector(p["knots"], int(p["degree"]))
            curves.append(NurbsCurve(kv, p["control_points"], p.get("weights")))
        except (KeyError, TypeError, ValueError) as exc:
            raise GeometryError(f"patch {e}: {exc}") from exc
        bc = p.get("bc", DIRICHLET)
        if bc not in (DIRICHLET, NEUMANN):
            raise GeometryError(f"patch {e}: bc must be 'dirichlet' or 'neumann'")
        bcs.append(bc)
    mat = doc.get("material", {})
    try:
        material = Material(float(mat.get("lambda", 1.5)), float(mat.get("mu", 1.0)))
    except ValueError as exc:
        raise GeometryError(str(exc)) from exc
    sources = [(tuple(s["point"]), tuple(s["force"])) for s in doc.get("sources", [])]
    probes = np.array(doc.get("interior_probes", []), float).reshape(-1, 2)
    geo = GeometryFile(curves, bcs, material, sources, probes)
    Discretization(curves, bcs)  # closure, domain and bc checks
    if signed_area(curves) <= 0:
        raise GeometryError("patch loop must be counter-clockwise")
    return geo


def _case(geo: GeometryFile, p, level) -> BvpCase:
    disc = Discretization(geo.curves, geo.bcs, p=p, level=level)
    if geo.sources:
        u, t = kelvin_field(geo.sources, geo.material)
        return BvpCase(disc, g_D=u, g_N=t, material=geo.material)
    zero = lambda x, n: np.zeros((len(x), 2))  # noqa: E731
    return BvpCase(disc, g_D=zero, g_N=zero, material=geo.material)


def write_csv(header, rows, out):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else (v if isinstance(v, str) else f"{v:.17g}") for v in r])
    text = buf.getvalue()
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
    return text


def run_solve(geo: GeometryFile, cfg: StudyConfig):
    """Solve at refinement level ``start_level + levels - 1`` and evaluate the probes."""
    case = _case(geo, cfg.p, cfg.start_level + cfg.levels - 1)
    sol = solve_case(case, cfg.hconfig, cfg.tol)
    U = eval_interior(geo.probes, sol.u, sol.t, case, sol.system.assembler)
    header = ["x", "y", "u1", "u2"]
    rows = [list(x) + list(u) for x, u in zip(geo.probes, U)]
    if geo.sources:
        header += ["u1_ref", "u2_ref", "err_max"]
        ref = kelvin_field(geo.sources, geo.material)[0](geo.probes)
        rows = [r + list(f) + [float(np.abs(u - f).max())] for r, u, f in zip(rows, U, ref)]
    return write_csv(header, rows, cfg.out)


def convergence_table(geo: GeometryFile, cfg: StudyConfig):
    """(level, n_dofs, h, err_max) for each uniform refinement level."""
    if not geo.sources:
        raise GeometryError("convergence study needs exterior sources")
    if len(geo.probes) == 0:
        raise GeometryError("convergence study needs interior probes")
    uex = kelvin_field(geo.sources, geo.material)[0]
    rows = []
    for level in range(cfg.start_level, cfg.start_level + cfg.levels):
        case = _case(geo, cfg.p, level)
        sol = solve_case(case, cfg.hconfig, cfg.tol)
        U = eval_interior(geo.probes, sol.u, sol.t, case, sol.system.assembler)
        err = float(np.abs(U - uex(geo.probes)).max())
        h = float(case.disc.cell_len.max())
        rows.append((level, sol.system.blocks.n_unknowns, h, err))
        log.info("level %d: n=%d err=%.3e (%d its)", level, rows[-1][1], err, sol.iterations)
    return rows


def run_convergence(geo: GeometryFile, cfg: StudyConfig):
    return write_csv(["level", "n_dofs", "h", "err_max"], convergence_table(geo, cfg), cfg.out)


def compression_table(geo: GeometryFile, cfg: StudyConfig):
    """Storage and matvec accuracy of V and K per level.

    ``n_dofs`` counts scalar basis functions of the operator's column space.
    ``matvec_err`` is the largest relative error over seeded random vectors
    against the dense reference, left empty above the dense guard.
    """
    rows = []
    kernel = ElasticKernel(geo.material)
    for level in range(cfg.start_level, cfg.start_level + cfg.levels):
        disc = Discretization(geo.curves, geo.bcs, p=cfg.p, level=level)
        colloc = build_collocation(disc)
        asm = Assembler(disc, kernel, colloc, hcfg=cfg.hconfig)
        for op in (V_OP, K_OP):
            t0 = time.perf_counter()
            H = asm.assemble(op)
            elapsed = time.perf_counter() - t0
            rep = H.storage_report()
            n_rows, n_cols = H.shape
            err = None
            if n_rows * n_cols <= DENSE_GUARD:
                D = Assembler(disc, kernel, colloc).assemble(op, dense=True)
                rng = np.random.default_rng(cfg.seed)
                X = rng.standard_normal((n_cols, N_RANDOM_VECTORS))
                ref = D.matvec(X)
                err = float(np.max(np.linalg.norm(H.matvec(X) - ref, axis=0) / np.linalg.norm(ref, axis=0)))
            n = n_cols // kernel.ncomp
            rows.append((op, level, n, rep.bytes_dense, rep.bytes_H, rep.compression_rate, err))
            log.info("%s level %d: n=%d c_H=%.3f (%.1fs)", op, level, n, rep.compression_rate, elapsed)
    return rows


def run_compression(geo: GeometryFile, cfg: StudyConfig):
    header = ["operator", "level", "n_dofs", "bytes_dense", "bytes_H", "c_H", "matvec_err"]
    return write_csv(header, compression_table(geo, cfg), cfg.out)


STUDIES = {"solve": run_solve, "convergence": run_convergence, "compression": run_compression}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="igahbem", description=__doc__)
    ap.add_argument("--geometry", required=True, help="JSON path or bundled name (circle, tunnel2d)")
    ap.add_argument("--study", choices=sorted(STUDIES), default="solve")
    ap.add_argument("--p", type=int, default=None, help="Cauchy-data degree (default: geometry degree)")
    ap.add_argument("--k", type=int, default=6, help="Chebyshev points per axis")
    ap.add_argument("--eta", type=float, default=1.0)
    ap.add_argument("--nmin", type=int, default=16)
    ap.add_argument("--levels", type=int, default=4, help="number of refinement levels")
    ap.add_argument("--start-level", type=int, default=1, help="first refinement level")
    ap.add_argument("--tol", type=float, default=1e-8, help="GMRES relative tolerance")
    ap.add_argument("--out", default=None, help="CSV output path (default stdout)")
    ap.add_argument("--seed", type=int, default=0, help="seed for random probe vectors")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = StudyConfig(args.study, args.p, args.k, args.eta, args.nmin, args.levels,
                          args.start_level, args.tol, args.out, args.seed)
        geo = load_geometry(args.geometry)
        STUDIES[cfg.study](geo, cfg)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (GeometryError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
