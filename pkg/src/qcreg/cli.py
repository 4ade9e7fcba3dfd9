"""Command-line interface: parameterize, lbs, register, synth, pipeline."""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import __version__
from .beltrami import BoundaryCondition, lbs_residual, lbs_solve, read_mu_csv, write_mu_csv
from .landmarks import read_landmarks, resample_curve, write_landmarks, LandmarkSet
from .mesh import load_mesh, load_planar, save_mesh, save_planar
from .parameterize import disk_conformal_parameterize
from .pipeline import read_endpoints, run_batch
from .registration import RegistrationParams, register
from .report import write_report, write_table_csv
from .spectral import write_grid_csv
from .synth import SynthConfig, random_smooth_mu, synthetic_brain

logger = logging.getLogger(__name__)


def _cmd_parameterize(args) -> int:
    mesh = load_mesh(args.infile)
    param = disk_conformal_parameterize(mesh, max_iter=args.max_iter, tol=args.tol)
    save_planar(param.planar, args.out)
    if args.report:
        write_report({
            "command": "parameterize",
            "input": str(args.infile),
            "vertices": mesh.n_vertices,
            "faces": mesh.n_faces,
            "mean_mu_per_iter": [m for m, _ in param.history],
            "max_mu_per_iter": [m for _, m in param.history],
            "converged": param.converged,
            "pinned_vertex": param.pinned_vertex,
        }, args.report)
    print(f"parameterized {args.infile}: mean |mu| = {param.mean_mu:.6g}, "
          f"converged = {param.converged}")
    return 0


def _cmd_lbs(args) -> int:
    planar = load_planar(args.mesh)
    mu = read_mu_csv(args.mu)
    if len(mu) != planar.base.n_faces:
        raise SystemExit(f"mu has {len(mu)} entries for {planar.base.n_faces} faces")
    loop = planar.base.boundary
    if args.bc == "circle":
        pin = int(loop[0])
        bc = BoundaryCondition.circle(pin, planar.uv[pin])
    else:
        bc = BoundaryCondition.fixed_identity(planar)
    mapped = lbs_solve(planar, mu, bc)
    save_planar(mapped, args.out)
    if args.report:
        write_report({
            "command": "lbs",
            "boundary_mode": args.bc,
            "residual": lbs_residual(planar, mu, mapped.uv),
            "folds": mapped.fold_count(),
        }, args.report)
    print(f"lbs: wrote {args.out} ({mapped.fold_count()} folds)")
    return 0


def _cmd_register(args) -> int:
    disk = load_planar(args.disk)
    lm = read_landmarks(args.landmarks)
    params = RegistrationParams(alpha=args.alpha, beta=args.beta, gamma=args.gamma,
                                eta=args.eta, rho_boundary=args.rho_boundary,
                                max_outer=args.max_outer, tol=args.tol,
                                smoothing_steps=args.smoothing_steps)
    result = register(disk, lm, params)
    save_planar(result.map, args.out)
    if args.mu:
        write_mu_csv(result.mu, args.mu)
    if args.report:
        doc = result.metrics.to_dict()
        doc["command"] = "register"
        doc["loss_trace"] = [list(row) for row in result.loss_trace]
        doc["converged"] = result.converged
        write_report(doc, args.report)
    m = result.metrics
    print(f"registered: mean |mu| = {m.mean_mu:.6g}, landmark RMSE = "
          f"{m.landmark_rmse:.6g}, time = {m.wall_time_seconds:.2f}s")
    return 0


def _cmd_synth(args) -> int:
    cfg = SynthConfig(seed=args.seed, grid_n=args.grid_n, amplitude=args.amplitude,
                      cutoff=args.cutoff)
    grid = random_smooth_mu(cfg)
    write_grid_csv(grid, f"{args.out_prefix}_mu.csv")

    brain = synthetic_brain(args.seed, args.bumps)
    save_mesh(brain.mesh, f"{args.out_prefix}_mesh.off")

    param = disk_conformal_parameterize(brain.mesh)
    curves = [resample_curve(param.planar.uv[path], args.points_per_curve)
              for path in brain.valley_vertex_paths]
    write_landmarks(LandmarkSet.from_curves(curves), f"{args.out_prefix}_landmarks.txt")
    print(f"synth: wrote {args.out_prefix}_mesh.off, _mu.csv, _landmarks.txt "
          f"(generator numpy-PCG64, seed {args.seed})")
    return 0


def _cmd_pipeline(args) -> int:
    control = load_mesh(args.control)
    subjects = [(p.rsplit("/", 1)[-1].rsplit(".", 1)[0], load_mesh(p)) for p in args.subjects]
    endpoints = read_endpoints(args.endpoints)
    targets = read_landmarks(args.control_landmarks) if args.control_landmarks else None
    params = RegistrationParams(alpha=args.alpha, beta=args.beta, gamma=args.gamma)
    report = run_batch(control, subjects, endpoints, params=params, m=args.points_per_curve,
                       workdir=args.workdir, resume=args.resume, control_targets=targets)
    write_report(report, args.report)
    if args.summary_csv and "aggregate" in report:
        write_table_csv([report["aggregate"]["table"]], args.summary_csv)
    n_ok = len(report["entries"])
    n_err = len(report["errors"])
    print(f"pipeline: {n_ok} subjects registered, {n_err} failed; report at {args.report}")
    return 0 if n_err == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qcreg",
                                description="Quasi-conformal registration of disk meshes")
    p.add_argument("--version", action="version", version=f"qcreg {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="INFO-level logging")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("parameterize", help="conformal disk parameterization")
    q.add_argument("--in", dest="infile", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--report")
    q.add_argument("--max-iter", type=int, default=20)
    q.add_argument("--tol", type=float, default=1e-4)
    q.set_defaults(func=_cmd_parameterize)

    q = sub.add_parser("lbs", help="reconstruct a map from a Beltrami field")
    q.add_argument("--mesh", required=True)
    q.add_argument("--mu", required=True)
    q.add_argument("--bc", choices=("circle", "fixed"), default="circle")
    q.add_argument("--out", required=True)
    q.add_argument("--report")
    q.set_defaults(func=_cmd_lbs)

    q = sub.add_parser("register", help="landmark-constrained registration")
    q.add_argument("--disk", required=True)
    q.add_argument("--landmarks", required=True)
    q.add_argument("--alpha", type=float, default=1.0)
    q.add_argument("--beta", type=float, default=1.0)
    q.add_argument("--gamma", type=float, default=1e4)
    q.add_argument("--eta", type=float, default=1.0)
    q.add_argument("--rho-boundary", type=float, default=1e-8)
    q.add_argument("--max-outer", type=int, default=50)
    q.add_argument("--tol", type=float, default=1e-6)
    q.add_argument("--smoothing-steps", type=int, default=10)
    q.add_argument("--out", required=True)
    q.add_argument("--mu")
    q.add_argument("--report")
    q.set_defaults(func=_cmd_register)

    q = sub.add_parser("synth", help="synthetic brain, smooth mu grid, landmarks")
    q.add_argument("--seed", type=int, required=True)
    q.add_argument("--amplitude", type=float, default=0.3)
    q.add_argument("--cutoff", type=int, default=4)
    q.add_argument("--grid-n", type=int, default=64)
    q.add_argument("--bumps", type=int, default=3)
    q.add_argument("--points-per-curve", type=int, default=16)
    q.add_argument("--out-prefix", required=True)
    q.set_defaults(func=_cmd_synth)

    q = sub.add_parser("pipeline", help="batch registration onto a control surface")
    q.add_argument("--control", required=True)
    q.add_argument("--subjects", nargs="+", required=True)
    q.add_argument("--endpoints", required=True)
    q.add_argument("--control-landmarks")
    q.add_argument("--workdir")
    q.add_argument("--resume", action="store_true")
    q.add_argument("--report", required=True)
    q.add_argument("--summary-csv")
    q.add_argument("--alpha", type=float, default=1.0)
    q.add_argument("--beta", type=float, default=1.0)
    q.add_argument("--gamma", type=float, default=1e4)
    q.add_argument("--points-per-curve", type=int, default=16)
    q.set_defaults(func=_cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="raise", under="ignore")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
