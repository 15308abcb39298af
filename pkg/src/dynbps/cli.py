"""Command line surface: encode, recover, bench, group, reward.

Exit codes are a stable contract: 0 success, 2 usage error, 3 input-data
error, 4 numerical/correctness failure. Data goes to stdout unless --out
is given; diagnostics go to stderr. Every command is deterministic given
its flags and seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .bench import compare_backends, run_benchmark
from .bvh import build_bvh
from .encoding import (DEFAULT_GRID_N, DEFAULT_HALF_EXTENT, check_grid_match,
                       default_workers, encode_dynamic, encoding_to_csv,
                       encoding_to_json, make_grid, parse_encoding_csv,
                       parse_encoding_json)
from .errors import DynbpsError
from .mesh import load_mesh
from .objectives import RewardParams, TrajectoryStep, reward_terms
from .recovery import RecoveryConfig, _perturbed, recover_pose
from .rotations import (Pose, box_symmetry_group, matrix_to_quaternion,
                        octahedral_group)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")


def _info(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load_pose(arg: str | None) -> Pose:
    """Pose flag value: inline JSON if it starts with '{', else a file path."""
    if arg is None:
        return Pose.identity()
    text = arg if arg.lstrip().startswith("{") else Path(arg).read_text()
    return Pose.from_dict(json.loads(text))


def _parse_symmetry(arg: str):
    if arg in (None, "none", "identity"):
        return None
    if arg == "cube":
        return octahedral_group()
    if arg.startswith("box:"):
        parts = arg[4:].split(",")
        if len(parts) != 3:
            raise ValueError(f"expected box:X,Y,Z with three extents, got {arg!r}")
        return box_symmetry_group([float(p) for p in parts])
    raise ValueError(f"unknown symmetry {arg!r}; use none, cube, or box:X,Y,Z")


# -- subcommands -------------------------------------------------------------

def cmd_encode(args) -> int:
    mesh = load_mesh(args.mesh)
    pose = _load_pose(args.pose)
    bps = make_grid(args.grid, args.half_extent)
    enc = encode_dynamic(bps, pose, mesh, interior=args.interior,
                         method=args.method)
    if args.format == "json":
        text = encoding_to_json(bps, [(pose, enc)])
    else:
        text = encoding_to_csv(bps, enc)
    _emit(text, args.out)
    return EXIT_OK


def _load_observed(path: str):
    """(points, metadata or None, magnitudes) from a JSON or CSV encoding file."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        bps, entries = parse_encoding_json(text)
        if not entries:
            raise ValueError(f"{path} holds no encodings")
        return bps.points, bps.grid_metadata(), entries[0][1].magnitudes
    points, enc = parse_encoding_csv(text)
    return points, None, enc.magnitudes


def cmd_recover(args) -> int:
    mesh = load_mesh(args.mesh)
    points, meta, observed = _load_observed(args.observed)
    bps = make_grid(args.grid, args.half_extent)
    check_grid_match(bps, points, meta)

    init = _load_pose(args.init_pose)
    config = RecoveryConfig(**json.loads(Path(args.config).read_text())) \
        if args.config else RecoveryConfig()
    symmetry = _parse_symmetry(args.symmetry)
    tree = build_bvh(mesh)

    seeds = np.random.SeedSequence(args.seed).spawn(args.trials)
    trials = []
    for i in range(args.trials):
        start = init
        if args.perturb_rot > 0.0 or args.perturb_trans > 0.0:
            rng = np.random.default_rng(seeds[i])
            start = _perturbed(rng, init, args.perturb_rot, args.perturb_trans)
        res = recover_pose(observed, mesh, start, config, bps=bps, bvh=tree,
                           symmetry=symmetry, method=args.method)
        trace = res.trace
        trials.append({
            "trial": i,
            "converged": res.converged,
            "reason": res.reason,
            "iterations": res.iterations,
            "initial_dv": float(trace[0]),
            "final_dv": float(trace[-1]),
            "monotone": bool(np.all(np.diff(trace) <= 0.0)),
            "pose": res.pose.to_dict(),
        })

    n = len(trials)
    report = {
        "mesh": args.mesh,
        "config": asdict(config),
        "trials": trials,
        "aggregate": {
            "n_trials": n,
            "converged_fraction": sum(t["converged"] for t in trials) / n,
            "success_fraction": sum(t["final_dv"] < args.dv_threshold
                                    for t in trials) / n,
            "all_monotone": all(t["monotone"] for t in trials),
            "mean_iterations": sum(t["iterations"] for t in trials) / n,
        },
    }
    _emit(json.dumps(report, indent=1), args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    mesh = load_mesh(args.mesh)
    bps = make_grid(args.grid, args.half_extent)
    threads = args.threads if args.threads is not None else default_workers()
    mesh_id = Path(args.mesh).name

    if args.backend == "both":
        reports = compare_backends(mesh, bps, n_poses=args.poses,
                                   seed=args.seed, threads=threads,
                                   mesh_id=mesh_id)
        ok = all(r.checksums_match for r in reports.values())
        # the same inputs must hash identically on every backend too
        ok = ok and len({r.checksum_bvh for r in reports.values()}) == 1
        payload = {name: r.to_dict() for name, r in reports.items()}
        _emit(json.dumps(payload, indent=1), args.out)
    else:
        if args.backend != "current":
            from ._kernels import set_backend
            set_backend(args.backend)
        report = run_benchmark(mesh, bps, n_poses=args.poses, seed=args.seed,
                               threads=threads, mesh_id=mesh_id)
        ok = report.checksums_match
        _emit(report.to_json(), args.out)

    if not ok:
        _info("bench: result checksums differ between variants; "
              "timings are not trustworthy")
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_group(args) -> int:
    group = octahedral_group()
    if args.format == "json":
        entries = []
        for i, rot in enumerate(group):
            entries.append({
                "index": i,
                "q": [float(v) for v in matrix_to_quaternion(rot)],
                # entries are exactly -1/0/1, so integers round-trip losslessly
                "R": [[int(v) for v in row] for row in rot],
            })
        _emit(json.dumps(entries, indent=1), args.out)
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for rot in group:
            writer.writerow([repr(float(v)) for v in matrix_to_quaternion(rot)])
        _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _read_trajectory(path: str) -> list:
    """Steps from a 16-column CSV: theta, px, py, pz, twelve joint values."""
    rows = [r for r in csv.reader(io.StringIO(Path(path).read_text())) if r]
    if rows:
        try:
            float(rows[0][0])
        except ValueError:
            rows = rows[1:]  # header line
    if not rows:
        raise ValueError("empty trajectory")
    if len(rows) < 2:
        raise ValueError("trajectory needs at least 2 steps to score transitions")

    parsed = []
    for lineno, row in enumerate(rows, start=1):
        if len(row) != 16:
            raise ValueError(f"trajectory row {lineno}: expected 16 columns "
                             f"(theta, position, 12 joints), got {len(row)}")
        try:
            vals = [float(c) for c in row]
        except ValueError as exc:
            raise ValueError(f"trajectory row {lineno}: {exc}") from None
        parsed.append(vals)

    x0 = np.array(parsed[0][1:4])
    q0 = np.array(parsed[0][4:16])
    return [TrajectoryStep(theta=v[0], position=np.array(v[1:4]),
                           joints=np.array(v[4:16]), initial_position=x0,
                           initial_joints=q0) for v in parsed]


def cmd_reward(args) -> int:
    steps = _read_trajectory(args.trajectory)
    params = RewardParams(**json.loads(Path(args.params).read_text())) \
        if args.params else RewardParams()

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step", "theta", "rotation", "position", "joints",
                     "total", "cumulative"])
    cumulative = 0.0
    for t in range(1, len(steps)):
        terms = reward_terms(steps[t - 1], steps[t], params)
        cumulative += terms["total"]
        writer.writerow([t, repr(steps[t].theta)]
                        + [repr(terms[k]) for k in
                           ("rotation", "position", "joints", "total")]
                        + [repr(cumulative)])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynbps",
        description="Basis-point-set encodings of posed triangle meshes.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_grid_flags(p):
        p.add_argument("--grid", type=int, default=DEFAULT_GRID_N,
                       help="basis points per axis (default 4)")
        p.add_argument("--half-extent", type=float, default=DEFAULT_HALF_EXTENT,
                       help="grid half extent in meters (default 0.07)")

    p = sub.add_parser("encode", help="encode a mesh at a pose")
    p.add_argument("--mesh", required=True, help="OBJ or STL file")
    p.add_argument("--pose", help="inline JSON or a JSON file; "
                                  '{"t":[x,y,z],"q":[w,x,y,z]} or "R" matrix; '
                                  "default identity")
    add_grid_flags(p)
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.add_argument("--interior", choices=("zero", "skip"), default="zero")
    p.add_argument("--method", choices=("bvh", "brute"), default="bvh")
    p.add_argument("--out", help="output path (stdout when absent)")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("recover", help="recover a pose from observed magnitudes")
    p.add_argument("--mesh", required=True)
    p.add_argument("--observed", required=True,
                   help="encoding file (JSON or CSV) holding the target magnitudes")
    p.add_argument("--init-pose", dest="init_pose",
                   help="starting pose (inline JSON or file); default identity")
    add_grid_flags(p)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON file overriding solver settings")
    p.add_argument("--perturb-rot", dest="perturb_rot", type=float, default=0.0,
                   help="max init rotation perturbation per trial (radians)")
    p.add_argument("--perturb-trans", dest="perturb_trans", type=float,
                   default=0.0, help="max init translation perturbation (meters)")
    p.add_argument("--symmetry", default="none",
                   help="none, cube, or box:X,Y,Z")
    p.add_argument("--dv-threshold", dest="dv_threshold", type=float,
                   default=1e-5)
    p.add_argument("--method", choices=("bvh", "brute"), default="bvh")
    p.add_argument("--out")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("bench", help="time brute force against the BVH")
    p.add_argument("--mesh", required=True)
    p.add_argument("--poses", type=int, default=20)
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: DYNBPS_THREADS or 1)")
    p.add_argument("--seed", type=int, default=0)
    add_grid_flags(p)
    p.add_argument("--backend", choices=("current", "both", "core", "fallback"),
                   default="current")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("group", help="emit the 24 octahedral rotations")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_group)

    p = sub.add_parser("reward", help="score a reorientation trajectory")
    p.add_argument("--trajectory", required=True,
                   help="CSV of theta, position, 12 joints per step")
    p.add_argument("--params", help="JSON file overriding reward coefficients")
    p.add_argument("--out")
    p.set_defaults(func=cmd_reward)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage, 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (DynbpsError, OSError, ValueError, KeyError, TypeError) as exc:
        _info(f"error: {exc}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
