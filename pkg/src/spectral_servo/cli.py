"""Command-line front end: ``align``, ``servo``, ``inspect``, ``synth`` and ``report``.

Exit codes: 0 converged / success, 2 bad input, 3 no convergence (artifacts
are still written), 4 kinematic limit. Every failure prints one line
``<code>: <message>`` on stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import harmonics, translation
from .cloud import RigidTransform, apply_transform, euler_zyz_to_rot
from .controller import ControllerConfig, align, transform_summary
from .discretize import build_egi, voxelize, write_egi_csv, write_voxel_csv
from .errors import ConfigError, KinematicLimitError, NoConvergenceError, SpectralServoError
from .io import load_cloud, save_cloud
from .plot import convergence_svg, trace_svg
from .robot import pose_error
from .scene import load_scene
from .servo import servo_loop
from .sim import capture

EXIT_OK, EXIT_INPUT, EXIT_NO_CONVERGENCE, EXIT_LIMIT = 0, 2, 3, 4
RUN_KEYS = ("seed", "threads", "out", "debug_dump")


@dataclass
class RunConfig:
    """Everything one command needs: controller settings plus run plumbing."""

    command: str
    controller: ControllerConfig
    inputs: list = field(default_factory=list)
    out: Path = Path("out")
    seed: int = 0
    threads: int = 1
    debug_dump: bool = False

    def validate(self):
        for p in self.inputs:
            if not Path(p).is_file():
                raise ConfigError(f"input not found: {p}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        return self


# --------------------------------------------------------------------------
# argument handling


def _parse_tuple(text):
    text = text.strip()
    return tuple(float(v) for v in text.split(",")) if text else ()


def _add_config_flags(p):
    g = p.add_argument_group("controller settings (override --config)")
    for f in fields(ControllerConfig):
        flag = "--" + f.name.replace("_", "-")
        if isinstance(f.default, bool):
            g.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        elif f.name == "smoothing":
            g.add_argument(flag, dest=f.name, type=_parse_tuple, default=None, metavar="W1,W2,...")
        elif f.name == "l_max" or isinstance(f.default, int):
            g.add_argument(flag, dest=f.name, type=int, default=None)
        else:
            g.add_argument(flag, dest=f.name, type=float, default=None)


def _add_common(p):
    p.add_argument("--config", help="flat JSON file of settings")
    p.add_argument("--out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None, help="FFT worker threads (default 1)")
    p.add_argument("--debug-dump", action="store_true", default=None,
                   help="also write intermediate representations as CSV")
    p.add_argument("--print-config", action="store_true", help="print the resolved settings and exit")
    _add_config_flags(p)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # keep usage errors on one parsable line
        self.exit(EXIT_INPUT, f"usage-error: {' '.join(message.split())}\n")


def build_parser():
    ap = _Parser(prog="spectral-servo", description=__doc__.splitlines()[0])
    ap.add_argument("--print-config", action="store_true", help="print default settings and exit")
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("align", help="register a reference cloud onto a target cloud")
    p.add_argument("reference")
    p.add_argument("target")
    _add_common(p)

    p = sub.add_parser("servo", help="run the simulated visual servoing loop on a scene file")
    p.add_argument("scene")
    _add_common(p)

    p = sub.add_parser("inspect", help="dump a cloud's voxel grid, EGI or harmonic coefficients")
    p.add_argument("cloud")
    p.add_argument("--mode", choices=("voxel", "egi", "coeffs"), required=True)
    _add_common(p)

    p = sub.add_parser("synth", help="sample a scene file into a point cloud")
    p.add_argument("scene")
    p.add_argument("--output", required=True, help="cloud file to write (.ply or .pcd)")
    p.add_argument("--moved", help="also write a copy moved by --xyz/--zyz-deg about the origin")
    p.add_argument("--xyz", type=float, nargs=3, default=(0.0, 0.0, 0.0))
    p.add_argument("--zyz-deg", type=float, nargs=3, default=(0.0, 0.0, 0.0))
    p.add_argument("--capture", action="store_true",
                   help="write a simulated capture from the scene camera's eye/target instead")
    _add_common(p)

    p = sub.add_parser("report", help="summarise a run directory and redraw its plot")
    p.add_argument("run_dir")
    return ap


def _read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None


def resolve(args, base=None):
    """Merge defaults, ``base`` (scene overrides), the config file and flags."""
    values = dict(base or {})
    run = {}
    if getattr(args, "config", None):
        d = _read_json(args.config)
        if not isinstance(d, dict):
            raise ConfigError(f"{args.config}: expected a flat JSON object")
        for k, v in d.items():
            (run if k in RUN_KEYS else values)[k] = v
    for f in fields(ControllerConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    for k in RUN_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            run[k] = v
    try:
        cfg = ControllerConfig.from_dict(values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg, run


def _run_config(args, cfg, run, inputs):
    rc = RunConfig(args.command, cfg, list(inputs), Path(run.get("out", "out")),
                   int(run.get("seed", 0)), int(run.get("threads", 1)), bool(run.get("debug_dump", False)))
    return rc.validate()


def _print_config(cfg, run):
    d = {**cfg.to_dict(), "seed": run.get("seed", 0), "threads": run.get("threads", 1),
         "out": str(run.get("out", "out")), "debug_dump": bool(run.get("debug_dump", False))}
    print(json.dumps(d, indent=2, sort_keys=True))


# --------------------------------------------------------------------------
# commands


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _write_trace(out, trace, title):
    # wall times differ between runs, so the CSV leaves them blank; the JSON keeps them
    with open(out / "trace.csv", "w", encoding="utf-8", newline="") as fh:
        trace.write_csv(fh, timing=False)
    _write(out / "trace.json", trace.to_json(timing=True) + "\n")
    _write(out / "convergence.svg", trace_svg(trace, title))


def _dump_cloud(out, prefix, cloud, cfg):
    grid = voxelize(cloud, cfg.resolution)
    egi = build_egi(cloud, cfg.bandwidth)
    coeffs = harmonics.sph_forward(egi, cfg.degrees, normalize=True)
    for name, writer, obj in (("voxels", write_voxel_csv, grid), ("egi", write_egi_csv, egi),
                              ("coeffs", harmonics.write_coeffs_csv, coeffs)):
        with open(out / f"{prefix}_{name}.csv", "w", encoding="utf-8", newline="") as fh:
            writer(obj, fh)


def cmd_align(rc):
    reference, target = (load_cloud(p) for p in rc.inputs)
    rc.out.mkdir(parents=True, exist_ok=True)
    if rc.debug_dump:
        _dump_cloud(rc.out, "reference", reference, rc.controller)
        _dump_cloud(rc.out, "target", target, rc.controller)
    res = align(reference, target, rc.controller)
    summary = {
        "converged": res.converged,
        "iterations": res.iterations,
        "final_j_t": float(res.trace[-1].j_t),
        "final_j_r": float(res.trace[-1].j_r),
        "final_grad_t_norm": float(res.trace[-1].grad_t_norm),
        "final_grad_r_norm": float(res.trace[-1].grad_r_norm),
        "pivot": res.pivot.tolist(),
        "about_pivot": transform_summary(RigidTransform(res.rotation, res.translation)),
        "transform": transform_summary(res.transform),
    }
    _write(rc.out / "transform.json", json.dumps(summary, indent=2) + "\n")
    _write_trace(rc.out, res.trace, "alignment convergence")
    if not res.converged:
        raise NoConvergenceError(f"no convergence after {res.iterations} iterations")
    return EXIT_OK


def _write_servo(out, result, goal_robot):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "joints.csv", "w", encoding="utf-8", newline="") as fh:
        result.write_joints_csv(fh)
    with open(out / "path.csv", "w", encoding="utf-8", newline="") as fh:
        result.write_path_csv(fh)
    _write_trace(out, result.trace, "servoing convergence")
    final = goal_robot.with_joints(result.joints[-1])
    cam_err = pose_error(final.camera_pose(), goal_robot.camera_pose())
    ee_err = pose_error(final.flange_pose(), goal_robot.flange_pose())
    summary = {
        "converged": result.converged,
        "cycles": len(result.trace),
        "camera_error_m": cam_err[0],
        "camera_error_deg": float(np.rad2deg(cam_err[1])),
        "end_effector_error_m": ee_err[0],
        "end_effector_error_deg": float(np.rad2deg(ee_err[1])),
        "final_joints": result.joints[-1].tolist(),
    }
    _write(out / "summary.json", json.dumps(summary, indent=2) + "\n")
    return summary


def cmd_servo(rc, scene):
    goal, start = scene.robots()
    world = scene.cloud()
    reference = capture(world, scene.camera.with_pose(goal.camera_pose()), rc.seed, frame="camera")
    if rc.debug_dump:
        rc.out.mkdir(parents=True, exist_ok=True)
        _dump_cloud(rc.out, "reference", reference, rc.controller)
    try:
        result = servo_loop(world, start, reference, rc.controller, scene.camera, rc.seed)
    except KinematicLimitError as exc:
        _write_servo(rc.out, exc.result, goal)
        raise
    _write_servo(rc.out, result, goal)
    if not result.converged:
        raise NoConvergenceError(f"servoing did not converge in {len(result.trace)} cycles")
    return EXIT_OK


def cmd_inspect(rc, mode, stream=None):
    stream = stream or sys.stdout
    cloud = load_cloud(rc.inputs[0])
    cfg = rc.controller
    if mode == "voxel":
        write_voxel_csv(voxelize(cloud, cfg.resolution), stream)
    elif mode == "egi":
        write_egi_csv(build_egi(cloud, cfg.bandwidth), stream)
    else:
        egi = build_egi(cloud, cfg.bandwidth)
        harmonics.write_coeffs_csv(harmonics.sph_forward(egi, cfg.degrees, normalize=True), stream)
    return EXIT_OK


def cmd_synth(rc, scene, args):
    cloud = scene.cloud()
    if args.capture:
        if not scene.has_view:
            raise ConfigError("--capture needs camera eye and target in the scene")
        cloud = capture(cloud, scene.camera, rc.seed)
    save_cloud(cloud, args.output)
    if args.moved:
        h = RigidTransform(euler_zyz_to_rot(*np.deg2rad(args.zyz_deg)), args.xyz)
        save_cloud(apply_transform(cloud, h), args.moved)
    return EXIT_OK


def cmd_report(run_dir, stream=None):
    stream = stream or sys.stdout
    run_dir = Path(run_dir)
    path = run_dir / "trace.csv"
    if not path.is_file():
        raise ConfigError(f"no trace.csv in {run_dir}")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty trace")
    col = {k: np.array([float(r[k]) for r in rows]) for k in ("j_t", "j_r", "grad_t_norm", "grad_r_norm")}
    last = rows[-1]
    print(f"iterations: {len(rows)}", file=stream)
    for k in ("j_t", "j_r", "grad_t_norm", "grad_r_norm"):
        print(f"final {k}: {float(last[k]):.6g}", file=stream)
    print(f"translation: {last['tx']} {last['ty']} {last['tz']}", file=stream)
    print(f"quaternion_wxyz: {last['qw']} {last['qx']} {last['qy']} {last['qz']}", file=stream)
    for name in ("summary.json", "transform.json"):
        if (run_dir / name).is_file():
            d = json.loads((run_dir / name).read_text())
            print(f"converged: {d.get('converged')}", file=stream)
            break
    _write(run_dir / "convergence.svg", convergence_svg({"J_t": col["j_t"], "J_r": col["j_r"]},
                                                        title="convergence"))
    return EXIT_OK


# --------------------------------------------------------------------------


def _fail(exc, code):
    reason = getattr(exc, "code", None) or {FileNotFoundError: "file-not-found"}.get(type(exc), "error")
    msg = " ".join(str(exc).split())
    print(f"{reason}: {msg}", file=sys.stderr)
    return code


def run(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        if args.print_config:
            _print_config(ControllerConfig(), {})
            return EXIT_OK
        parser.print_usage(sys.stderr)
        print("usage-error: a command is required", file=sys.stderr)
        return EXIT_INPUT
    if args.command == "report":
        return cmd_report(args.run_dir)
    scene = None
    base = {}
    if args.command in ("servo", "synth"):
        scene = load_scene(args.scene)
        base = scene.config
    cfg, runv = resolve(args, base)
    if args.print_config:
        _print_config(cfg, runv)
        return EXIT_OK
    inputs = {"align": [args.reference, args.target] if args.command == "align" else [],
              "inspect": [getattr(args, "cloud", None)]}.get(args.command, [])
    rc = _run_config(args, cfg, runv, inputs)
    translation.set_threads(rc.threads)
    if args.command == "align":
        return cmd_align(rc)
    if args.command == "servo":
        return cmd_servo(rc, scene)
    if args.command == "inspect":
        return cmd_inspect(rc, args.mode)
    return cmd_synth(rc, scene, args)


def main(argv=None):
    try:
        return run(argv)
    except NoConvergenceError as exc:
        return _fail(exc, EXIT_NO_CONVERGENCE)
    except KinematicLimitError as exc:
        return _fail(exc, EXIT_LIMIT)
    except (SpectralServoError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        return _fail(exc, EXIT_INPUT)
    except ValueError as exc:
        return _fail(exc, EXIT_INPUT)


if __name__ == "__main__":
    sys.exit(main())
