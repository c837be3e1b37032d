"""JSON scene files for the simulator and the servo command.

A scene file is one JSON object::

    {
      "objects": [{"kind": "mug", "dimensions": [0.04, 0.1],
                   "pose": {"xyz": [0, 0, 0.05], "zyz": [0, 0, 0]},
                   "density": 200000}],
      "scatter": {"seed": 7, "region": [[0.45, -0.15], [0.75, 0.15]]},
      "sample_seed": 0,
      "camera": {"hfov_deg": 70, "vfov_deg": 55, "min_range": 0.1,
                 "max_range": 2.0, "sigma": 0.001,
                 "eye": [0.5, 0, 0.3], "target": [0, 0, 0.05]},
      "robot": {"goal_joints": [...], "start_offset": {"xyz": [...], "zyz_deg": [...]}},
      "config": {"bandwidth": 32}
    }

Only ``objects`` is required. ``scatter`` re-places the objects on the
table plane (x, y and yaw drawn at random). ``eye``/``target`` give a fixed
viewpoint for captures outside the servo loop. ``start_offset`` is
expressed in the goal camera frame.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .cloud import RigidTransform, euler_zyz_to_rot
from .errors import ConfigError
from .robot import SimRobot, solve_ik
from .sim import CameraModel, SceneObject, look_at, make_clutter, scatter_objects


class SceneError(ConfigError):
    code = "bad-scene"


def _pose(d, where):
    if d is None:
        return RigidTransform()
    if not isinstance(d, dict):
        raise SceneError(f"{where}: pose must be an object")
    extra = set(d) - {"xyz", "zyz", "zyz_deg"}
    if extra:
        raise SceneError(f"{where}: unknown pose key(s) {sorted(extra)}")
    if "zyz" in d and "zyz_deg" in d:
        raise SceneError(f"{where}: give zyz or zyz_deg, not both")
    xyz = _vec(d.get("xyz", (0, 0, 0)), 3, f"{where}.xyz")
    if "zyz_deg" in d:
        zyz = np.deg2rad(_vec(d["zyz_deg"], 3, f"{where}.zyz_deg"))
    else:
        zyz = _vec(d.get("zyz", (0, 0, 0)), 3, f"{where}.zyz")
    return RigidTransform(euler_zyz_to_rot(*zyz), xyz)


def _vec(v, n, where):
    try:
        a = np.asarray(v, dtype=np.float64)
    except (TypeError, ValueError):
        raise SceneError(f"{where}: expected {n} numbers") from None
    if a.shape != (n,) or not np.all(np.isfinite(a)):
        raise SceneError(f"{where}: expected {n} finite numbers")
    return a


@dataclass(frozen=True, eq=False)
class Scene:
    objects: list
    camera: CameraModel = field(default_factory=CameraModel)
    goal_joints: np.ndarray | None = None
    start_offset: RigidTransform = field(default_factory=RigidTransform)
    config: dict = field(default_factory=dict)
    sample_seed: int = 0
    has_view: bool = False

    def cloud(self):
        return make_clutter(self.objects, self.sample_seed)

    def robots(self):
        """``(goal_robot, start_robot)``; the start is solved by inverse kinematics."""
        if self.goal_joints is None:
            raise SceneError("scene has no robot section")
        goal = SimRobot(self.goal_joints)
        target = goal.camera_pose().compose(self.start_offset)
        start = goal.with_joints(solve_ik(goal, target, goal.joint_angles))
        return goal, start


def _objects(items):
    if not isinstance(items, list) or not items:
        raise SceneError("objects must be a non-empty list")
    out = []
    for i, o in enumerate(items):
        where = f"objects[{i}]"
        if not isinstance(o, dict):
            raise SceneError(f"{where}: expected an object")
        extra = set(o) - {"kind", "dimensions", "pose", "density", "path"}
        if extra:
            raise SceneError(f"{where}: unknown key(s) {sorted(extra)}")
        try:
            kw = {"kind": o.get("kind"), "dimensions": tuple(o.get("dimensions", ())),
                  "pose": _pose(o.get("pose"), f"{where}.pose"), "path": o.get("path")}
            if "density" in o:
                kw["density"] = float(o["density"])
            out.append(SceneObject(**kw))
        except (TypeError, ValueError) as exc:
            raise SceneError(f"{where}: {exc}") from None
    return out


def _camera(d):
    if d is None:
        return CameraModel()
    if not isinstance(d, dict):
        raise SceneError("camera must be an object")
    extra = set(d) - {"hfov_deg", "vfov_deg", "min_range", "max_range", "sigma", "eye", "target"}
    if extra:
        raise SceneError(f"camera: unknown key(s) {sorted(extra)}")
    kw = {}
    if ("eye" in d) != ("target" in d):
        raise SceneError("camera: eye and target go together")
    if "eye" in d:
        kw["pose"] = look_at(_vec(d["eye"], 3, "camera.eye"), _vec(d["target"], 3, "camera.target"))
    for k in ("hfov_deg", "vfov_deg"):
        if k in d:
            kw[k[:4]] = float(np.deg2rad(float(d[k])))
    for k in ("min_range", "max_range", "sigma"):
        if k in d:
            kw[k] = float(d[k])
    try:
        return CameraModel(**kw)
    except ValueError as exc:
        raise SceneError(f"camera: {exc}") from None


def scene_from_dict(d):
    if not isinstance(d, dict):
        raise SceneError("scene must be a JSON object")
    extra = set(d) - {"objects", "scatter", "sample_seed", "camera", "robot", "config"}
    if extra:
        raise SceneError(f"unknown scene key(s) {sorted(extra)}")
    objects = _objects(d.get("objects"))
    if "scatter" in d:
        sc = d["scatter"]
        try:
            region = np.asarray(sc.get("region", ((-0.25, -0.25), (0.25, 0.25))), dtype=float)
            objects = scatter_objects(objects, int(sc.get("seed", 0)), (region[0], region[1]),
                                      float(sc.get("gap", 0.01)))
        except (AttributeError, TypeError, ValueError, IndexError) as exc:
            raise SceneError(f"scatter: {exc}") from None
    goal, offset = None, RigidTransform()
    if "robot" in d:
        r = d["robot"]
        if not isinstance(r, dict) or "goal_joints" not in r:
            raise SceneError("robot: goal_joints is required")
        goal = np.asarray(r["goal_joints"], dtype=np.float64)
        offset = _pose(r.get("start_offset"), "robot.start_offset")
    config = d.get("config", {})
    if not isinstance(config, dict):
        raise SceneError("config must be an object")
    cam = d.get("camera")
    has_view = isinstance(cam, dict) and "eye" in cam
    return Scene(objects, _camera(cam), goal, offset, dict(config), int(d.get("sample_seed", 0)), has_view)


def load_scene(path):
    """Parse a scene file; JSON syntax errors name the offending line."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return scene_from_dict(d)
