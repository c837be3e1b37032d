"""Closed-loop spectral visual servoing of the simulated arm.

Every cycle the wrist camera captures the scene, the capture is compared
with a reference view taken at the goal, and the two gradients become a
camera twist that the damped pseudoinverse turns into joint rates.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from . import harmonics
from .cloud import RigidTransform
from .controller import (ControllerConfig, ControllerState, IterationRecord, IterationTrace,
                         RotationStages, camera_twist, controller_step, converged)
from .discretize import build_egi, grid_dims, voxelize
from .errors import KinematicLimitError, NoConvergenceError
from .robot import joint_velocities
from .sim import capture
from .translation import PhaseCorrelator, translation_cost


@dataclass(frozen=True, eq=False)
class ServoResult:
    trace: IterationTrace
    joints: np.ndarray          # (cycles + 1, n) joint angles, start first
    camera_poses: list          # RigidTransform per row of ``joints``
    converged: bool

    @property
    def final_joints(self):
        return self.joints[-1]

    def write_joints_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step"] + [f"q{i + 1}" for i in range(self.joints.shape[1])])
        for i, q in enumerate(self.joints):
            w.writerow([i] + [repr(float(v)) for v in q])

    def write_path_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "x", "y", "z", "qw", "qx", "qy", "qz"])
        from .cloud import rot_to_quaternion

        for i, p in enumerate(self.camera_poses):
            w.writerow([i, *(repr(float(v)) for v in p.translation),
                        *(repr(float(v)) for v in rot_to_quaternion(p.rotation))])


class _ReferenceView:
    """Spectra of the goal view, fixed for the whole run."""

    def __init__(self, reference, cfg, margin):
        self.cfg = cfg
        self.pivot = reference.centroid()
        r = cfg.resolution
        lo = reference.points.min(0) - margin
        hi = reference.points.max(0) + margin
        self.dims = grid_dims(hi - lo, r)
        self.bounds = (lo, lo + np.asarray(self.dims) * r)
        self.grid = voxelize(reference, r, self.bounds, dims=self.dims, drop_outside=True)
        self.correlator = PhaseCorrelator(self.grid, subvoxel=cfg.subvoxel)
        self.egi = build_egi(reference, cfg.bandwidth)
        self.coeffs = harmonics.sph_forward(self.egi, cfg.degrees, normalize=True)
        self.stages = RotationStages(self.coeffs, self.coeffs, cfg)

    def gradients(self, current):
        grid = voxelize(current, self.cfg.resolution, self.bounds, dims=self.dims, drop_outside=True)
        if grid.occupied_count == 0:
            raise NoConvergenceError("current view left the reference lattice")
        # the correlator reports the shift carrying the current view onto the
        # reference; the camera has to move by the opposite
        t_grad = -self.correlator.estimate(grid).t_glob
        egi = build_egi(current, self.cfg.bandwidth)
        g = harmonics.sph_forward(egi, self.cfg.degrees, normalize=True)
        self.stages.set_target(g)
        r_grad = self.stages.gradient(np.eye(3))
        j_t = translation_cost(self.grid, grid, np.zeros(3))
        j_r = harmonics.rotation_cost(self.egi, egi, np.eye(3))
        return t_grad, r_grad, j_t, j_r


def servo_loop(scene, robot, reference, cfg=None, camera=None, seed=0, *, margin=0.15,
               raise_on_failure=False, hook=None):
    """Drive ``robot`` until its camera view matches ``reference``.

    ``reference`` is a camera-frame capture taken at the goal with ``seed``;
    cycle ``i`` (from 1) captures with ``seed + i - 1`` so a robot already at
    the goal sees exactly the reference and stops at once. ``camera``
    supplies the intrinsics (its pose is replaced by the robot's).

    Raises :class:`KinematicLimitError` if a joint would leave its limits.
    """
    from .sim import CameraModel

    cfg = cfg or ControllerConfig()
    camera = camera or CameraModel()
    hook = hook or (lambda stage, **info: None)
    ref = _ReferenceView(reference, cfg, margin)
    q = np.array(robot.joint_angles, dtype=np.float64)
    joints = [q.copy()]
    poses = [robot.camera_pose(q)]
    trace = IterationTrace()
    state = ControllerState()
    done = False
    while state.iteration < cfg.max_iters:
        t0 = time.perf_counter()
        cam_pose = robot.camera_pose(q)
        view = capture(scene, camera.with_pose(cam_pose), seed + state.iteration, frame="camera")
        hook("capture", cloud=view)
        t_grad, r_grad, j_t, j_r = ref.gradients(view)
        hook("gradients", t_grad=t_grad, r_grad=r_grad)
        state = controller_step(state, t_grad, r_grad, cfg)
        stop = converged(state, cfg.eps_g) and ref.stages.final
        if not stop:
            qdot = joint_velocities(robot.with_joints(q), camera_twist(state, cfg, pivot=ref.pivot), cfg.damping)
            q_next = q + cfg.dt * qdot
            if not robot.within_limits(q_next):
                result = ServoResult(trace, np.array(joints), poses, False)
                raise KinematicLimitError(f"joint limit exceeded at cycle {state.iteration}", result)
            q = q_next
        # record the camera motion commanded so far, relative to the start
        rel = poses[0].inverse().compose(robot.camera_pose(q))
        trace.append(IterationRecord(state.iteration, j_t, j_r, float(np.linalg.norm(t_grad)),
                                     float(np.linalg.norm(r_grad)), rel, (time.perf_counter() - t0) * 1e3))
        joints.append(q.copy())
        poses.append(robot.camera_pose(q))
        if stop:
            done = True
            break
    result = ServoResult(trace, np.array(joints), poses, done)
    if not done and raise_on_failure:
        raise NoConvergenceError(f"servoing did not converge in {cfg.max_iters} cycles", result)
    return result


def start_pose(goal_pose, offset):
    """Camera pose displaced from ``goal_pose`` by ``offset`` expressed in the goal camera frame."""
    return goal_pose.compose(offset)


__all__ = ["ServoResult", "servo_loop", "start_pose", "RigidTransform"]
