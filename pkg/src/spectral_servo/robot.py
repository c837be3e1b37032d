"""A simulated serial arm with a wrist camera.

Kinematics use standard Denavit-Hartenberg rows ``(a, alpha, d)`` with the
joint angle added to ``theta``. Jacobians are expressed in the camera frame
so a camera twist maps directly to joint velocities.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .cloud import RigidTransform, log_so3
from .errors import NearSingularWarning

# a 7-joint arm in the style of common collaborative manipulators
DEFAULT_DH = np.array([
    [0.0, -np.pi / 2, 0.34],
    [0.0, np.pi / 2, 0.0],
    [0.0, np.pi / 2, 0.40],
    [0.0, -np.pi / 2, 0.0],
    [0.0, -np.pi / 2, 0.40],
    [0.0, np.pi / 2, 0.0],
    [0.0, 0.0, 0.126],
])
DEFAULT_LIMITS = np.deg2rad(np.array([170, 120, 170, 120, 170, 120, 175], dtype=float))
DEFAULT_CAMERA_OFFSET = RigidTransform(np.eye(3), (0.0, 0.0, 0.05))
SINGULAR_TOL = 1e-3


def _dh(a, alpha, d, theta):
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array([[ct, -st * ca, st * sa, a * ct],
                     [st, ct * ca, -ct * sa, a * st],
                     [0.0, sa, ca, d],
                     [0.0, 0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class SimRobot:
    """Joint state plus a fixed kinematic chain and hand-eye offset.

    ``limits`` holds the symmetric joint limits in radians.
    """

    joint_angles: np.ndarray
    dh: np.ndarray = field(default_factory=lambda: DEFAULT_DH.copy())
    limits: np.ndarray = field(default_factory=lambda: DEFAULT_LIMITS.copy())
    camera_offset: RigidTransform = DEFAULT_CAMERA_OFFSET

    def __post_init__(self):
        q = np.array(self.joint_angles, dtype=np.float64).ravel()
        dh = np.array(self.dh, dtype=np.float64).reshape(-1, 3)
        lim = np.array(self.limits, dtype=np.float64).ravel()
        if len(q) != len(dh) or len(lim) != len(dh):
            raise ValueError("joint, DH and limit counts differ")
        for a in (q, dh, lim):
            a.setflags(write=False)
        object.__setattr__(self, "joint_angles", q)
        object.__setattr__(self, "dh", dh)
        object.__setattr__(self, "limits", lim)

    @property
    def n_joints(self):
        return len(self.dh)

    def with_joints(self, q):
        return SimRobot(q, self.dh, self.limits, self.camera_offset)

    def within_limits(self, q=None):
        q = self.joint_angles if q is None else np.asarray(q)
        return bool(np.all(np.abs(q) <= self.limits))

    def _frames(self, q):
        frames = [np.eye(4)]
        for (a, alpha, d), th in zip(self.dh, q):
            frames.append(frames[-1] @ _dh(a, alpha, d, th))
        return frames

    def flange_pose(self, q=None):
        q = self.joint_angles if q is None else np.asarray(q, dtype=np.float64)
        return RigidTransform.from_matrix(self._frames(q)[-1])

    def camera_pose(self, q=None):
        return self.flange_pose(q).compose(self.camera_offset)

    def camera_jacobian(self, q=None):
        """6 x n Jacobian mapping joint rates to the camera twist ``(v, w)`` in the camera frame."""
        q = self.joint_angles if q is None else np.asarray(q, dtype=np.float64)
        frames = self._frames(q)
        cam = frames[-1] @ self.camera_offset.as_matrix()
        p = cam[:3, 3]
        jac = np.zeros((6, self.n_joints))
        for i in range(self.n_joints):
            z = frames[i][:3, 2]
            jac[:3, i] = np.cross(z, p - frames[i][:3, 3])
            jac[3:, i] = z
        rt = cam[:3, :3].T
        jac[:3] = rt @ jac[:3]
        jac[3:] = rt @ jac[3:]
        return jac


def damped_solve(jac, twist, damping=1e-4, warn=True):
    """``J^T (J J^T + mu^2 I)^-1 x``; warns when ``J`` is close to singular."""
    jac = np.asarray(jac, dtype=np.float64)
    twist = np.asarray(twist, dtype=np.float64)
    sv = np.linalg.svd(jac, compute_uv=False)
    if warn and sv[-1] < SINGULAR_TOL:
        warnings.warn(f"near-singular Jacobian (sigma_min = {sv[-1]:.2e})", NearSingularWarning, stacklevel=2)
    m = jac @ jac.T + damping ** 2 * np.eye(jac.shape[0])
    return jac.T @ np.linalg.solve(m, twist)


def joint_velocities(robot, twist, damping=1e-4):
    """Joint rates producing the camera-frame ``twist`` (damped least squares)."""
    return damped_solve(robot.camera_jacobian(), twist, damping)


def pose_error(a, b):
    """``(translation distance, geodesic angle)`` between two poses."""
    dt = float(np.linalg.norm(a.translation - b.translation))
    return dt, float(np.linalg.norm(log_so3(a.rotation.T @ b.rotation)))


def solve_ik(robot, target, q0=None, damping=1e-3, tol=1e-10, max_iters=500):
    """Joint angles placing the camera at ``target`` (damped Newton in the camera frame)."""
    q = np.array(robot.joint_angles if q0 is None else q0, dtype=np.float64)
    for _ in range(max_iters):
        cur = robot.camera_pose(q)
        # body-frame error: current^-1 * target
        err_rot = log_so3(cur.rotation.T @ target.rotation)
        err_pos = cur.rotation.T @ (target.translation - cur.translation)
        err = np.concatenate([err_pos, err_rot])
        if np.linalg.norm(err) < tol:
            break
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NearSingularWarning)
            q = q + damped_solve(robot.camera_jacobian(q), err, damping)
    else:
        raise ValueError("inverse kinematics did not converge")
    return q
