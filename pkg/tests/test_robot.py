import warnings

import numpy as np
import pytest

from spectral_servo.cloud import RigidTransform, expm_so3, log_so3
from spectral_servo.errors import NearSingularWarning
from spectral_servo.robot import SimRobot, damped_solve, joint_velocities, pose_error, solve_ik

Q0 = np.array([0.1, 0.6, -0.2, -1.4, 0.3, 1.1, 0.2])


def test_zero_twist():
    assert np.array_equal(joint_velocities(SimRobot(Q0), np.zeros(6)), np.zeros(7))


def test_jacobian_matches_finite_differences():
    robot = SimRobot(Q0)
    jac = robot.camera_jacobian()
    p0 = robot.camera_pose()
    eps = 1e-7
    for i in range(7):
        dq = np.zeros(7)
        dq[i] = eps
        p1 = robot.camera_pose(Q0 + dq)
        # body-frame velocity of the camera
        v = p0.rotation.T @ (p1.translation - p0.translation) / eps
        w = log_so3(p0.rotation.T @ p1.rotation) / eps
        assert np.allclose(jac[:, i], np.concatenate([v, w]), atol=1e-6)


def test_full_rank_matches_lstsq():
    rng = np.random.default_rng(4)
    for _ in range(20):
        jac = rng.normal(size=(6, 6))
        x = rng.normal(size=6)
        qdot = damped_solve(jac, x, damping=1e-6)
        oracle = np.linalg.lstsq(jac, x, rcond=None)[0]
        assert np.allclose(jac @ qdot, x, atol=1e-6)
        assert np.allclose(qdot, oracle, rtol=1e-5, atol=1e-6)


def test_redundant_arm_gives_minimum_norm():
    rng = np.random.default_rng(5)
    jac = rng.normal(size=(6, 7))
    x = rng.normal(size=6)
    assert np.allclose(damped_solve(jac, x, damping=1e-8), np.linalg.pinv(jac) @ x, atol=1e-6)


def test_rank_deficient_is_finite_and_warns():
    jac = np.zeros((6, 6))
    jac[0, 0] = 1.0
    mu = 1e-2
    with pytest.warns(NearSingularWarning):
        qdot = damped_solve(jac, np.ones(6), damping=mu)
    assert np.all(np.isfinite(qdot))
    assert np.linalg.norm(qdot) <= np.linalg.norm(np.ones(6)) / (2 * mu)


def test_ik_round_trip():
    robot = SimRobot(Q0)
    target = robot.camera_pose().compose(RigidTransform(expm_so3([0, 0, 0.2]), (0.05, -0.03, 0.02)))
    q = solve_ik(robot, target)
    dt, dr = pose_error(robot.camera_pose(q), target)
    assert dt < 1e-9 and dr < 1e-9


def test_limits_and_validation():
    robot = SimRobot(Q0)
    assert robot.within_limits()
    assert not robot.within_limits(Q0 + np.r_[3.0, np.zeros(6)])
    with pytest.raises(ValueError):
        SimRobot(np.zeros(6))
    with pytest.raises(ValueError):
        robot.joint_angles[0] = 1.0


def test_camera_offset():
    robot = SimRobot(Q0)
    rel = robot.flange_pose().inverse().compose(robot.camera_pose())
    assert np.allclose(rel.translation, [0, 0, 0.05]) and np.allclose(rel.rotation, np.eye(3))


def test_twist_is_realised_to_first_order():
    robot = SimRobot(Q0)
    twist = np.array([0.01, -0.02, 0.005, 0.03, 0.0, -0.02])
    dt = 1e-4
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        qdot = joint_velocities(robot, twist)
    p0, p1 = robot.camera_pose(), robot.camera_pose(Q0 + dt * qdot)
    v = p0.rotation.T @ (p1.translation - p0.translation) / dt
    w = log_so3(p0.rotation.T @ p1.rotation) / dt
    assert np.allclose(np.concatenate([v, w]), twist, atol=1e-4)
