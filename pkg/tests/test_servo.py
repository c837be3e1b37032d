import io
from pathlib import Path

import numpy as np
import pytest

from spectral_servo.controller import ControllerConfig
from spectral_servo.errors import KinematicLimitError
from spectral_servo.robot import SimRobot
from spectral_servo.scene import load_scene
from spectral_servo.servo import servo_loop
from spectral_servo.sim import capture

SCENES = Path(__file__).resolve().parents[1] / "scenes"


@pytest.fixture(scope="module")
def setup():
    scene = load_scene(SCENES / "servo.json")
    world = scene.cloud()
    goal, start = scene.robots()
    cfg = ControllerConfig.from_dict(scene.config)
    reference = capture(world, scene.camera.with_pose(goal.camera_pose()), 0, frame="camera")
    return scene, world, goal, start, cfg, reference


def test_start_at_goal_stops_immediately(setup):
    scene, world, goal, _, cfg, reference = setup
    res = servo_loop(world, goal, reference, cfg, scene.camera, 0)
    assert res.converged and len(res.trace) == 1
    assert np.array_equal(res.joints[0], res.joints[-1])
    assert res.trace[0].j_t == 0 and res.trace[0].j_r == 0


def test_kinematic_limit(setup):
    scene, world, _, start, cfg, reference = setup
    tight = SimRobot(start.joint_angles, limits=np.abs(start.joint_angles) + 1e-6)
    with pytest.raises(KinematicLimitError) as err:
        servo_loop(world, tight, reference, cfg, scene.camera, 0)
    assert err.value.result is not None and len(err.value.result.joints) == 1


def test_first_cycles_reduce_error(setup):
    scene, world, goal, start, cfg, reference = setup
    res = servo_loop(world, start, reference, cfg.replace(max_iters=15), scene.camera, 0)
    g = goal.camera_pose()
    err = [np.linalg.norm(p.translation - g.translation) for p in res.camera_poses]
    assert err[-1] < err[0]
    buf = io.StringIO()
    res.write_joints_csv(buf)
    assert buf.getvalue().splitlines()[0] == "step,q1,q2,q3,q4,q5,q6,q7"
    assert len(buf.getvalue().splitlines()) == len(res.joints) + 1
    buf = io.StringIO()
    res.write_path_csv(buf)
    assert buf.getvalue().splitlines()[0] == "step,x,y,z,qw,qx,qy,qz"
