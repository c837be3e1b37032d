import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectral_servo.cloud import RigidTransform, apply_transform, euler_zyz_to_rot, geodesic_angle, rot_z
from spectral_servo.controller import (ControllerConfig, ControllerState, IterationRecord, IterationTrace,
                                       align, camera_twist, controller_step, converged, pose_errors,
                                       transform_summary)
from spectral_servo.errors import ConfigError, MissingNormalsError, NoConvergenceError
from spectral_servo.sim import SceneObject, synth_object

vec3 = st.lists(st.floats(-1, 1), min_size=3, max_size=3).map(np.array)


def state_with(t, r):
    return ControllerState(last_t_grad=np.asarray(t, float), last_r_grad=np.asarray(r, float))


@pytest.fixture(scope="module")
def mug():
    return synth_object(SceneObject("mug", (0.04, 0.1), RigidTransform(np.eye(3), (0, 0, 0.05)), 1e5), 0)


class TestStep:
    def test_zero_gradients(self):
        s0 = ControllerState(RigidTransform(rot_z(0.3), (1, 2, 3)), 4)
        s1 = controller_step(s0, np.zeros(3), np.zeros(3), ControllerConfig())
        assert s1.iteration == 5
        assert np.array_equal(s1.h.rotation, s0.h.rotation) and np.array_equal(s1.h.translation, s0.h.translation)

    def test_translation(self):
        s = controller_step(ControllerState(), [0.02, 0, 0], np.zeros(3), ControllerConfig(lambda_t=0.5))
        assert np.allclose(s.h.translation, [0.01, 0, 0], atol=1e-15)

    def test_rotation(self):
        r0 = euler_zyz_to_rot(0.2, 0.4, 0.1)
        cfg = ControllerConfig(lambda_r=0.5)
        s = controller_step(ControllerState(RigidTransform(r0)), np.zeros(3), [0, 0, np.pi], cfg)
        assert np.allclose(s.h.rotation, r0 @ rot_z(np.pi / 2), atol=1e-12)

    @given(vec3, vec3)
    def test_decoupled(self, t, r):
        cfg = ControllerConfig()
        s0 = ControllerState(RigidTransform(rot_z(0.7), (0.1, 0.2, 0.3)))
        a = controller_step(s0, t, np.zeros(3), cfg)
        assert np.array_equal(a.h.rotation, s0.h.rotation)
        b = controller_step(s0, np.zeros(3), r, cfg)
        assert np.array_equal(b.h.translation, s0.h.translation)

    def test_many_steps_stay_orthonormal(self):
        rng = np.random.default_rng(0)
        cfg = ControllerConfig(lambda_r=0.9)
        s = ControllerState()
        for _ in range(10_000):
            s = controller_step(s, np.zeros(3), rng.normal(size=3), cfg)
        r = s.h.rotation
        assert np.max(np.abs(r.T @ r - np.eye(3))) < 1e-8 and np.isclose(np.linalg.det(r), 1)


class TestConverged:
    def test_zero(self):
        assert converged(state_with([0, 0, 0], [0, 0, 0]), 1e-6)

    def test_large(self):
        assert not converged(state_with([1e-3, 0, 0], [0, 0, 0]), 1e-6)

    def test_strict_boundary(self):
        assert not converged(state_with([0.25, 0, 0], [0, 0.5, 0]), 0.75)
        assert converged(state_with([0.25, 0, 0], [0, 0.5, 0]), np.nextafter(0.75, 1))

    def test_needs_gradients(self):
        with pytest.raises(ValueError):
            converged(ControllerState(), 1e-3)


class TestTwist:
    def test_zero(self):
        assert np.array_equal(camera_twist(state_with([0, 0, 0], [0, 0, 0]), ControllerConfig()), np.zeros(6))

    def test_translation(self):
        tw = camera_twist(state_with([0.02, 0, 0], [0, 0, 0]), ControllerConfig(lambda_t=0.25), dt=0.1)
        assert np.allclose(tw, [0.05, 0, 0, 0, 0, 0])

    @given(vec3.map(lambda v: 100 * v), vec3.map(lambda v: 100 * v))
    def test_saturation(self, t, r):
        cfg = ControllerConfig()
        tw = camera_twist(state_with(t, r), cfg, pivot=(0, 0, 0.5))
        assert np.linalg.norm(tw[:3]) <= cfg.max_linear * (1 + 1e-12)
        assert np.linalg.norm(tw[3:]) <= cfg.max_angular * (1 + 1e-12)

    def test_pivot_term_keeps_pivot_fixed(self):
        cfg = ControllerConfig(max_linear=10, max_angular=10)
        pivot = np.array([0.0, 0.0, 0.4])
        tw = camera_twist(state_with([0, 0, 0], [0, 0.1, 0]), cfg, pivot=pivot)
        # a point moving rigidly with the camera has velocity v + w x p; at the pivot that matches a pure rotation
        assert np.allclose(tw[:3] + np.cross(tw[3:], pivot), 0)

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            camera_twist(state_with([0, 0, 0], [0, 0, 0]), ControllerConfig(), dt=0)


class TestConfig:
    @pytest.mark.parametrize("kw", [{"lambda_t": 1.0}, {"lambda_r": 0.0}, {"eps_g": 0}, {"max_iters": 0},
                                    {"max_iters": 1.5}, {"bandwidth": 12}, {"l_max": 40}, {"resolution": -1},
                                    {"smoothing": (0.1, 0.2)}, {"damping": -1}, {"stage_patience": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            ControllerConfig(**kw)

    def test_config_error_is_value_error(self):
        with pytest.raises(ValueError):
            ControllerConfig(lambda_t=2)

    def test_round_trip(self):
        cfg = ControllerConfig(lambda_t=0.3, smoothing=(0.5,), l_max=8)
        assert ControllerConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
        with pytest.raises(ConfigError):
            ControllerConfig.from_dict({"gain": 1})
        assert cfg.degrees == 8 and ControllerConfig().degrees == 16


class TestTrace:
    def trace(self):
        tr = IterationTrace()
        for i in (1, 2):
            tr.append(IterationRecord(i, 0.5 / i, 0.25, 0.1, 0.2, RigidTransform(rot_z(0.1 * i), (i, 0, 0)), 3.0))
        return tr

    def test_csv(self):
        buf = io.StringIO()
        self.trace().write_csv(buf, timing=False)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "iter,j_t,j_r,grad_t_norm,grad_r_norm,tx,ty,tz,qw,qx,qy,qz,ms"
        assert len(lines) == 3 and lines[1].startswith("1,0.5,0.25,0.1,0.2,1.0,0.0,0.0,") and lines[1].endswith(",")

    def test_json(self):
        rows = json.loads(self.trace().to_json())
        assert rows[1]["iter"] == 2 and rows[1]["ms"] == 3.0 and np.isclose(rows[1]["qw"], np.cos(0.1))
        assert "ms" not in json.loads(self.trace().to_json(timing=False))[0]

    def test_monotone(self):
        tr = self.trace()
        with pytest.raises(ValueError):
            tr.append(tr[0])
        assert np.allclose(tr.column("cost"), [0.75, 0.5])


class TestAlign:
    def test_identical_clouds(self, mug):
        res = align(mug, mug)
        assert res.converged and res.iterations <= 2
        assert np.linalg.norm(res.transform.translation) < 0.008
        assert geodesic_angle(res.transform.rotation, np.eye(3)) < np.deg2rad(1)

    def test_stage_order(self, mug):
        stages = []
        target = apply_transform(mug, RigidTransform(rot_z(0.2), (0.02, 0, 0)))
        align(mug, target, ControllerConfig(max_iters=2), hook=lambda stage, **_: stages.append(stage))
        assert stages == ["discretise", "gradients", "update", "cost"] * 2

    def test_missing_normals(self, mug):
        from spectral_servo.cloud import PointCloud

        with pytest.raises(MissingNormalsError):
            align(PointCloud(mug.points), mug)

    def test_no_convergence(self, mug):
        target = apply_transform(mug, RigidTransform(rot_z(0.3), (0.03, 0, 0)))
        res = align(mug, target, ControllerConfig(max_iters=3))
        assert not res.converged and res.iterations == 3
        with pytest.raises(NoConvergenceError) as err:
            align(mug, target, ControllerConfig(max_iters=1), raise_on_failure=True)
        assert len(err.value.result.trace) == 1

    @pytest.mark.slow
    def test_halved_gains_still_converge(self, mug):
        h = RigidTransform(euler_zyz_to_rot(0.3, 0.2, -0.1), (0.03, -0.02, 0.01))
        target = apply_transform(mug, h, pivot="centroid")
        for gains in (0.25, 0.125):
            res = align(mug, target, ControllerConfig(lambda_t=gains, lambda_r=gains))
            et, er = pose_errors(res.rotation, res.translation, h.rotation, h.translation)
            assert res.converged and et < 1e-4 and er < 5e-2


def test_pose_errors():
    et, er = pose_errors(rot_z(0.3), [0.1, 0, 0], np.eye(3), [0, 0, 0])
    assert np.isclose(et, 0.01 / 3) and np.isclose(er, 0.09 / 3)


def test_transform_summary():
    d = transform_summary(RigidTransform(rot_z(np.pi / 2), (1, 2, 3)))
    assert d["translation"] == [1, 2, 3]
    assert np.allclose(d["quaternion_wxyz"], [np.cos(np.pi / 4), 0, 0, np.sin(np.pi / 4)])
    assert np.allclose(d["matrix"][0], [0, -1, 0, 1])
