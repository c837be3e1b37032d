"""Decoupled 6-DoF update law and the spectral alignment loop.

Translation follows the phase-correlation peak between the voxelised
(transformed) reference and the target; rotation follows the analytic
gradient of the SO(3) correlation between their EGI harmonic expansions.
The two channels are updated independently:

    T <- T + lambda_t * grad_T
    R <- R exp(lambda_r * hat(grad_R))
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import harmonics
from .cloud import (RigidTransform, apply_transform, expm_so3, geodesic_angle, hat, log_so3,
                    project_to_so3, rot_to_euler_zyz, rot_to_quaternion)
from .discretize import build_egi, grid_dims, voxelize
from .errors import ConfigError, MissingNormalsError, NoConvergenceError
from .translation import PhaseCorrelator, translation_cost


@dataclass(frozen=True)
class ControllerConfig:
    """Gains, stopping rule and discretisation parameters.

    ``l_max`` of ``None`` means ``bandwidth``. ``max_linear`` and
    ``max_angular`` cap the camera twist in servo mode; ``dt`` is the
    control period and ``damping`` the pseudoinverse damping.
    """

    lambda_t: float = 0.25
    lambda_r: float = 0.25
    eps_g: float = 1e-4
    max_iters: int = 2000
    resolution: float = 0.008
    bandwidth: int = 16
    l_max: int | None = None
    max_linear: float = 0.1
    max_angular: float = 0.5
    dt: float = 0.05
    damping: float = 1e-4
    scale_rotation: bool = True
    subvoxel: bool = True
    smoothing: tuple = (0.4, 0.2, 0.1)
    stage_tol: float = 1e-3
    stage_patience: int = 10

    def __post_init__(self):
        for name in ("lambda_t", "lambda_r"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        if not self.eps_g > 0:
            raise ConfigError("eps_g must be positive")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ConfigError("max_iters must be a positive integer")
        if not self.resolution > 0:
            raise ConfigError("resolution must be positive")
        b = int(self.bandwidth)
        if b != self.bandwidth or b < 1 or b & (b - 1):
            raise ConfigError("bandwidth must be a power of two")
        if self.l_max is not None and not 1 <= self.l_max <= 2 * b:
            raise ConfigError("l_max must lie in [1, 2B]")
        for name in ("max_linear", "max_angular", "dt"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.damping < 0:
            raise ConfigError("damping must be non-negative")
        sm = tuple(float(v) for v in self.smoothing)
        if any(v <= 0 for v in sm) or any(a <= b for a, b in zip(sm, sm[1:])):
            raise ConfigError("smoothing widths must be positive and strictly decreasing")
        object.__setattr__(self, "smoothing", sm)
        if not self.stage_tol > 0:
            raise ConfigError("stage_tol must be positive")
        if int(self.stage_patience) != self.stage_patience or self.stage_patience < 1:
            raise ConfigError("stage_patience must be a positive integer")

    @property
    def degrees(self):
        return self.bandwidth if self.l_max is None else int(self.l_max)

    def to_dict(self):
        d = asdict(self)
        d["smoothing"] = list(self.smoothing)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    def replace(self, **kw):
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class ControllerState:
    h: RigidTransform = field(default_factory=RigidTransform)
    iteration: int = 0
    last_t_grad: np.ndarray | None = None
    last_r_grad: np.ndarray | None = None
    j_t: float = float("nan")
    j_r: float = float("nan")


def controller_step(state, t_grad, r_grad, cfg):
    """One application of the update law; returns the new state."""
    t_grad = np.asarray(t_grad, dtype=np.float64).reshape(3)
    r_grad = np.asarray(r_grad, dtype=np.float64).reshape(3)
    rot = state.h.rotation
    if np.any(r_grad):
        rot = project_to_so3(rot @ expm_so3(cfg.lambda_r * r_grad))
    trans = state.h.translation + cfg.lambda_t * t_grad
    return ControllerState(RigidTransform(rot, trans), state.iteration + 1,
                           t_grad, r_grad, state.j_t, state.j_r)


def converged(state, eps_g):
    """``|grad_T| + |grad_R| < eps_g`` (strict)."""
    if state.last_t_grad is None or state.last_r_grad is None:
        raise ValueError("state has no recorded gradients yet")
    return float(np.linalg.norm(state.last_t_grad) + np.linalg.norm(state.last_r_grad)) < eps_g


def camera_twist(state, cfg, dt=None, pivot=None):
    """``(v, w) = (lambda_t grad_T, lambda_r grad_R) / dt``, saturated per block.

    When the gradients describe a motion about ``pivot`` (camera-frame point)
    rather than about the camera origin, ``v`` gains the matching
    ``lambda_r pivot x grad_R / dt`` term so the pivot itself does not move
    under the rotation.
    """
    dt = cfg.dt if dt is None else dt
    if not dt > 0:
        raise ValueError("dt must be positive")
    t_grad = np.asarray(state.last_t_grad, dtype=np.float64)
    r_grad = np.asarray(state.last_r_grad, dtype=np.float64)
    v = cfg.lambda_t * t_grad / dt
    if pivot is not None:
        v = v + cfg.lambda_r * np.cross(np.asarray(pivot, dtype=np.float64), r_grad) / dt
    w = cfg.lambda_r * r_grad / dt
    nv, nw = np.linalg.norm(v), np.linalg.norm(w)
    if nv > cfg.max_linear:
        v = v * (cfg.max_linear / nv)
    if nw > cfg.max_angular:
        w = w * (cfg.max_angular / nw)
    return np.concatenate([v, w])


# --------------------------------------------------------------------------
# trace


TRACE_COLUMNS = ("iter", "j_t", "j_r", "grad_t_norm", "grad_r_norm",
                 "tx", "ty", "tz", "qw", "qx", "qy", "qz", "ms")


@dataclass(frozen=True, eq=False)
class IterationRecord:
    iteration: int
    j_t: float
    j_r: float
    grad_t_norm: float
    grad_r_norm: float
    h: RigidTransform
    ms: float

    @property
    def cost(self):
        return self.j_t + self.j_r

    def row(self):
        q = rot_to_quaternion(self.h.rotation)
        return [self.iteration, self.j_t, self.j_r, self.grad_t_norm, self.grad_r_norm,
                *self.h.translation.tolist(), *q.tolist(), self.ms]


class IterationTrace:
    """Append-only list of per-iteration records."""

    def __init__(self):
        self._records = []

    def append(self, rec):
        if self._records and rec.iteration <= self._records[-1].iteration:
            raise ValueError("iteration indices must increase")
        self._records.append(rec)

    def __len__(self):
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def __getitem__(self, i):
        return self._records[i]

    def column(self, name):
        attr = {"iter": "iteration"}.get(name, name)
        if attr == "cost":
            return np.array([r.cost for r in self._records])
        return np.array([getattr(r, attr) for r in self._records])

    def write_csv(self, fh, timing=True):
        """One row per iteration; ``timing=False`` blanks the wall-time column."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self._records:
            row = r.row()
            if not timing:
                row[-1] = ""
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])

    def to_json(self, timing=True):
        out = []
        for r in self._records:
            d = dict(zip(TRACE_COLUMNS, r.row()))
            if not timing:
                d.pop("ms")
            out.append(d)
        return json.dumps(out, indent=1)


# --------------------------------------------------------------------------
# alignment


@dataclass(frozen=True, eq=False)
class AlignResult:
    """Outcome of :func:`align`.

    ``rotation`` and ``translation`` describe the motion of the reference
    about its own centroid ``pivot``; ``transform`` is the same motion
    about the world origin, i.e. ``target ~ transform.apply(reference)``.
    """

    rotation: np.ndarray
    translation: np.ndarray
    pivot: np.ndarray
    trace: IterationTrace
    converged: bool

    @property
    def transform(self):
        return RigidTransform(self.rotation, self.pivot - self.rotation @ self.pivot + self.translation)

    @property
    def iterations(self):
        return len(self.trace)


def _rotation_scale(f):
    # mean curvature of the self-correlation at its peak; dividing by it makes
    # the gradient approximately the residual rotation vector
    k = harmonics.curvature_scale(f)
    return 1.0 / np.sqrt(k) if k > 0 else 1.0


class RotationStages:
    """Coarse-to-fine rotation gradient.

    Both expansions are blurred by each width in ``cfg.smoothing`` in turn,
    then used unblurred. A stage ends once its gradient norm drops below
    ``cfg.stage_tol`` or sets no new minimum for ``cfg.stage_patience``
    evaluations (a floor left by changing views); only the final, unblurred
    stage can report a gradient small enough to stop on.
    """

    def __init__(self, f, g, cfg):
        self.cfg = cfg
        self.widths = (*cfg.smoothing, 0.0)
        self._f = [self._prepare(f, w) for w in self.widths]
        self.set_target(g)
        self.stage = 0
        self._best = np.inf
        self._stall = 0

    def _prepare(self, c, width):
        c = harmonics.smooth_coeffs(c, width)
        return c.scaled(_rotation_scale(c)) if self.cfg.scale_rotation else c

    def set_target(self, g):
        self._g = [self._prepare(g, w) for w in self.widths]

    @property
    def width(self):
        return self.widths[self.stage]

    @property
    def final(self):
        return self.stage == len(self.widths) - 1

    def _advance(self):
        self.stage += 1
        self._best = np.inf
        self._stall = 0

    def gradient(self, rotation):
        while True:
            grad = harmonics.correlation_gradient(self._f[self.stage], self._g[self.stage], rotation)
            if self.final:
                return grad
            norm = float(np.linalg.norm(grad))
            if norm < self.cfg.stage_tol:
                self._advance()
                continue
            if norm < self._best:
                self._best, self._stall = norm, 0
            else:
                self._stall += 1
                if self._stall >= self.cfg.stage_patience:
                    self._advance()
                    continue
            return grad


class _Aligner:
    """Per-run state shared by the alignment iterations: cached target spectra."""

    def __init__(self, reference, target, cfg, bounds_margin=None):
        for name, c in (("reference", reference), ("target", target)):
            if len(c) == 0:
                raise MissingNormalsError(f"{name} cloud is empty")
            if not c.has_normals:
                raise MissingNormalsError(f"{name} cloud has no normals")
        self.cfg = cfg
        self.reference = reference
        self.target = target
        self.pivot = reference.centroid()
        lmax = cfg.degrees
        B = cfg.bandwidth

        self.target_egi = build_egi(target, B)
        self.ref_egi = build_egi(reference, B)
        g = harmonics.sph_forward(self.target_egi, lmax, normalize=True)
        f = harmonics.sph_forward(self.ref_egi, lmax, normalize=True)
        self.rotation_stages = RotationStages(f, g, cfg)

        # one lattice for the whole run: the target plus every place the
        # rotating reference can reach around either centroid
        radius = float(np.max(np.linalg.norm(reference.points - self.pivot, axis=1)))
        tc = target.centroid()
        lo = np.minimum.reduce([target.points.min(0), self.pivot - radius, tc - radius])
        hi = np.maximum.reduce([target.points.max(0), self.pivot + radius, tc + radius])
        r = cfg.resolution
        lo, hi = lo - r, hi + r
        self.dims = grid_dims(hi - lo, r)
        self.bounds = (lo, lo + np.asarray(self.dims) * r)
        self.target_grid = voxelize(target, r, self.bounds, dims=self.dims, drop_outside=True)
        self.correlator = PhaseCorrelator(self.target_grid, subvoxel=cfg.subvoxel)

    def moved_reference(self, rotation, translation):
        return apply_transform(self.reference, RigidTransform(rotation, translation), pivot=self.pivot)

    def reference_grid(self, rotation, translation):
        moved = self.moved_reference(rotation, translation)
        return voxelize(moved, self.cfg.resolution, self.bounds, dims=self.dims, drop_outside=True)

    def translation_gradient(self, ref_grid):
        # shift carrying the moved reference onto the target
        return self.correlator.estimate(ref_grid).t_glob

    def rotation_gradient(self, rotation):
        return self.rotation_stages.gradient(rotation)

    def costs(self, ref_grid, rotation, delta):
        j_t = translation_cost(ref_grid, self.target_grid, -np.asarray(delta))
        j_r = harmonics.rotation_cost(self.ref_egi, self.target_egi, rotation)
        return j_t, j_r


def align(reference, target, cfg=None, *, raise_on_failure=False, hook=None):
    """Register ``reference`` onto ``target``.

    Each iteration moves the reference by the current estimate (rotation
    about its centroid), voxelises it on a fixed lattice shared with the
    target, takes the phase-correlation shift as the translation gradient
    and the SO(3) correlation gradient as the rotation gradient, applies the
    update law and records both costs. Iteration stops once the gradient
    norms sum below ``cfg.eps_g`` or after ``cfg.max_iters`` iterations.

    ``hook(stage, **info)``, when given, is called at each stage of every
    iteration (``"discretise"``, ``"gradients"``, ``"update"``, ``"cost"``).

    Returns an :class:`AlignResult`; with ``raise_on_failure`` a
    :class:`NoConvergenceError` carrying the result is raised instead of
    returning an unconverged one.
    """
    cfg = cfg or ControllerConfig()
    run = _Aligner(reference, target, cfg)
    hook = hook or (lambda stage, **info: None)
    state = ControllerState()
    trace = IterationTrace()
    done = False
    while state.iteration < cfg.max_iters:
        t0 = time.perf_counter()
        rot, trans = state.h.rotation, state.h.translation
        grid = run.reference_grid(rot, trans)
        hook("discretise", grid=grid, state=state)
        t_grad = run.translation_gradient(grid)
        r_grad = run.rotation_gradient(rot)
        hook("gradients", t_grad=t_grad, r_grad=r_grad)
        state = controller_step(state, t_grad, r_grad, cfg)
        hook("update", state=state)
        j_t, j_r = run.costs(grid, state.h.rotation, cfg.lambda_t * t_grad)
        state = replace(state, j_t=j_t, j_r=j_r)
        hook("cost", j_t=j_t, j_r=j_r)
        ms = (time.perf_counter() - t0) * 1e3
        trace.append(IterationRecord(state.iteration, j_t, j_r, float(np.linalg.norm(t_grad)),
                                     float(np.linalg.norm(r_grad)), state.h, ms))
        if converged(state, cfg.eps_g):
            done = True
            break
    result = AlignResult(state.h.rotation, state.h.translation, run.pivot, trace, done)
    if not done and raise_on_failure:
        raise NoConvergenceError(f"no convergence after {cfg.max_iters} iterations", result)
    return result


def pose_errors(est_rotation, est_translation, true_rotation, true_translation):
    """Mean squared translation error (m^2) and mean squared rotation error (rad^2).

    Both are averaged over the three components; the rotation error uses the
    rotation vector of ``R_true^T R_est``.
    """
    dt = np.asarray(est_translation) - np.asarray(true_translation)
    w = log_so3(np.asarray(true_rotation).T @ np.asarray(est_rotation))
    return float(np.mean(dt * dt)), float(np.mean(w * w))


def transform_summary(h):
    """JSON-ready description of a rigid transform."""
    return {
        "translation": h.translation.tolist(),
        "quaternion_wxyz": rot_to_quaternion(h.rotation).tolist(),
        "euler_zyz": list(rot_to_euler_zyz(h.rotation)),
        "matrix": h.as_matrix().tolist(),
    }


__all__ = [
    "ControllerConfig", "ControllerState", "IterationRecord", "IterationTrace", "AlignResult",
    "controller_step", "converged", "camera_twist", "align", "pose_errors", "transform_summary",
    "geodesic_angle", "hat",
]
