"""Spectral-domain point-cloud registration and simulated 3D visual servoing.

Translation is found by phase correlation of voxel grids, rotation by
gradient ascent on the SO(3) correlation of Extended Gaussian Images.
"""
from .cloud import PointCloud, RigidTransform, apply_transform, estimate_normals, geodesic_angle
from .controller import (AlignResult, ControllerConfig, IterationTrace, align, pose_errors,
                         transform_summary)
from .discretize import Egi, VoxelGrid, build_egi, voxelize
from .errors import (ConfigError, KinematicLimitError, NoConvergenceError, SpectralServoError)
from .harmonics import SphCoeffs, correlation_gradient, so3_correlation, sph_forward
from .io import load_cloud, save_cloud
from .kernels import BACKEND
from .robot import SimRobot
from .scene import Scene, load_scene
from .servo import ServoResult, servo_loop
from .sim import CameraModel, SceneObject, capture, make_clutter, synth_object
from .translation import PhaseCorrelator, estimate_translation

__version__ = "0.1.0"

__all__ = [
    "PointCloud", "RigidTransform", "apply_transform", "estimate_normals", "geodesic_angle",
    "AlignResult", "ControllerConfig", "IterationTrace", "align", "pose_errors", "transform_summary",
    "Egi", "VoxelGrid", "build_egi", "voxelize",
    "ConfigError", "KinematicLimitError", "NoConvergenceError", "SpectralServoError",
    "SphCoeffs", "correlation_gradient", "so3_correlation", "sph_forward",
    "load_cloud", "save_cloud", "BACKEND", "SimRobot", "Scene", "load_scene",
    "ServoResult", "servo_loop", "CameraModel", "SceneObject", "capture", "make_clutter",
    "synth_object", "PhaseCorrelator", "estimate_translation",
]
