"""Point clouds, rigid motions and the small amount of SO(3) algebra the rest
of the package shares.

Arrays are stored read-only so the dataclasses behave as values.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateCovarianceError, InsufficientPointsError

_UNIT_TOL = 1e-6
_ORTHO_TOL = 1e-9


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Points (n, 3) in meters with optional unit normals (n, 3)."""

    points: np.ndarray
    normals: np.ndarray | None = None
    frame_id: str = "world"

    def __post_init__(self):
        pts = _frozen(self.points).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = _frozen(self.normals).reshape(-1, 3)
            if len(nrm) != len(pts):
                raise ValueError(f"{len(nrm)} normals for {len(pts)} points")
            if len(nrm) and np.max(np.abs(np.linalg.norm(nrm, axis=1) - 1.0)) > _UNIT_TOL:
                raise ValueError("normals must have unit length")
            object.__setattr__(self, "normals", nrm)

    def __len__(self):
        return len(self.points)

    @property
    def has_normals(self):
        return self.normals is not None and len(self.normals) > 0

    def centroid(self):
        return self.points.mean(axis=0)

    def subset(self, index):
        nrm = None if self.normals is None else self.normals[index]
        return PointCloud(self.points[index], nrm, self.frame_id)

    def with_frame(self, frame_id):
        return PointCloud(self.points, self.normals, frame_id)

    @staticmethod
    def concat(clouds, frame_id=None):
        clouds = list(clouds)
        if not clouds:
            raise ValueError("nothing to concatenate")
        pts = np.concatenate([c.points for c in clouds])
        if all(c.normals is not None for c in clouds):
            nrm = np.concatenate([c.normals for c in clouds])
        else:
            nrm = None
        return PointCloud(pts, nrm, frame_id or clouds[0].frame_id)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """``H = (R, T)``; acts as ``p -> R p + T`` (about a pivot, see apply_transform)."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = _frozen(self.rotation).reshape(3, 3)
        t = _frozen(self.translation).reshape(3)
        if np.max(np.abs(r.T @ r - np.eye(3))) > _ORTHO_TOL or abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation must be orthonormal with det +1")
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_euler_zyz(cls, alpha, beta, gamma, translation=(0.0, 0.0, 0.0)):
        return cls(euler_zyz_to_rot(alpha, beta, gamma), translation)

    def as_matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other):
        """``self * other`` (apply ``other`` first)."""
        return RigidTransform(project_to_so3(self.rotation @ other.rotation),
                              self.rotation @ other.translation + self.translation)

    def inverse(self):
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, points):
        return np.asarray(points) @ self.rotation.T + self.translation


def apply_transform(cloud, h, pivot="origin"):
    """Map ``p -> R (p - c) + c + T`` and ``n -> R n``.

    ``pivot`` is ``"origin"``, ``"centroid"`` or an explicit 3-vector ``c``.
    """
    if isinstance(pivot, str):
        if pivot == "origin":
            c = np.zeros(3)
        elif pivot == "centroid":
            c = cloud.centroid()
        else:
            raise ValueError(f"unknown pivot {pivot!r}")
    else:
        c = np.asarray(pivot, dtype=np.float64).reshape(3)
    r, t = h.rotation, h.translation
    if np.array_equal(r, np.eye(3)) and not np.any(t):
        return cloud
    pts = (cloud.points - c) @ r.T + c + t
    nrm = None if cloud.normals is None else cloud.normals @ r.T
    return PointCloud(pts, nrm, cloud.frame_id)


def cart_to_sph(n):
    """Unit vector(s) to ``(theta, phi)``, colatitude in [0, pi], azimuth in [0, 2 pi).

    At the poles the azimuth is defined as 0.
    """
    n = np.asarray(n, dtype=np.float64)
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    rho = np.hypot(x, y)
    theta = np.arctan2(rho, z)
    phi = np.where(rho > 0.0, np.arctan2(y, x), 0.0)
    phi = np.where(phi < 0.0, phi + 2.0 * np.pi, phi)
    phi = np.where(phi >= 2.0 * np.pi, 0.0, phi)
    if theta.ndim == 0:
        return float(theta), float(phi)
    return theta, phi


def sph_to_cart(theta, phi):
    theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=np.float64),
                                     np.asarray(phi, dtype=np.float64))
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def hat(v):
    v = np.asarray(v, dtype=np.float64)
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def vee(m):
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_zyz_to_rot(alpha, beta, gamma):
    """``exp(alpha e_z^) exp(beta e_y^) exp(gamma e_z^)``."""
    return rot_z(alpha) @ rot_y(beta) @ rot_z(gamma)


def rot_to_euler_zyz(r):
    """Inverse of :func:`euler_zyz_to_rot`; alpha, gamma in [0, 2 pi), beta in [0, pi].

    In the gimbal cases (beta = 0 or pi) gamma is set to 0.
    """
    r = np.asarray(r, dtype=np.float64)
    cb = np.clip(r[2, 2], -1.0, 1.0)
    sb = np.hypot(r[0, 2], r[1, 2])
    beta = np.arctan2(sb, cb)
    if sb > 1e-12:
        alpha = np.arctan2(r[1, 2], r[0, 2])
        gamma = np.arctan2(r[2, 1], -r[2, 0])
    elif cb > 0:
        alpha = np.arctan2(r[1, 0], r[0, 0])
        gamma = 0.0
    else:
        alpha = np.arctan2(-r[0, 1], r[1, 1])
        gamma = 0.0
    two_pi = 2.0 * np.pi
    return float(alpha % two_pi), float(beta), float(gamma % two_pi)


def expm_so3(w):
    """Rodrigues formula for ``exp(hat(w))``."""
    w = np.asarray(w, dtype=np.float64)
    theta = float(np.linalg.norm(w))
    k = hat(w)
    if theta < 1e-8:
        return np.eye(3) + k + 0.5 * k @ k
    return np.eye(3) + (np.sin(theta) / theta) * k + ((1.0 - np.cos(theta)) / theta ** 2) * (k @ k)


def log_so3(r):
    """Rotation vector ``w`` with ``expm_so3(w) == r``, ``|w| <= pi``."""
    r = np.asarray(r, dtype=np.float64)
    c = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(c)
    if theta < 1e-8:
        return vee(r - r.T) / 2.0
    if np.pi - theta < 1e-6:
        # near pi: axis from the symmetric part
        m = (r + np.eye(3)) / 2.0
        i = int(np.argmax(np.diag(m)))
        axis = m[:, i] / np.sqrt(max(m[i, i], 1e-300))
        axis /= np.linalg.norm(axis)
        if np.dot(vee(r - r.T), axis) < 0:
            axis = -axis
        return theta * axis
    return theta / (2.0 * np.sin(theta)) * vee(r - r.T)


def project_to_so3(m):
    """Nearest rotation (polar factor) of a 3x3 matrix."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def geodesic_angle(r1, r2):
    """Rotation angle of ``r1^T r2`` in [0, pi]."""
    c = (np.trace(np.asarray(r1).T @ np.asarray(r2)) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def rot_to_quaternion(r):
    """Unit quaternion ``(w, x, y, z)`` with ``w >= 0``."""
    from scipy.spatial.transform import Rotation

    x, y, z, w = Rotation.from_matrix(np.asarray(r)).as_quat()
    q = np.array([w, x, y, z])
    return q if q[0] >= 0 else -q


def estimate_normals(cloud, k=12, viewpoint=None):
    """PCA normals from the ``k`` nearest neighbours of every point.

    Normals point toward ``viewpoint`` when one is given, otherwise away from
    the cloud centroid.
    """
    if k < 3:
        raise ValueError("k must be at least 3")
    n = len(cloud)
    if n < k + 1:
        raise InsufficientPointsError(f"need at least {k + 1} points for k={k}, got {n}")
    pts = cloud.points
    _, nbr = cKDTree(pts).query(pts, k=k + 1)
    local = pts[nbr] - pts[nbr].mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", local, local) / (k + 1)
    evals, evecs = np.linalg.eigh(cov)
    scale = np.maximum(evals[:, 2], 1e-300)
    if np.any(evals[:, 1] / scale < 1e-12):
        raise DegenerateCovarianceError("neighbourhood is collinear; normal undefined")
    nrm = evecs[:, :, 0]
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    if viewpoint is None:
        ref = pts - cloud.centroid()
    else:
        ref = np.asarray(viewpoint, dtype=np.float64) - pts
    flip = np.einsum("ij,ij->i", nrm, ref) < 0
    nrm[flip] *= -1.0
    return PointCloud(pts, nrm, cloud.frame_id)
