"""Synthetic scenes and a simulated depth camera.

Objects are surface-sampled with analytic normals; the camera applies
frustum/range culling, hidden-point removal and depth noise along the
viewing rays. Everything is a pure function of its inputs and a seed.

Camera frames follow the usual optical convention: z forward, x right,
y down.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull

from .cloud import PointCloud, RigidTransform, apply_transform, euler_zyz_to_rot, rot_z
from .errors import EmptyViewError, UnsupportedShapeError

SHAPES = ("sphere", "box", "cylinder", "superellipsoid", "mesh", "mug")
DEFAULT_DENSITY = 2.0e5  # points per m^2


@dataclass(frozen=True, eq=False)
class SceneObject:
    """A primitive (or OBJ mesh) placed in the world.

    ``dimensions`` per kind:

    * sphere: ``(radius,)``
    * box: ``(sx, sy, sz)`` full edge lengths
    * cylinder: ``(radius, height)``, closed, axis along z
    * superellipsoid: ``(a, b, c, e1, e2)`` with exponents in (0, 2]
    * mug: ``(radius, height)``, open top with a box handle on +x
    * mesh: ``()``; ``path`` names a Wavefront OBJ file
    """

    kind: str
    dimensions: tuple = ()
    pose: RigidTransform = field(default_factory=RigidTransform)
    density: float = DEFAULT_DENSITY
    path: str | None = None

    def __post_init__(self):
        if self.kind not in SHAPES:
            raise UnsupportedShapeError(f"unknown shape kind {self.kind!r}")
        dims = tuple(float(d) for d in self.dimensions)
        object.__setattr__(self, "dimensions", dims)
        needed = {"sphere": 1, "box": 3, "cylinder": 2, "superellipsoid": 5, "mug": 2, "mesh": 0}[self.kind]
        if len(dims) != needed:
            raise ValueError(f"{self.kind} needs {needed} dimensions, got {len(dims)}")
        if any(d <= 0 for d in dims):
            raise ValueError("dimensions must be positive")
        if not self.density > 0:
            raise ValueError("density must be positive")
        if self.kind == "superellipsoid" and (dims[3] > 2 or dims[4] > 2):
            raise ValueError("superellipsoid exponents must lie in (0, 2]")
        if self.kind == "mesh" and not self.path:
            raise ValueError("mesh objects need a path")


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole-like depth camera; ``pose`` maps camera to world coordinates."""

    pose: RigidTransform = field(default_factory=RigidTransform)
    hfov: float = np.deg2rad(70.0)
    vfov: float = np.deg2rad(55.0)
    min_range: float = 0.1
    max_range: float = 2.0
    sigma: float = 0.001

    def __post_init__(self):
        for name in ("hfov", "vfov"):
            v = getattr(self, name)
            if not 0 < v < np.pi:
                raise ValueError(f"{name} must lie in (0, pi)")
        if not 0 <= self.min_range < self.max_range:
            raise ValueError("need 0 <= min_range < max_range")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    def with_pose(self, pose):
        return CameraModel(pose, self.hfov, self.vfov, self.min_range, self.max_range, self.sigma)


def look_at(eye, target, up=(0.0, 0.0, 1.0)):
    """Camera pose at ``eye`` whose optical axis points at ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    z /= np.linalg.norm(z)
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(z, (1.0, 0.0, 0.0))
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return RigidTransform(np.column_stack([x, y, z]), eye)


# --------------------------------------------------------------------------
# surface sampling


def _count(area, density):
    return max(1, int(round(area * density)))


def _sample_triangles(v0, v1, v2, n, rng):
    """Area-weighted uniform samples on a triangle set; returns points and face ids."""
    cross = np.cross(v1 - v0, v2 - v0)
    area = 0.5 * np.linalg.norm(cross, axis=1)
    face = rng.choice(len(area), size=n, p=area / area.sum())
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    pts = ((1 - r1)[:, None] * v0[face] + (r1 * (1 - r2))[:, None] * v1[face]
           + (r1 * r2)[:, None] * v2[face])
    return pts, face


def _sphere(dims, density, rng):
    (r,) = dims
    n = _count(4 * np.pi * r * r, density)
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return r * d, d


def _box(dims, density, rng):
    half = 0.5 * np.asarray(dims)
    areas = np.array([dims[1] * dims[2], dims[0] * dims[2], dims[0] * dims[1]])
    face_areas = np.repeat(areas, 2)
    n = _count(face_areas.sum(), density)
    face = rng.choice(6, size=n, p=face_areas / face_areas.sum())
    pts = (rng.random((n, 3)) * 2 - 1) * half
    axis = face // 2
    sign = np.where(face % 2 == 0, 1.0, -1.0)
    pts[np.arange(n), axis] = sign * half[axis]
    nrm = np.zeros((n, 3))
    nrm[np.arange(n), axis] = sign
    return pts, nrm


def _disc(radius, z, sign, n, rng):
    rad = radius * np.sqrt(rng.random(n))
    ang = rng.random(n) * 2 * np.pi
    pts = np.column_stack([rad * np.cos(ang), rad * np.sin(ang), np.full(n, z)])
    nrm = np.zeros((n, 3))
    nrm[:, 2] = sign
    return pts, nrm


def _tube(radius, height, n, rng):
    ang = rng.random(n) * 2 * np.pi
    z = (rng.random(n) - 0.5) * height
    nrm = np.column_stack([np.cos(ang), np.sin(ang), np.zeros(n)])
    return nrm * radius + np.column_stack([np.zeros((n, 2)), z]), nrm


def _cylinder(dims, density, rng):
    r, h = dims
    side, cap = 2 * np.pi * r * h, np.pi * r * r
    n = _count(side + 2 * cap, density)
    k = rng.multinomial(n, np.array([side, cap, cap]) / (side + 2 * cap))
    parts = [_tube(r, h, k[0], rng), _disc(r, 0.5 * h, 1.0, k[1], rng), _disc(r, -0.5 * h, -1.0, k[2], rng)]
    return np.vstack([p for p, _ in parts]), np.vstack([q for _, q in parts])


def _mug(dims, density, rng):
    """Open-top cylinder with a bottom and a box handle; the handle breaks the axial symmetry."""
    r, h = dims
    hx, hy, hz = 0.6 * r, 0.3 * r, 0.6 * h
    side, bottom = 2 * np.pi * r * h, np.pi * r * r
    handle_area = 2 * (hx * hy + hx * hz + hy * hz)
    total = side + bottom + handle_area
    k = rng.multinomial(_count(total, density), np.array([side, bottom, handle_area]) / total)
    tube = _tube(r, h, k[0], rng)
    base = _disc(r, -0.5 * h, -1.0, k[1], rng)
    hp, hn = _box((hx, hy, hz), max(k[2], 1) / handle_area, rng)
    hp = hp + np.array([r + 0.5 * hx, 0.0, 0.0])
    return np.vstack([tube[0], base[0], hp]), np.vstack([tube[1], base[1], hn])


def _superellipsoid_implicit_normal(p, a, b, c, e1, e2):
    x, y, z = (p[:, 0] / a, p[:, 1] / b, p[:, 2] / c)
    ax, ay, az = np.abs(x), np.abs(y), np.abs(z)
    q = 2.0 / e2
    s = ax ** q + ay ** q
    outer = (e2 / e1) * np.where(s > 0, s, 1.0) ** (e2 / e1 - 1.0)
    gx = outer * q * ax ** (q - 1) * np.sign(x) / a
    gy = outer * q * ay ** (q - 1) * np.sign(y) / b
    gz = (2.0 / e1) * az ** (2.0 / e1 - 1) * np.sign(z) / c
    g = np.column_stack([gx, gy, gz])
    norm = np.linalg.norm(g, axis=1, keepdims=True)
    # at sharp corners fall back to the radial direction
    radial = p / np.maximum(np.linalg.norm(p, axis=1, keepdims=True), 1e-300)
    return np.where(norm > 1e-12, g / np.maximum(norm, 1e-300), radial)


def _superellipsoid(dims, density, rng, resolution=96):
    a, b, c, e1, e2 = dims

    def spow(v, e):
        return np.sign(v) * np.abs(v) ** e

    eta = np.linspace(-np.pi / 2, np.pi / 2, resolution + 1)
    omega = np.linspace(-np.pi, np.pi, 2 * resolution + 1)
    E, W = np.meshgrid(eta, omega, indexing="ij")
    verts = np.stack([a * spow(np.cos(E), e1) * spow(np.cos(W), e2),
                      b * spow(np.cos(E), e1) * spow(np.sin(W), e2),
                      c * spow(np.sin(E), e1)], axis=-1)
    v00, v01 = verts[:-1, :-1].reshape(-1, 3), verts[:-1, 1:].reshape(-1, 3)
    v10, v11 = verts[1:, :-1].reshape(-1, 3), verts[1:, 1:].reshape(-1, 3)
    t0 = np.vstack([v00, v00])
    t1 = np.vstack([v01, v11])
    t2 = np.vstack([v11, v10])
    area = 0.5 * np.linalg.norm(np.cross(t1 - t0, t2 - t0), axis=1)
    keep = area > 1e-18
    t0, t1, t2 = t0[keep], t1[keep], t2[keep]
    n = _count(area.sum(), density)
    pts, _ = _sample_triangles(t0, t1, t2, n, rng)
    return pts, _superellipsoid_implicit_normal(pts, a, b, c, e1, e2)


def load_obj_mesh(path):
    """Vertices and triangular faces (fans for polygons) of a Wavefront OBJ file."""
    verts, faces = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            tok = raw.split()
            if not tok:
                continue
            if tok[0] == "v":
                verts.append([float(t) for t in tok[1:4]])
            elif tok[0] == "f":
                idx = [int(t.split("/")[0]) for t in tok[1:]]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    return np.asarray(verts, dtype=np.float64).reshape(-1, 3), np.asarray(faces, dtype=np.int64).reshape(-1, 3)


def _mesh(path, density, rng):
    verts, faces = load_obj_mesh(path)
    if len(faces) == 0:
        raise UnsupportedShapeError(f"{path}: mesh has no faces")
    v0, v1, v2 = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    cross = np.cross(v1 - v0, v2 - v0)
    twice_area = np.linalg.norm(cross, axis=1)
    bad = twice_area <= 1e-15
    if np.any(bad):
        warnings.warn(f"{path}: skipped {int(bad.sum())} degenerate triangle(s)", RuntimeWarning, stacklevel=3)
    if np.all(bad):
        raise UnsupportedShapeError(f"{path}: every triangle is degenerate")
    v0, v1, v2, cross, twice_area = v0[~bad], v1[~bad], v2[~bad], cross[~bad], twice_area[~bad]
    pts, face = _sample_triangles(v0, v1, v2, _count(0.5 * twice_area.sum(), density), rng)
    return pts, cross[face] / twice_area[face, None]


def synth_object(obj, seed=0):
    """Surface samples of ``obj`` with analytic normals, posed in the world."""
    rng = np.random.default_rng(seed)
    if obj.kind == "sphere":
        pts, nrm = _sphere(obj.dimensions, obj.density, rng)
    elif obj.kind == "box":
        pts, nrm = _box(obj.dimensions, obj.density, rng)
    elif obj.kind == "cylinder":
        pts, nrm = _cylinder(obj.dimensions, obj.density, rng)
    elif obj.kind == "superellipsoid":
        pts, nrm = _superellipsoid(obj.dimensions, obj.density, rng)
    elif obj.kind == "mug":
        pts, nrm = _mug(obj.dimensions, obj.density, rng)
    elif obj.kind == "mesh":
        pts, nrm = _mesh(obj.path, obj.density, rng)
    else:  # pragma: no cover - guarded in SceneObject
        raise UnsupportedShapeError(obj.kind)
    nrm = nrm / np.linalg.norm(nrm, axis=1, keepdims=True)
    return apply_transform(PointCloud(pts, nrm), obj.pose)


def make_clutter(objects, seed=0):
    """Union of all objects' samples; object ``i`` is sampled with ``seed + i``."""
    objects = list(objects)
    if not objects:
        raise ValueError("need at least one object")
    return PointCloud.concat([synth_object(o, seed + i) for i, o in enumerate(objects)])


def footprint_radius(obj):
    """Largest horizontal distance of the (rotated, untranslated) surface from the object's origin."""
    coarse = SceneObject(obj.kind, obj.dimensions, RigidTransform(obj.pose.rotation), 2e4 / _area_hint(obj), obj.path)
    pts = synth_object(coarse, 0).points
    return float(np.max(np.hypot(pts[:, 0], pts[:, 1])))


def _area_hint(obj):
    d = obj.dimensions
    if obj.kind == "mesh":
        return 1.0
    scale = max(d[:3]) if obj.kind == "superellipsoid" else max(d)
    return 4 * np.pi * scale * scale


def scatter_objects(objects, seed, region=((-0.25, -0.25), (0.25, 0.25)), gap=0.01, max_tries=1000):
    """Randomly place objects on the table plane without footprint overlap.

    Each object keeps its own height; x, y and the yaw are drawn uniformly.
    """
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(region[0], dtype=float), np.asarray(region[1], dtype=float)
    placed, centres, radii = [], [], []
    for obj in objects:
        rad = footprint_radius(obj)
        for _ in range(max_tries):
            xy = lo + rng.random(2) * (hi - lo)
            if all(np.linalg.norm(xy - c) >= rad + r + gap for c, r in zip(centres, radii)):
                break
        else:
            raise ValueError("could not place objects without overlap; enlarge the region")
        yaw = rng.random() * 2 * np.pi
        pose = RigidTransform(rot_z(yaw) @ obj.pose.rotation,
                              (xy[0], xy[1], obj.pose.translation[2]))
        placed.append(SceneObject(obj.kind, obj.dimensions, pose, obj.density, obj.path))
        centres.append(xy)
        radii.append(rad)
    return placed


# --------------------------------------------------------------------------
# capture


def hidden_point_removal(points, exponent=3.0):
    """Indices of points visible from the origin by spherical flipping.

    Points are reflected through a sphere of radius ``max|p| * 10**exponent``;
    those on the convex hull of the reflected set plus the origin are visible.
    """
    n = len(points)
    if n < 4:
        return np.arange(n)
    norms = np.linalg.norm(points, axis=1)
    radius = norms.max() * 10.0 ** exponent
    flipped = points + 2.0 * (radius - norms)[:, None] * points / norms[:, None]
    hull = ConvexHull(np.vstack([flipped, np.zeros((1, 3))]))
    vis = hull.vertices[hull.vertices < n]
    return np.sort(vis)


def capture(scene, cam, seed=0, *, frame="world", hpr=True, backface=True,
            hpr_exponent=3.0, outlier_fraction=0.0):
    """Simulated depth capture of ``scene`` from ``cam``.

    Points are kept when they fall inside the field of view and range, face
    the camera and survive hidden-point removal. Gaussian noise of
    ``cam.sigma`` is then applied along each viewing ray. With
    ``outlier_fraction`` that many extra points (relative to the kept count)
    are scattered uniformly over the visible bounding box with random
    normals. ``frame`` is ``"world"`` or ``"camera"``.
    """
    if len(scene) == 0:
        raise EmptyViewError("scene is empty")
    if frame not in ("world", "camera"):
        raise ValueError(f"unknown frame {frame!r}")
    rng = np.random.default_rng(seed)
    rot, eye = cam.pose.rotation, cam.pose.translation
    pc = (scene.points - eye) @ rot
    dist = np.linalg.norm(pc, axis=1)
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        keep = ((z > 0)
                & (np.abs(pc[:, 0]) <= np.tan(cam.hfov / 2) * z)
                & (np.abs(pc[:, 1]) <= np.tan(cam.vfov / 2) * z)
                & (dist >= cam.min_range) & (dist <= cam.max_range))
    nc = None
    if scene.normals is not None:
        nc = scene.normals @ rot
        if backface:
            keep &= np.einsum("ij,ij->i", nc, pc) < 0
    idx = np.flatnonzero(keep)
    if len(idx) == 0:
        raise EmptyViewError("no scene point inside the camera view")
    if hpr:
        idx = idx[hidden_point_removal(pc[idx], hpr_exponent)]
    # world and camera copies are displaced separately so that with
    # sigma = 0 the world-frame output holds the scene points bit-for-bit
    pts, wpts = pc[idx], scene.points[idx]
    if cam.sigma > 0:
        noise = rng.normal(scale=cam.sigma, size=len(pts))[:, None]
        pts = pts + noise * (pts / np.linalg.norm(pts, axis=1, keepdims=True))
        wray = wpts - eye
        wpts = wpts + noise * (wray / np.linalg.norm(wray, axis=1, keepdims=True))
    nrm = None if nc is None else nc[idx]
    wnrm = None if nc is None else scene.normals[idx]
    if outlier_fraction > 0:
        k = int(round(outlier_fraction * len(pts)))
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        extra = lo + rng.random((k, 3)) * (hi - lo)
        pts = np.vstack([pts, extra])
        wpts = np.vstack([wpts, extra @ rot.T + eye])
        if nrm is not None:
            rn = rng.normal(size=(k, 3))
            rn /= np.linalg.norm(rn, axis=1, keepdims=True)
            nrm = np.vstack([nrm, rn])
            wnrm = np.vstack([wnrm, rn @ rot.T])
    if frame == "world":
        return PointCloud(wpts, wnrm, "world")
    return PointCloud(pts, nrm, "camera")


def crop_half(cloud, axis=0, keep="upper"):
    """Keep the half of ``cloud`` on one side of its centroid along ``axis``."""
    c = cloud.centroid()[axis]
    mask = cloud.points[:, axis] >= c if keep == "upper" else cloud.points[:, axis] < c
    return cloud.subset(np.flatnonzero(mask))


def pose_from_xyz_zyz(xyz, zyz):
    return RigidTransform(euler_zyz_to_rot(*zyz), xyz)
