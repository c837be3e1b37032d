"""Voxel occupancy grids (translation channel) and Extended Gaussian Images
(rotation channel) built from point clouds.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import kernels
from .cloud import cart_to_sph, sph_to_cart
from .errors import EmptyCloudError, MissingNormalsError, PointOutsideBoundsError

DEFAULT_RESOLUTION = 0.008
DEFAULT_BANDWIDTH = 16
DEFAULT_PAD_FRACTION = 0.25


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Binary occupancy on an ``M x N x L`` lattice.

    ``origin`` is the world position of the (0, 0, 0) voxel corner.
    """

    resolution: float
    origin: np.ndarray
    occupancy: np.ndarray

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        origin = np.array(self.origin, dtype=np.float64).reshape(3)
        occ = np.asarray(self.occupancy, dtype=np.uint8)
        if occ.ndim != 3:
            raise ValueError("occupancy must be a 3-D array")
        origin.setflags(write=False)
        occ.setflags(write=False)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "occupancy", occ)

    @property
    def dims(self):
        return tuple(int(d) for d in self.occupancy.shape)

    @property
    def occupied_count(self):
        return int(self.occupancy.sum())

    def same_lattice(self, other):
        return (self.dims == other.dims and self.resolution == other.resolution
                and np.array_equal(self.origin, other.origin))

    def occupied_indices(self):
        return np.argwhere(self.occupancy > 0)

    def voxel_centers(self):
        """World coordinates of the centres of occupied voxels."""
        return self.origin + (self.occupied_indices() + 0.5) * self.resolution


@dataclass(frozen=True, eq=False)
class Egi:
    """Histogram of normal directions on the ``2B x 2B`` sphere grid, indexed (j, k)."""

    bandwidth: int
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        n = 2 * self.bandwidth
        if counts.shape != (n, n):
            raise ValueError(f"counts must be {n}x{n}")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self):
        return int(self.counts.sum())

    def normalized(self):
        """Counts divided by total mass (all zeros for an empty EGI)."""
        total = self.total
        if total == 0:
            return np.zeros(self.counts.shape)
        return self.counts / float(total)


def is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


def next_power_of_two(n):
    return 1 << max(0, int(np.ceil(np.log2(max(int(n), 1)))))


def grid_dims(extent, resolution, pad_fraction=DEFAULT_PAD_FRACTION, pow2=True):
    """Lattice size covering ``extent`` meters per axis.

    At least ``pad_fraction`` extra zero cells are added per axis and, with
    ``pow2``, each axis is rounded up to a power of two.
    """
    extent = np.asarray(extent, dtype=np.float64)
    need = np.floor(extent / resolution + 1e-9).astype(np.int64) + 1
    padded = np.ceil(need * (1.0 + pad_fraction) - 1e-9).astype(np.int64)
    if pow2:
        padded = np.array([next_power_of_two(p) for p in padded])
    return tuple(int(p) for p in padded)


def voxelize(cloud, resolution=DEFAULT_RESOLUTION, bounds=None, *, dims=None,
             pad_fraction=DEFAULT_PAD_FRACTION, pow2=True, drop_outside=False):
    """Binary voxel grid of ``cloud``.

    ``bounds`` is ``(lo, hi)``; its ``lo`` corner becomes the grid origin.
    Without bounds the origin is the cloud's minimum corner minus half a
    voxel. Indices are ``floor((p - origin) / resolution)``.

    ``dims`` fixes the lattice size; otherwise it is derived from the bounds
    by :func:`grid_dims`. Points outside explicit bounds raise
    :class:`PointOutsideBoundsError` unless ``drop_outside`` is set.
    """
    if len(cloud) == 0:
        raise EmptyCloudError("cannot voxelize an empty cloud")
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    pts = cloud.points
    if bounds is None:
        lo = pts.min(axis=0) - 0.5 * resolution
        hi = pts.max(axis=0) + 0.5 * resolution
    else:
        lo = np.asarray(bounds[0], dtype=np.float64).reshape(3)
        hi = np.asarray(bounds[1], dtype=np.float64).reshape(3)
        if np.any(hi < lo):
            raise ValueError("bounds max below min")
    if dims is None:
        dims = grid_dims(hi - lo, resolution, pad_fraction, pow2)
    dims = tuple(int(d) for d in dims)
    idx = np.floor((pts - lo) / resolution).astype(np.int64)
    in_box = np.ones(len(pts), dtype=bool)
    if bounds is not None:
        tol = 1e-9 * max(1.0, float(np.max(np.abs(hi - lo))))
        in_box = np.all((pts >= lo - tol) & (pts <= hi + tol), axis=1)
        # points on the lower face may round to index -1
        idx = np.maximum(idx, 0)
    inside = in_box & np.all((idx >= 0) & (idx < np.asarray(dims)), axis=1)
    if not np.all(inside):
        if not drop_outside:
            bad = int(np.flatnonzero(~inside)[0])
            raise PointOutsideBoundsError(f"point {bad} at {pts[bad].tolist()} lies outside the grid bounds")
        idx = idx[inside]
    occ = kernels.voxel_occupancy(idx, dims)
    return VoxelGrid(float(resolution), lo, occ)


def sphere_grid(bandwidth):
    """Node colatitudes ``pi (2j + 1) / 4B`` and azimuths ``pi k / B``."""
    n = 2 * bandwidth
    theta = np.pi * (2 * np.arange(n) + 1) / (4 * bandwidth)
    phi = np.pi * np.arange(n) / bandwidth
    return theta, phi


def nearest_node(theta, phi, bandwidth):
    """Grid indices ``(j, k)`` of the node nearest to each direction (ties to the lower index)."""
    n = 2 * bandwidth
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    j = np.ceil((theta * (4 * bandwidth) / np.pi - 1.0) / 2.0 - 0.5).astype(np.int64)
    j = np.clip(j, 0, n - 1)
    k = np.ceil(phi * bandwidth / np.pi - 0.5).astype(np.int64) % n
    return j, k


def build_egi(cloud, bandwidth=DEFAULT_BANDWIDTH):
    """Extended Gaussian Image of the cloud's normals."""
    if not is_power_of_two(int(bandwidth)):
        raise ValueError("bandwidth must be a power of two")
    if cloud.normals is None or len(cloud.normals) == 0:
        raise MissingNormalsError("cloud has no normals; estimate them first")
    theta, phi = cart_to_sph(cloud.normals)
    counts = kernels.egi_counts(np.atleast_1d(theta), np.atleast_1d(phi), int(bandwidth))
    return Egi(int(bandwidth), counts)


def cell_solid_angles(bandwidth):
    """Solid angle of each nearest-node cell, shape ``(2B, 2B)``; sums to 4 pi."""
    n = 2 * bandwidth
    edges = np.pi * np.arange(n + 1) / n
    band = np.cos(edges[:-1]) - np.cos(edges[1:])
    return np.repeat((band * np.pi / bandwidth)[:, None], n, axis=1)


def grid_directions(bandwidth):
    """Unit vectors of all grid nodes, shape ``(2B, 2B, 3)``."""
    theta, phi = sphere_grid(bandwidth)
    return sph_to_cart(theta[:, None], phi[None, :])


def write_voxel_csv(grid, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["i", "j", "k", "value"])
    for i, j, k in grid.occupied_indices():
        w.writerow([int(i), int(j), int(k), 1])


def write_egi_csv(egi, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["j", "k", "count"])
    n = 2 * egi.bandwidth
    for j in range(n):
        for k in range(n):
            w.writerow([j, k, int(egi.counts[j, k])])
