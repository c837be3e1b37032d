"""Translation by 3-D phase correlation of voxel grids.

Sign convention: with spectra ``F`` (of ``f``) and ``G`` (of ``g``), the
correlation peak sits at the shift ``s`` for which ``f(x) = g(x - s)``, i.e.
the displacement that carries ``g`` onto ``f``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import DimensionMismatchError, FlatVolumeError

DEFAULT_EPS = 1e-12

_workers = 1


def set_threads(n):
    """Worker threads for the FFTs (default 1, deterministic)."""
    global _workers
    _workers = max(1, int(n))


@dataclass(frozen=True, eq=False)
class Spectrum3D:
    coeffs: np.ndarray

    @property
    def dims(self):
        return tuple(self.coeffs.shape)


@dataclass(frozen=True, eq=False)
class CorrelationVolume:
    values: np.ndarray
    imag_residue: float = 0.0

    @property
    def dims(self):
        return tuple(self.values.shape)


@dataclass(frozen=True, eq=False)
class TranslationEstimate:
    t_glob: np.ndarray
    peak_value: float
    peak_index: tuple
    shift: np.ndarray  # in voxels, unwrapped (fractional with sub-voxel refinement)


def fft3(grid):
    """Forward 3-D DFT of a voxel grid (or a raw array)."""
    occ = grid.occupancy if hasattr(grid, "occupancy") else np.asarray(grid)
    return Spectrum3D(scipy.fft.fftn(occ.astype(np.float64), workers=_workers))


def cross_power_spectrum(f, g, eps=DEFAULT_EPS):
    """``F conj(G) / (|F conj(G)| + eps)``."""
    if f.dims != g.dims:
        raise DimensionMismatchError(f"spectrum dims {f.dims} vs {g.dims}")
    p = f.coeffs * np.conj(g.coeffs)
    return Spectrum3D(p / (np.abs(p) + eps))


def invert_to_correlation(c):
    """Real part of the inverse DFT (with the ``1/MNL`` factor)."""
    vol = scipy.fft.ifftn(c.coeffs, workers=_workers)
    peak = float(np.max(np.abs(vol.real))) if vol.size else 0.0
    residue = float(np.max(np.abs(vol.imag))) / peak if peak > 0 else 0.0
    return CorrelationVolume(np.ascontiguousarray(vol.real), residue)


def _unwrap(index, dims):
    idx = np.asarray(index, dtype=np.float64)
    d = np.asarray(dims, dtype=np.float64)
    return np.where(idx >= d / 2.0, idx - d, idx)


def peak_translation(delta, resolution, subvoxel=False):
    """Arg-max of the correlation volume turned into a metric shift.

    Ties resolve to the lowest lexicographic index. Indices at or above half
    the grid size are read as negative shifts.
    """
    vals = delta.values if hasattr(delta, "values") else np.asarray(delta)
    vmax = float(vals.max())
    if vmax - float(vals.min()) <= 1e-12:
        raise FlatVolumeError("correlation volume has no unique peak")
    flat = int(np.argmax(vals))
    index = tuple(int(i) for i in np.unravel_index(flat, vals.shape))
    shift = _unwrap(index, vals.shape)
    if subvoxel:
        shift = shift + _parabolic_offsets(vals, index)
    return TranslationEstimate(shift * resolution, vmax, index, shift)


def _parabolic_offsets(vals, index):
    off = np.zeros(3)
    for ax in range(3):
        n = vals.shape[ax]
        if n < 3:
            continue
        lo = list(index)
        hi = list(index)
        lo[ax] = (index[ax] - 1) % n
        hi[ax] = (index[ax] + 1) % n
        ym, y0, yp = vals[tuple(lo)], vals[index], vals[tuple(hi)]
        den = ym - 2.0 * y0 + yp
        if den < 0:
            off[ax] = float(np.clip(0.5 * (ym - yp) / den, -0.5, 0.5))
    return off


def translation_cost(f_grid, g_grid, t):
    """``1/2 sum_x (g(x) - f(x + t))^2`` with ``t`` rounded to whole voxels.

    Lookups that fall off the lattice read as 0.
    """
    if f_grid.dims != g_grid.dims:
        raise DimensionMismatchError(f"grid dims {f_grid.dims} vs {g_grid.dims}")
    if f_grid.resolution != g_grid.resolution or not np.array_equal(f_grid.origin, g_grid.origin):
        raise DimensionMismatchError("grids do not share a lattice")
    s = np.rint(np.asarray(t, dtype=np.float64) / f_grid.resolution).astype(np.int64)
    f = f_grid.occupancy.astype(np.int64)
    g = g_grid.occupancy.astype(np.int64)
    shifted = np.zeros_like(f)
    src = []
    dst = []
    for ax, n in enumerate(f.shape):
        k = int(s[ax])
        if abs(k) >= n:
            return 0.5 * float(np.sum(g * g))
        # shifted[x] = f[x + k]
        dst.append(slice(max(0, -k), n - max(0, k)))
        src.append(slice(max(0, k), n - max(0, -k)))
    shifted[tuple(dst)] = f[tuple(src)]
    diff = g - shifted
    return 0.5 * float(np.sum(diff * diff))


def estimate_translation(f_grid, g_grid, eps=DEFAULT_EPS, subvoxel=False):
    """Full phase-correlation chain; returns the shift carrying ``g`` onto ``f``."""
    if f_grid.dims != g_grid.dims:
        raise DimensionMismatchError(f"grid dims {f_grid.dims} vs {g_grid.dims}")
    c = cross_power_spectrum(fft3(f_grid), fft3(g_grid), eps)
    return peak_translation(invert_to_correlation(c), f_grid.resolution, subvoxel)


class PhaseCorrelator:
    """Phase correlation against a fixed ``f`` grid, using real FFTs.

    Caches the half spectrum of ``f`` so each call transforms only ``g``.
    """

    def __init__(self, f_grid, eps=DEFAULT_EPS, subvoxel=False):
        self.f_grid = f_grid
        self.eps = eps
        self.subvoxel = subvoxel
        self._f_half = scipy.fft.rfftn(f_grid.occupancy.astype(np.float64), workers=_workers)

    def estimate(self, g_grid):
        if g_grid.dims != self.f_grid.dims:
            raise DimensionMismatchError(f"grid dims {self.f_grid.dims} vs {g_grid.dims}")
        g_half = scipy.fft.rfftn(g_grid.occupancy.astype(np.float64), workers=_workers)
        p = self._f_half * np.conj(g_half)
        p /= np.abs(p) + self.eps
        vol = scipy.fft.irfftn(p, s=self.f_grid.dims, workers=_workers)
        return peak_translation(vol, self.f_grid.resolution, self.subvoxel)


def write_correlation_csv(delta, fh, threshold=None):
    """Dump ``i, j, k, value`` rows (all cells, or those above ``threshold``)."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["i", "j", "k", "value"])
    vals = delta.values
    it = np.argwhere(vals > threshold) if threshold is not None else np.ndindex(*vals.shape)
    for idx in it:
        i, j, k = (int(v) for v in idx)
        w.writerow([i, j, k, repr(float(vals[i, j, k]))])
