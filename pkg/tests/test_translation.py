import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectral_servo.cloud import PointCloud, RigidTransform, apply_transform
from spectral_servo.discretize import VoxelGrid, voxelize
from spectral_servo.errors import DimensionMismatchError, FlatVolumeError
from spectral_servo.translation import (PhaseCorrelator, cross_power_spectrum, estimate_translation, fft3,
                                        invert_to_correlation, peak_translation, translation_cost,
                                        write_correlation_csv)

R = 0.008


def grid(occ, res=R):
    return VoxelGrid(res, (0, 0, 0), occ)


def random_grid(rng, dims, fill=0.2):
    return (rng.random(dims) < fill).astype(np.uint8)


def naive_dft(a):
    m, n, l = a.shape
    out = np.zeros(a.shape, complex)
    x = np.indices(a.shape).reshape(3, -1).T
    vals = a.ravel()
    for u in range(m):
        for v in range(n):
            for w in range(l):
                ph = -2j * np.pi * (x[:, 0] * u / m + x[:, 1] * v / n + x[:, 2] * w / l)
                out[u, v, w] = np.sum(vals * np.exp(ph))
    return out


def brute_circular_xcorr(f, g):
    """``c[s] = sum_x f(x) g(x - s)`` by direct summation over all shifts."""
    out = np.zeros(f.shape)
    for s in np.ndindex(*f.shape):
        out[s] = np.sum(f * np.roll(g, s, axis=(0, 1, 2)))
    return out


class TestFft3:
    def test_zero_grid(self):
        assert not np.any(fft3(grid(np.zeros((4, 4, 4)))).coeffs)

    def test_impulse(self):
        occ = np.zeros((4, 8, 4))
        occ[0, 0, 0] = 1
        assert np.allclose(fft3(grid(occ)).coeffs, 1.0, atol=0)

    def test_matches_direct_sum(self, rng):
        occ = random_grid(rng, (4, 4, 4), 0.5)
        spectrum = fft3(grid(occ))
        assert np.max(np.abs(spectrum.coeffs - naive_dft(occ.astype(float)))) < 1e-10
        assert spectrum.coeffs[0, 0, 0].real == occ.sum()


class TestCrossPower:
    def test_identical_spectra(self, rng):
        f = fft3(grid(random_grid(rng, (8, 8, 8))))
        c = cross_power_spectrum(f, f)
        nz = np.abs(f.coeffs) > 1e-6
        assert np.allclose(c.coeffs[nz], 1.0, atol=1e-9)
        assert np.allclose(np.angle(c.coeffs[nz]), 0.0, atol=1e-12)
        assert peak_translation(invert_to_correlation(c), R).peak_index == (0, 0, 0)

    def test_shift_gives_linear_phase(self, rng):
        m, n, l = 8, 16, 8
        g = random_grid(rng, (m, n, l), 0.3)
        # f is g moved by (3, 1, 0) voxels
        f = np.roll(g, (3, 1, 0), axis=(0, 1, 2))
        c = cross_power_spectrum(fft3(grid(f)), fft3(grid(g)))
        u, v, _ = np.meshgrid(np.arange(m), np.arange(n), np.arange(l), indexing="ij")
        expected = np.exp(-2j * np.pi * (3 * u / m + v / n))
        nz = np.abs(fft3(grid(g)).coeffs) > 1e-6
        assert np.allclose(c.coeffs[nz], expected[nz], atol=1e-9)

    def test_empty_bins_are_zero(self):
        z = fft3(grid(np.zeros((4, 4, 4))))
        c = cross_power_spectrum(z, z)
        assert np.all(np.isfinite(c.coeffs)) and not np.any(c.coeffs)

    def test_dim_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            cross_power_spectrum(fft3(grid(np.zeros((4, 4, 4)))), fft3(grid(np.zeros((4, 4, 8)))))

    @given(st.integers(0, 2**32 - 1))
    def test_self_spectrum_zero_phase(self, seed):
        rng = np.random.default_rng(seed)
        f = fft3(grid(random_grid(rng, (8, 4, 8), rng.uniform(0.05, 0.9))))
        c = cross_power_spectrum(f, f).coeffs
        nz = np.abs(c) > 0
        assert np.all(np.abs(c[nz].imag) <= 1e-12)


class TestInvert:
    def test_all_ones_is_unit_impulse(self):
        vol = invert_to_correlation(type(fft3(grid(np.zeros((4, 4, 4)))))(np.ones((4, 8, 4), complex)))
        expected = np.zeros((4, 8, 4))
        expected[0, 0, 0] = 1.0
        assert np.allclose(vol.values, expected, atol=1e-15)

    def test_linear_phase_peaks_at_shift(self):
        m, n, l = 8, 8, 8
        u, v, _ = np.meshgrid(np.arange(m), np.arange(n), np.arange(l), indexing="ij")
        c = type(fft3(grid(np.zeros((1, 1, 1)))))(np.exp(-2j * np.pi * (3 * u / m + v / n)))
        vol = invert_to_correlation(c)
        assert np.unravel_index(np.argmax(vol.values), vol.dims) == (3, 1, 0)
        assert np.sum(vol.values > 0.5) == 1
        assert vol.imag_residue < 1e-8

    def test_noisy_pair_matches_spatial_oracle(self, rng):
        dims = (12, 12, 12)
        g = random_grid(rng, dims, 0.2)
        shift = (4, -3, 2)
        f = np.roll(g, shift, axis=(0, 1, 2))
        flips = rng.random(dims) < 0.10
        f = np.where(flips, 1 - f, f).astype(np.uint8)
        est = estimate_translation(grid(f), grid(g))
        oracle = brute_circular_xcorr(f.astype(float), g.astype(float))
        oracle_idx = np.unravel_index(np.argmax(oracle), dims)
        expected = tuple(s % d for s, d in zip(shift, dims))
        assert est.peak_index == expected == tuple(int(i) for i in oracle_idx)


class TestPeak:
    def test_impulse_at_origin(self):
        v = np.zeros((8, 8, 8))
        v[0, 0, 0] = 1
        assert np.array_equal(peak_translation(v, R).t_glob, [0, 0, 0])

    def test_wrap_around(self):
        v = np.zeros((8, 8, 8))
        v[7, 0, 0] = 1
        assert np.allclose(peak_translation(v, R).t_glob, [-0.008, 0, 0])

    def test_tie_breaks_low(self):
        v = np.zeros((4, 4, 4))
        v[1, 2, 0] = v[2, 0, 0] = 1
        assert peak_translation(v, R).peak_index == (1, 2, 0)

    def test_flat(self):
        with pytest.raises(FlatVolumeError):
            peak_translation(np.ones((4, 4, 4)), R)

    def test_subvoxel_parabola(self):
        x = np.arange(16)
        v = np.zeros((16, 4, 4))
        v[:, 0, 0] = -(x - 5.3) ** 2 + 100
        est = peak_translation(v, 1.0, subvoxel=True)
        assert np.isclose(est.shift[0], 5.3)
        assert est.shift[1] == 0 and est.shift[2] == 0

    def test_cloud_shift_in_y(self, rng):
        pts = rng.uniform(0, 0.1, size=(400, 3))
        a = PointCloud(pts)
        b = apply_transform(a, RigidTransform(translation=(0, 0.024, 0)))
        bounds = (np.full(3, -0.05), np.full(3, 0.2))
        fa, fb = voxelize(a, R, bounds), voxelize(b, R, bounds)
        est = estimate_translation(fb, fa)
        assert np.all(np.abs(est.t_glob - [0, 0.024, 0]) <= R + 1e-12)


class TestExactness:
    @given(st.integers(0, 2**32 - 1))
    def test_any_circular_shift_is_exact(self, seed):
        rng = np.random.default_rng(seed)
        dims = tuple(int(d) for d in rng.integers(4, 17, size=3))
        g = random_grid(rng, dims, rng.uniform(0.05, 0.5))
        shift = tuple(int(rng.integers(-(d // 2), (d + 1) // 2)) for d in dims)
        f = np.roll(g, shift, axis=(0, 1, 2))
        est = estimate_translation(grid(f), grid(g))
        wrapped = [((s + d // 2) % d) - d // 2 for s, d in zip(shift, dims)]
        unwrapped = np.where(np.array(wrapped) >= np.array(dims) / 2, np.array(wrapped) - dims, wrapped)
        assert np.array_equal(est.shift, unwrapped)

    def test_correlator_matches_full_chain(self, rng):
        g = random_grid(rng, (16, 8, 16), 0.2)
        f = np.roll(g, (5, -2, 7), axis=(0, 1, 2))
        full = estimate_translation(grid(f), grid(g))
        fast = PhaseCorrelator(grid(f)).estimate(grid(g))
        assert full.peak_index == fast.peak_index
        assert np.array_equal(full.t_glob, fast.t_glob)

    def test_robust_to_flips(self):
        rng = np.random.default_rng(99)
        good = 0
        for _ in range(100):
            g = random_grid(rng, (32, 32, 32), rng.uniform(0.05, 0.3))
            shift = rng.integers(-16, 16, size=3)
            f = np.roll(g, tuple(shift), axis=(0, 1, 2))
            flips = rng.random(f.shape) < rng.uniform(0, 0.15)
            f = np.where(flips, 1 - f, f)
            est = PhaseCorrelator(grid(f)).estimate(grid(g))
            good += np.max(np.abs(est.shift - shift)) <= 1
        assert good >= 95


class TestCost:
    def test_identical(self, rng):
        g = grid(random_grid(rng, (8, 8, 8)))
        assert translation_cost(g, g, np.zeros(3)) == 0.0

    def test_exact_shift(self, rng):
        occ = np.zeros((16, 16, 16), np.uint8)
        occ[5:9, 3:5, 4:9] = random_grid(rng, (4, 2, 5), 0.6)
        f = grid(occ)
        g = grid(np.roll(occ, (-3, 2, 1), axis=(0, 1, 2)))
        # g(x) = f(x + (3, -2, -1))
        assert translation_cost(f, g, np.array([3, -2, -1]) * R) == 0.0
        assert translation_cost(f, g, np.array([3, -2, -1]) * R + 0.003) == 0.0

    def test_disjoint(self):
        f = np.zeros((8, 8, 8), np.uint8)
        g = np.zeros((8, 8, 8), np.uint8)
        f[2:4, 0, 0] = 1
        g[6, 6, 6] = g[5, 6, 6] = g[6, 5, 6] = 1
        assert translation_cost(grid(f), grid(g), [R, 0, 0]) == 0.5 * (f.sum() + g.sum())
        assert translation_cost(grid(f), grid(g), [100 * R, 0, 0]) == 0.5 * g.sum()

    def test_direct_summation_oracle(self, rng):
        f = random_grid(rng, (6, 6, 6), 0.4)
        g = random_grid(rng, (6, 6, 6), 0.4)
        t = np.array([1, -2, 0])
        total = 0.0
        for x in np.ndindex(6, 6, 6):
            y = np.add(x, t)
            fv = f[tuple(y)] if np.all((y >= 0) & (y < 6)) else 0
            total += 0.5 * (int(g[x]) - int(fv)) ** 2
        assert translation_cost(grid(f), grid(g), t * R) == total

    def test_lattice_mismatch(self):
        a = grid(np.zeros((4, 4, 4)))
        with pytest.raises(DimensionMismatchError):
            translation_cost(a, grid(np.zeros((4, 4, 8))), np.zeros(3))
        with pytest.raises(DimensionMismatchError):
            translation_cost(a, VoxelGrid(R, (1, 0, 0), np.zeros((4, 4, 4))), np.zeros(3))


def test_correlation_csv():
    v = np.zeros((2, 2, 2))
    v[1, 0, 1] = 1.0
    vol = invert_to_correlation(fft3(grid(np.zeros((2, 2, 2)))))
    buf = io.StringIO()
    write_correlation_csv(type(vol)(v), buf, threshold=0.5)
    assert buf.getvalue().splitlines() == ["i,j,k,value", "1,0,1,1.0"]
