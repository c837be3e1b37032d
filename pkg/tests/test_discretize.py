import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectral_servo.cloud import PointCloud, RigidTransform, apply_transform, rot_z
from spectral_servo.discretize import (Egi, build_egi, grid_dims, nearest_node, sphere_grid, voxelize,
                                       write_egi_csv, write_voxel_csv)
from spectral_servo.errors import EmptyCloudError, MissingNormalsError, PointOutsideBoundsError


def unit(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


class TestVoxelize:
    def test_single_point_at_origin_corner(self, backend):
        g = voxelize(PointCloud([[0.0, 0.0, 0.0]]), 0.008, bounds=((0, 0, 0), (0.05, 0.05, 0.05)))
        assert g.occupied_count == 1
        assert g.occupied_indices().tolist() == [[0, 0, 0]]

    def test_floor_index_rule(self, backend):
        # 0.020 / 0.008 = 2.5 and 0.021 / 0.008 = 2.6 both land in cell 2
        c = PointCloud([[0.020, 0, 0], [0.021, 0, 0]])
        g = voxelize(c, 0.008, bounds=((0, 0, 0), (0.05, 0.05, 0.05)))
        assert g.occupied_indices().tolist() == [[2, 0, 0]]

    def test_exact_voxel_shift(self, rng, backend):
        r = 0.008
        pts = (rng.integers(0, 10, size=(40, 3)) + 0.5) * r
        bounds = ((0, 0, 0), (0.2, 0.2, 0.2))
        a = voxelize(PointCloud(pts), r, bounds)
        b = voxelize(PointCloud(pts + np.array([3, 1, 0]) * r), r, bounds)
        assert np.array_equal(np.roll(a.occupancy, (3, 1, 0), axis=(0, 1, 2)), b.occupancy)

    def test_default_origin_and_dims(self):
        pts = np.array([[0.0, 0.0, 0.0], [0.1, 0.05, 0.02]])
        g = voxelize(PointCloud(pts), 0.008)
        assert np.allclose(g.origin, -0.004)
        assert all(d & (d - 1) == 0 for d in g.dims)
        assert g.occupied_count == 2

    def test_negative_coordinates_do_not_collapse(self):
        pts = np.array([[-0.005, 0, 0], [0.005, 0, 0]])
        g = voxelize(PointCloud(pts), 0.008, bounds=((-0.016, -0.008, -0.008), (0.016, 0.008, 0.008)))
        assert g.occupied_count == 2

    def test_errors(self):
        with pytest.raises(EmptyCloudError):
            voxelize(PointCloud(np.zeros((0, 3))), 0.008)
        with pytest.raises(PointOutsideBoundsError):
            voxelize(PointCloud([[1.0, 0, 0]]), 0.008, bounds=((0, 0, 0), (0.1, 0.1, 0.1)))
        g = voxelize(PointCloud([[1.0, 0, 0], [0.01, 0, 0]]), 0.008, bounds=((0, 0, 0), (0.1, 0.1, 0.1)),
                     drop_outside=True)
        assert g.occupied_count == 1

    def test_grid_dims_padding(self):
        dims = grid_dims((0.1, 0.2, 0.05), 0.008)
        need = np.floor(np.array([0.1, 0.2, 0.05]) / 0.008) + 1
        assert all(d >= 1.25 * n for d, n in zip(dims, need))
        assert dims == (32, 64, 16)

    @given(st.integers(0, 2**32 - 1))
    def test_idempotent_on_voxel_centres(self, seed):
        rng = np.random.default_rng(seed)
        c = PointCloud(rng.uniform(-0.1, 0.1, size=(200, 3)))
        g = voxelize(c, 0.008)
        bounds = (g.origin, g.origin + np.asarray(g.dims) * g.resolution)
        again = voxelize(PointCloud(g.voxel_centers()), g.resolution, bounds, dims=g.dims)
        assert np.array_equal(again.occupancy, g.occupancy)

    @given(st.integers(0, 2**32 - 1))
    def test_binary_and_duplicate_insensitive(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(0, 0.1, size=(100, 3))
        bounds = ((0, 0, 0), (0.1, 0.1, 0.1))
        a = voxelize(PointCloud(pts), 0.008, bounds)
        b = voxelize(PointCloud(np.vstack([pts, pts[:30]])), 0.008, bounds)
        assert set(np.unique(a.occupancy)) <= {0, 1}
        assert np.array_equal(a.occupancy, b.occupancy)

    def test_backends_agree(self, rng):
        from spectral_servo import kernels

        if len(kernels.BACKENDS) < 2:
            pytest.skip("compiled kernels not built")
        idx = rng.integers(0, 16, size=(500, 3))
        outs = [m.voxel_occupancy(idx, (16, 16, 16)) for m in kernels.BACKENDS.values()]
        assert np.array_equal(outs[0], outs[1])


class TestEgi:
    def test_north_pole_goes_to_first_row(self, backend):
        n = np.tile([0.0, 0.0, 1.0], (50, 1))
        egi = build_egi(PointCloud(np.zeros((50, 3)), n), 16)
        assert egi.counts[0].sum() == 50 and egi.total == 50

    def test_missing_normals(self):
        with pytest.raises(MissingNormalsError):
            build_egi(PointCloud(np.zeros((5, 3))), 16)
        with pytest.raises(MissingNormalsError):
            build_egi(PointCloud(np.zeros((0, 3)), np.zeros((0, 3))), 16)

    def test_bandwidth_power_of_two(self):
        with pytest.raises(ValueError):
            build_egi(PointCloud(np.zeros((1, 3)), [[0, 0, 1.0]]), 12)

    def test_uniform_normals_match_cell_areas(self, backend):
        # Monte-Carlo oracle: expected count per cell from the analytic area of
        # the band between neighbouring node midpoints
        rng = np.random.default_rng(7)
        n, b = 100_000, 16
        egi = build_egi(PointCloud(np.zeros((n, 3)), unit(rng, n)), b)
        edges = np.linspace(0, np.pi, 2 * b + 1)
        p = (2 * np.pi * (np.cos(edges[:-1]) - np.cos(edges[1:])) / (2 * b)) / (4 * np.pi)
        expected = n * p[:, None] * np.ones((1, 2 * b))
        sigma = np.sqrt(n * p * (1 - p))[:, None]
        assert egi.total == n
        assert np.all(np.abs(egi.counts - expected) <= 5 * sigma)

    def test_nearest_node_ties_go_low(self):
        theta, phi = sphere_grid(4)
        mid_theta = 0.5 * (theta[2] + theta[3])
        mid_phi = 0.5 * (phi[2] + phi[3])
        j, k = nearest_node(np.array([mid_theta]), np.array([mid_phi]), 4)
        assert (j[0], k[0]) == (2, 2)
        # azimuth near 2 pi wraps to column 0
        assert nearest_node(np.array([1.0]), np.array([2 * np.pi - 1e-6]), 4)[1][0] == 0

    @given(st.integers(0, 2**32 - 1))
    def test_quarter_turn_shifts_columns(self, seed):
        rng = np.random.default_rng(seed)
        b = 8
        c = PointCloud(rng.normal(size=(300, 3)), unit(rng, 300))
        egi = build_egi(c, b)
        turned = build_egi(apply_transform(c, RigidTransform(rot_z(np.pi / 2))), b)
        assert np.array_equal(np.roll(egi.counts, b // 2, axis=1), turned.counts)

    @given(st.integers(1, 500), st.sampled_from([2, 4, 8, 16, 32]))
    def test_conservation(self, n, b):
        rng = np.random.default_rng(n)
        assert build_egi(PointCloud(np.zeros((n, 3)), unit(rng, n)), b).total == n

    def test_backends_agree(self, rng):
        from spectral_servo import kernels

        if len(kernels.BACKENDS) < 2:
            pytest.skip("compiled kernels not built")
        theta = np.arccos(rng.uniform(-1, 1, 1000))
        phi = rng.uniform(0, 2 * np.pi, 1000)
        outs = [m.egi_counts(theta, phi, 16) for m in kernels.BACKENDS.values()]
        assert np.array_equal(outs[0], outs[1])

    def test_rejects_bad_counts(self):
        with pytest.raises(ValueError):
            Egi(4, np.zeros((4, 4)))
        with pytest.raises(ValueError):
            Egi(2, -np.ones((4, 4)))


def test_csv_dumps():
    g = voxelize(PointCloud([[0.0, 0, 0]]), 0.008)
    buf = io.StringIO()
    write_voxel_csv(g, buf)
    assert buf.getvalue().splitlines() == ["i,j,k,value", "0,0,0,1"]
    egi = build_egi(PointCloud(np.zeros((3, 3)), np.tile([0, 0, 1.0], (3, 1))), 2)
    buf = io.StringIO()
    write_egi_csv(egi, buf)
    rows = buf.getvalue().splitlines()
    assert rows[0] == "j,k,count" and len(rows) == 1 + 16
    assert sum(int(r.split(",")[2]) for r in rows[1:]) == 3
