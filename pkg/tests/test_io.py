import numpy as np
import pytest

from spectral_servo.cloud import PointCloud
from spectral_servo.errors import CloudParseError
from spectral_servo.io import load_cloud, save_cloud

PLY3 = """ply
format ascii 1.0
element vertex 3
property float x
property float y
property float z
property float nx
property float ny
property float nz
end_header
0 0 0 0 0 1
1 0 0 1 0 0
0 1 0 0 1 0
"""

PCD_XYZ = """# .PCD v0.7
VERSION 0.7
FIELDS x y z
SIZE 4 4 4
TYPE F F F
COUNT 1 1 1
WIDTH 2
HEIGHT 1
VIEWPOINT 0 0 0 1 0 0 0
POINTS 2
DATA ascii
0.1 0.2 0.3
1 2 3
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_ply_with_normals(tmp_path):
    c = load_cloud(write(tmp_path, "a.ply", PLY3))
    assert len(c) == 3 and c.normals.shape == (3, 3)
    assert np.array_equal(c.normals[1], [1, 0, 0])
    assert c.frame_id == "world"


def test_pcd_without_normals(tmp_path):
    c = load_cloud(write(tmp_path, "a.pcd", PCD_XYZ))
    assert c.normals is None
    assert np.allclose(c.points[0], [0.1, 0.2, 0.3])


def test_zero_vertices(tmp_path):
    text = PLY3.replace("element vertex 3", "element vertex 0").split("end_header")[0] + "end_header\n"
    with pytest.raises(CloudParseError, match="zero vertices"):
        load_cloud(write(tmp_path, "e.ply", text))


def test_malformed_record_reports_line(tmp_path):
    text = PLY3.replace("1 0 0 1 0 0", "1 0 zero 1 0 0")
    with pytest.raises(CloudParseError) as exc:
        load_cloud(write(tmp_path, "m.ply", text))
    assert exc.value.line == 12


def test_short_record(tmp_path):
    with pytest.raises(CloudParseError):
        load_cloud(write(tmp_path, "s.ply", PLY3.replace("0 1 0 0 1 0", "0 1 0")))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_cloud(tmp_path / "nope.ply")


def test_unknown_suffix(tmp_path):
    with pytest.raises(CloudParseError):
        load_cloud(write(tmp_path, "a.xyz", "1 2 3"))


@pytest.mark.parametrize("suffix", [".ply", ".pcd"])
@pytest.mark.parametrize("with_normals", [True, False])
def test_round_trip_is_exact(tmp_path, rng, suffix, with_normals):
    n = rng.normal(size=(25, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    c = PointCloud(rng.normal(size=(25, 3)), n if with_normals else None)
    path = tmp_path / f"c{suffix}"
    save_cloud(c, path)
    back = load_cloud(path)
    assert np.array_equal(back.points, c.points)
    if with_normals:
        assert np.allclose(back.normals, c.normals, atol=1e-15)
    else:
        assert back.normals is None
