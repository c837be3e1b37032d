"""ASCII PLY and PCD (v0.7) point-cloud files.

Only the ``x y z`` fields and, when present, the three normal fields are
read; other properties are skipped. Writers emit the same dialects.
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .cloud import PointCloud
from .errors import CloudParseError

_PLY_NORMALS = ("nx", "ny", "nz")
_PCD_NORMALS = ("normal_x", "normal_y", "normal_z")


def _detect_format(path):
    suffix = Path(path).suffix.lower()
    if suffix == ".ply":
        return "ply-ascii"
    if suffix == ".pcd":
        return "pcd-ascii"
    raise CloudParseError(f"cannot infer format from suffix {suffix!r}", path=path)


def load_cloud(path, format=None, frame_id="world"):
    """Read an ASCII PLY or PCD file.

    ``format`` is ``"ply-ascii"`` or ``"pcd-ascii"``; inferred from the suffix
    when omitted. Missing files raise ``FileNotFoundError``.
    """
    path = os.fspath(path)
    fmt = format or _detect_format(path)
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        lines = fh.read().splitlines()
    if fmt == "ply-ascii":
        cols, names, first = _parse_ply_header(lines, path)
    elif fmt == "pcd-ascii":
        cols, names, first = _parse_pcd_header(lines, path)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return _read_body(lines, first, cols, names, path, fmt, frame_id)


def _parse_ply_header(lines, path):
    if not lines or lines[0].strip() != "ply":
        raise CloudParseError("missing 'ply' magic", line=1, path=path)
    names = []
    count = None
    in_vertex = False
    seen_vertex = False
    rows_before = 0
    for i, raw in enumerate(lines[1:], start=2):
        tok = raw.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] != "ascii":
                raise CloudParseError(f"unsupported PLY format {' '.join(tok[1:])!r}", line=i, path=path)
        elif tok[0] == "element":
            if len(tok) != 3:
                raise CloudParseError("malformed element line", line=i, path=path)
            in_vertex = tok[1] == "vertex"
            if in_vertex:
                seen_vertex = True
                try:
                    count = int(tok[2])
                except ValueError:
                    raise CloudParseError("vertex count is not an integer", line=i, path=path) from None
            elif not seen_vertex:
                # elements listed before the vertices: skip their rows
                try:
                    rows_before += int(tok[2])
                except ValueError:
                    raise CloudParseError("element count is not an integer", line=i, path=path) from None
        elif tok[0] == "property":
            if in_vertex:
                if tok[1] == "list":
                    raise CloudParseError("list properties on vertices are not supported", line=i, path=path)
                names.append(tok[-1])
        elif tok[0] == "end_header":
            if count is None:
                raise CloudParseError("no vertex element", line=i, path=path)
            if count == 0:
                raise CloudParseError("zero vertices", line=i, path=path)
            for needed in ("x", "y", "z"):
                if needed not in names:
                    raise CloudParseError(f"vertex property {needed!r} missing", line=i, path=path)
            return count, names, i + rows_before
        else:
            raise CloudParseError(f"unexpected header keyword {tok[0]!r}", line=i, path=path)
    raise CloudParseError("header not terminated by end_header", line=len(lines), path=path)


def _parse_pcd_header(lines, path):
    fields = None
    count = None
    for i, raw in enumerate(lines, start=1):
        tok = raw.split()
        if not tok or tok[0].startswith("#"):
            continue
        key = tok[0].upper()
        if key == "FIELDS":
            fields = tok[1:]
        elif key == "COUNT":
            if any(c != "1" for c in tok[1:]):
                raise CloudParseError("multi-count fields are not supported", line=i, path=path)
        elif key == "POINTS":
            try:
                count = int(tok[1])
            except (IndexError, ValueError):
                raise CloudParseError("bad POINTS line", line=i, path=path) from None
        elif key == "DATA":
            if len(tok) < 2 or tok[1].lower() != "ascii":
                raise CloudParseError("only DATA ascii is supported", line=i, path=path)
            if fields is None:
                raise CloudParseError("FIELDS missing", line=i, path=path)
            if count is None:
                raise CloudParseError("POINTS missing", line=i, path=path)
            if count == 0:
                raise CloudParseError("zero vertices", line=i, path=path)
            for needed in ("x", "y", "z"):
                if needed not in fields:
                    raise CloudParseError(f"field {needed!r} missing", line=i, path=path)
            return count, fields, i
        elif key in ("VERSION", "SIZE", "TYPE", "WIDTH", "HEIGHT", "VIEWPOINT"):
            continue
        else:
            raise CloudParseError(f"unexpected header keyword {tok[0]!r}", line=i, path=path)
    raise CloudParseError("header not terminated by DATA", line=len(lines), path=path)


def _read_body(lines, header_end, count, names, path, fmt, frame_id):
    normal_names = _PLY_NORMALS if fmt == "ply-ascii" else _PCD_NORMALS
    has_normals = all(n in names for n in normal_names)
    cols = [names.index(c) for c in ("x", "y", "z")]
    if has_normals:
        cols += [names.index(c) for c in normal_names]
    data = np.empty((count, len(cols)))
    row = 0
    lineno = header_end
    while row < count:
        if lineno >= len(lines):
            raise CloudParseError(f"expected {count} records, found {row}", line=lineno, path=path)
        raw = lines[lineno]
        lineno += 1
        tok = raw.split()
        if not tok:
            continue
        if len(tok) < len(names):
            raise CloudParseError(f"record has {len(tok)} values, expected {len(names)}", line=lineno, path=path)
        try:
            data[row] = [float(tok[c]) for c in cols]
        except ValueError:
            raise CloudParseError(f"non-numeric value in record {raw.strip()!r}", line=lineno, path=path) from None
        if not np.all(np.isfinite(data[row])):
            raise CloudParseError("non-finite value", line=lineno, path=path)
        row += 1
    pts = data[:, :3]
    nrm = None
    if has_normals:
        nrm = data[:, 3:6]
        norms = np.linalg.norm(nrm, axis=1)
        bad = np.flatnonzero(norms < 1e-6)
        if len(bad):
            raise CloudParseError("zero-length normal", line=header_end + int(bad[0]) + 1, path=path)
        nrm = nrm / norms[:, None]
    return PointCloud(pts, nrm, frame_id)


def save_cloud(cloud, path, format=None):
    """Write ``cloud`` as ASCII PLY or PCD (float64, ``repr`` precision)."""
    path = os.fspath(path)
    fmt = format or _detect_format(path)
    n = len(cloud)
    has_normals = cloud.normals is not None
    data = cloud.points if not has_normals else np.hstack([cloud.points, cloud.normals])
    if fmt == "ply-ascii":
        header = ["ply", "format ascii 1.0", f"element vertex {n}"]
        header += [f"property double {c}" for c in ("x", "y", "z")]
        if has_normals:
            header += [f"property double {c}" for c in _PLY_NORMALS]
        header.append("end_header")
    elif fmt == "pcd-ascii":
        fields = ["x", "y", "z"] + (list(_PCD_NORMALS) if has_normals else [])
        k = len(fields)
        header = [
            "# .PCD v0.7 - Point Cloud Data file format",
            "VERSION 0.7",
            "FIELDS " + " ".join(fields),
            "SIZE " + " ".join(["8"] * k),
            "TYPE " + " ".join(["F"] * k),
            "COUNT " + " ".join(["1"] * k),
            f"WIDTH {n}",
            "HEIGHT 1",
            "VIEWPOINT 0 0 0 1 0 0 0",
            f"POINTS {n}",
            "DATA ascii",
        ]
    else:
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(header) + "\n")
        for rec in data:
            fh.write(" ".join(repr(float(v)) for v in rec) + "\n")
