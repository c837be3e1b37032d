"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
versions are used. Set ``SPECTRAL_SERVO_PURE_PYTHON=1`` to force the numpy
path (the test-suite uses this to check both backends agree).
"""
import os

from . import _kernels_py

_FORCE_PY = os.environ.get("SPECTRAL_SERVO_PURE_PYTHON", "") not in ("", "0")

try:
    if _FORCE_PY:
        raise ImportError("pure-python backend forced")
    from . import _kernels as _ext
except ImportError:
    _ext = None

BACKENDS = {"python": _kernels_py}
if _ext is not None:
    BACKENDS["compiled"] = _ext

BACKEND = "compiled" if _ext is not None else "python"
_active = BACKENDS[BACKEND]

wigner_d_stack = _active.wigner_d_stack
voxel_occupancy = _active.voxel_occupancy
egi_counts = _active.egi_counts
