import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from spectral_servo import kernels

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(params=sorted(kernels.BACKENDS))
def backend(request, monkeypatch):
    """Run a test once per available kernel backend."""
    mod = kernels.BACKENDS[request.param]
    for name in ("wigner_d_stack", "voxel_occupancy", "egi_counts"):
        monkeypatch.setattr(kernels, name, getattr(mod, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_rotation(rng, max_angle=np.pi):
    from spectral_servo.cloud import expm_so3

    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return expm_so3(axis * rng.uniform(0, max_angle))


# acceptance criteria append "PASS/FAIL ..." lines here; they are repeated
# at the end of the run so the verdicts are visible without -s
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1][1:])):
            terminalreporter.write_line(line)
