import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from leoisac.channel import ArrayGeometry, ChannelStats, SubcarrierPlan, channel_responses

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_complex(rng, *shape, scale=1.0):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def desk():
    """Desk-scale geometry, plan and user statistics (N_t = 64, M = 8, K = 4)."""
    geom = ArrayGeometry.half_wavelength(8, 8, 20e9)
    plan = SubcarrierPlan(800e6, 8)
    angles = np.array([[-0.6, 0.2], [0.1, -0.7], [0.5, 0.5], [-0.2, -0.1]])
    stats = ChannelStats(angles, 1.0, 10 ** 1.2)
    return geom, plan, stats, channel_responses(stats, geom, plan)


# acceptance verdicts, printed as one line per criterion at the end of the session
VERDICTS = {}


@pytest.fixture
def verdict():
    def record(number: int, ok: bool, detail: str):
        VERDICTS[number] = (bool(ok), detail)
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        ok, detail = VERDICTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
