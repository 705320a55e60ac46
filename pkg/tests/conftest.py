import numpy as np
import pytest

from cspd.channel import ChannelSet, generate_channel
from cspd.config import SystemConfig


def random_sphere_point(rng, shape, power):
    p = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return p * np.sqrt(power / np.vdot(p, p).real)


def random_channel(rng, k, n_v, m):
    h = rng.standard_normal((k, n_v, m)) + 1j * rng.standard_normal((k, n_v, m))
    return ChannelSet.from_rows(h / np.sqrt(2))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_cfg():
    return SystemConfig(m_x=2, m_z=2, n_users=3, n_c=8, n_v=8, n_e=3, n_taps=3,
                        sigma_z2=0.5, power=8.0, alpha=0.7, seed=7)


@pytest.fixture
def small_channel(small_cfg):
    return generate_channel(small_cfg)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
