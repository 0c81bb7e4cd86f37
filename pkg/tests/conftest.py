import sys

import numpy as np
import pytest
from hypothesis import settings

from hlisa import ArrayGeometry, sample_scenario, synthesize_channels

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


def random_channels(seed, K=4, L=2, bs=(4, 4), ms=(1, 1)):
    paths = sample_scenario(seed, K, L)
    return paths, synthesize_channels(paths, ArrayGeometry(*bs), ArrayGeometry(*ms))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
