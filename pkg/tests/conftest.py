from __future__ import annotations

import numpy as np
import pytest

from timecode_qkd import security
from timecode_qkd.protocol import ProtocolConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def pcfg():
    return ProtocolConfig()


@pytest.fixture(scope="session")
def grid():
    return security.default_grid()


@pytest.fixture(scope="session")
def curves(grid):
    return {dc: security.security_curve(dc, grid) for dc in (0.0, 0.061, 0.084)}


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance") or __import__("sys").modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
