import sys

import numpy as np
import pytest

from coherent_motion.geometry import build_hex_lattice, build_velocity_grid


@pytest.fixture(scope="session")
def lat8():
    return build_hex_lattice(8, 8)


@pytest.fixture(scope="session")
def grid18():
    return build_velocity_grid(6, 3)


@pytest.fixture(scope="session")
def grid30():
    return build_velocity_grid(6, 5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[2])):
        terminalreporter.write_line(line)
