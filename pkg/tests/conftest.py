import numpy as np
import pytest

from ddunfold.signal_model import OfdmConfig, build_grid, build_measurement_model


@pytest.fixture(scope="session")
def model():
    """The 16 x 36 setup: four blocks of four subcarriers on a 6 x 6 grid."""
    return build_measurement_model(OfdmConfig(), build_grid(6, 6))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
