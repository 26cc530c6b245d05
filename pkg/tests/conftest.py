import numpy as np
import pytest
from hypothesis import settings

from lcmatch.circuit_model import CircuitParams
from lcmatch.noise_cal import NoiseChain

settings.register_profile("lcmatch", max_examples=60, deadline=None)
settings.load_profile("lcmatch")

DEVICE_L = 37e-9
DEVICE_C = 63e-15
F_M = 3.23e9


@pytest.fixture
def device():
    return CircuitParams(DEVICE_L, DEVICE_C)


@pytest.fixture
def hanger_params():
    return CircuitParams.from_resonance(3.35e9, 954.0, 1.26)


@pytest.fixture
def device_chain():
    return NoiseChain(gain_db=94.6, band_center=3.25e9, bandwidth=50e6, averaging_count=500)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def report(request):
    """Record one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash[_ACCEPTANCE]

    def emit(criterion, passed, detail):
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)

    return emit


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
