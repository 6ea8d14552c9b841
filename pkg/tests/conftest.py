import numpy as np
import pytest

from strainmodal.beam import SpanLayout
from strainmodal.sim import BeamSpec, SimScenario, default_scenario, simulate


@pytest.fixture(scope="session")
def three_span():
    return SpanLayout((16.0, 18.0, 16.0), fiber_offset_m=0.5)


@pytest.fixture(scope="session")
def short_clean_sim():
    """Default 3-span scenario, noise free, two minutes."""
    return simulate(default_scenario(duration_s=120.0))


@pytest.fixture(scope="session")
def two_mode_sim():
    """Single 20 m span, two modes, 11 channels, noise free."""
    layout = SpanLayout((20.0,), 0.5)
    beam = BeamSpec(layout, EI=1.0e4 * 2.0e4, rho_A=1.0e4, modal_damping=(0.02,), n_modes=2)
    return simulate(SimScenario(beam, duration_s=120.0, fs_hz=100.0, channel_spacing_m=2.0, seed=3))


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def report(request):
    """Record one PASS/FAIL line for an acceptance criterion; returns ``ok``."""
    lines = request.config.stash[_ACCEPTANCE]

    def emit(criterion, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
