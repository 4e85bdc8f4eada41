import pytest

from fracwave.core import GridSpec, HurstTriple, RunConfig, SobolevSpec


@pytest.fixture
def hurst():
    return HurstTriple(0.45, 0.45, 0.35)


@pytest.fixture
def small_cfg(hurst):
    g = GridSpec(level=3, period=4.0, nx=32, nt=16, horizon=0.5)
    return RunConfig(hurst, g, SobolevSpec(hurst.default_alpha()), seed=11, samples=8)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion."""
    def _rec(name, ok, detail):
        line = f"{name}: {'PASS' if ok else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line, flush=True)
        return ok
    return _rec


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
