import functools
import time

import pytest

from orbsmc.pipeline import cached_design
from orbsmc.simulate import NoiseSpec, ScenarioSpec, metrics, simulate

ACCEPTANCE = {}
RUN_SECONDS = {}


def record(number: int, ok: bool, detail: str) -> None:
    """Store one acceptance line; repeated calls for a criterion are merged."""
    prev_ok, prev = ACCEPTANCE.get(number, (True, ""))
    ACCEPTANCE[number] = (prev_ok and ok, f"{prev}; {detail}" if prev else detail)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            ok, detail = ACCEPTANCE[key]
            terminalreporter.write_line(f"criterion {key:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def design():
    return cached_design()


@functools.lru_cache(maxsize=None)
def run(scenario: str, kind: str, mu: float = 0.0, snr: float | None = None, seed: int = 0):
    """Cached 20 s scenario run and its metrics on the default design."""
    d = cached_design()
    noise = NoiseSpec(snr, seed) if snr is not None else None
    t0 = time.perf_counter()
    trace = simulate(ScenarioSpec.preset(scenario, kind, mu, noise=noise), d)
    RUN_SECONDS[(scenario, kind, mu, snr, seed)] = time.perf_counter() - t0
    return trace, metrics(trace, d.orbit.period_T)
