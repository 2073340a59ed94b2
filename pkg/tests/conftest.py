import os
import sys

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(autouse=True)
def _no_seed_override(monkeypatch):
    monkeypatch.delenv("PAIRSIM_SEED", raising=False)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in mod.TITLES.items():
        checks = mod.RESULTS.get(n)
        if not checks:
            terminalreporter.write_line(f"criterion {n:2d} ({title}): NOT RUN")
            continue
        failed = [label for label, ok in checks if not ok]
        status = "PASS" if not failed else "FAIL: " + "; ".join(failed)
        terminalreporter.write_line(f"criterion {n:2d} ({title}): {status}")
