import pytest
from hypothesis import settings

from cvqkd_loia.constellation import pcs_qam, qpsk

# fixed example sequence so the suite is reproducible run to run
settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")


@pytest.fixture(scope="session")
def qpsk_456():
    return qpsk(0.456)


@pytest.fixture(scope="session")
def qam16():
    return pcs_qam(16, 0.085, 2.0)


@pytest.fixture(scope="session")
def qam256():
    return pcs_qam(256, 0.039, 6.332)


# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    def record(criterion, passed, detail, seconds):
        ACCEPTANCE.setdefault(criterion, []).append((bool(passed), detail, seconds))
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[crit]
        ok = all(p for p, _, _ in parts)
        detail = "; ".join(d for _, d, _ in parts)
        secs = sum(s for _, _, s in parts)
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'} [{secs:.1f} s] {detail}")
