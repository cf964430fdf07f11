"""Shared fixtures; collects acceptance-criterion outcomes for the summary."""
import pytest


@pytest.fixture(scope="session")
def _acceptance_log(request):
    results: list[tuple[str, str, bool, str]] = []
    yield results
    request.config._acceptance_results = results


@pytest.fixture
def criterion(_acceptance_log):
    """Record one acceptance criterion: criterion(id, description, ok, detail).

    The outcome is stored for the terminal summary before the assertion
    fires, so failed criteria still get their FAIL line.
    """

    def record(cid: str, desc: str, ok: bool, detail: str = ""):
        _acceptance_log.append((cid, desc, bool(ok), detail))
        assert ok, f"{cid} {desc}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_acceptance_results", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for cid, desc, ok, detail in sorted(results):
        status = "PASS" if ok else "FAIL"
        suffix = f" ({detail})" if detail else ""
        terminalreporter.write_line(f"[{cid}] {status} — {desc}{suffix}")
