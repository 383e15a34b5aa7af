import pytest

ACCEPTANCE_MARK = "acceptance"


def pytest_configure(config):
    config.addinivalue_line(
        "markers", f"{ACCEPTANCE_MARK}: acceptance criterion, one pass/fail line each"
    )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion."""
    seen = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            if getattr(report, "when", "call") != "call":
                continue
            keywords = getattr(report, "keywords", {})
            if ACCEPTANCE_MARK in keywords:
                seen[report.nodeid] = outcome
    if not seen:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for nodeid, outcome in sorted(seen.items()):
        name = nodeid.split("::")[-1]
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}")


@pytest.fixture()
def default_pack():
    from sentinel.rules import load_default_pack

    return load_default_pack()
