"""Shared helpers: the acceptance ledger printed at the end of the session."""

import pytest

_LINES: list[tuple[str, bool, str]] = []


class CriteriaLedger:
    def record(self, name: str, passed: bool, detail: str = "") -> bool:
        _LINES.append((name, bool(passed), detail))
        return bool(passed)

    def info(self, name: str, detail: str):
        _LINES.append((name, None, detail))


@pytest.fixture(scope="session")
def criteria():
    return CriteriaLedger()


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _LINES:
        tag = "INFO" if passed is None else ("PASS" if passed else "FAIL")
        terminalreporter.write_line(f"{tag:4s} {name}: {detail}")
