import numpy as np
import pytest

# criterion number -> list of (passed, detail) recorded by tests/test_acceptance.py
_CRITERIA: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture
def rs():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion():
    """``record(number, passed, detail)``; prints the line and keeps it for the summary."""

    def record(number: int, passed: bool, detail: str = "") -> bool:
        passed = bool(passed)
        _CRITERIA.setdefault(number, []).append((passed, detail))
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        results = _CRITERIA[number]
        ok = all(p for p, _ in results)
        detail = "; ".join(d for _, d in results if d)
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
