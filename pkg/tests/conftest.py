import pytest

_CRITERIA: dict[int, tuple[bool, str, float]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance criterion outcome for the end-of-run summary."""

    def record(number: int, ok: bool, detail: str, elapsed: float) -> None:
        _CRITERIA[number] = (ok, detail, elapsed)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail} ({elapsed:.2f}s)")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail, elapsed = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}  ({elapsed:.2f}s)")
