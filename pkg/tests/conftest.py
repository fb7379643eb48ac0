import pytest

from ptelicit.pt_core import PTParams

HUMAN = PTParams(0.670, 2.630, 0.685)

_criteria: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    _criteria[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        terminalreporter.write_line(_criteria[n])


@pytest.fixture
def human():
    return HUMAN
