import pytest

from synthdse.model import CellCounts, StratumSurveyInputs

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def two_region_stratum():
    """DSE 210 over regions A (100 = 90 + 10) and B (100 = 70 + 30)."""
    cells = [CellCounts("s1", "A", 100, 90, 10), CellCounts("s1", "B", 100, 70, 30)]
    # dse = 160 * 1 / mr = 210
    survey = StratumSurveyInputs("s1", 50, 0, 160 / 210)
    return cells, survey


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path
