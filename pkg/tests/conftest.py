import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


import pytest  # noqa: E402

from shapeflow.functionals import solve_domain  # noqa: E402
from shapeflow.geometry import regular_polygon, unit_square  # noqa: E402


@pytest.fixture(scope="session")
def disk_solution():
    """Torsion and eigen solves on the 256-gon inscribed in the unit circle, default mesh size."""
    return solve_domain(regular_polygon(256), 0.02, 2)


@pytest.fixture(scope="session")
def square_solution():
    return solve_domain(unit_square(), 0.02, 2)
