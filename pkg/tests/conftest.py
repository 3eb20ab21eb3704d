import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from narrow_escape import geometry  # noqa: E402


@pytest.fixture(scope="session")
def ball():
    return geometry.unit_ball()


@pytest.fixture(scope="session")
def prolate():
    return geometry.ellipsoid(2.0, 1.0, 1.0)


@pytest.fixture(scope="session")
def triaxial():
    return geometry.ellipsoid(1.5, 1.0, 0.7)


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collector for the one-line acceptance verdicts printed at the end of the run."""
    lines = getattr(request.config, "_acceptance_lines", None)
    if lines is None:
        lines = request.config._acceptance_lines = []
    return lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
