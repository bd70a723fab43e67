from __future__ import annotations

import os
from pathlib import Path

import pytest

DATA_DIR = Path(__file__).parent / "data"

# filled by test_acceptance.report, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def vdbunt_path() -> Path:
    """The real vdBunt file when ``HSEPM_VDBUNT`` points at it, else the bundled surrogate."""
    env = os.environ.get("HSEPM_VDBUNT")
    return Path(env) if env else DATA_DIR / "vdbunt_surrogate.txt"


@pytest.fixture
def vdbunt():
    return vdbunt_path()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
