import shutil
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from leafscope.fixtures import fixture_root  # noqa: E402

ACCEPTANCE_LINES = []


@pytest.fixture
def corpus(tmp_path):
    """Writable copy of the bundled 25-image corpus."""
    dst = tmp_path / "corpus"
    shutil.copytree(fixture_root(), dst)
    return dst


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
