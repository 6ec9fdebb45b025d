from pathlib import Path

import pytest

from _acceptance_log import LINES
from helpers import star_graph


def pytest_configure(config):
    config.stash[LINES] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def write_edges(tmp_path):
    def _write(text: str, name: str = "edges.tsv") -> Path:
        path = tmp_path / name
        path.write_text(text)
        return path

    return _write


@pytest.fixture
def star5():
    return star_graph(0, range(1, 6))
