import json
import os

import numpy as np
import pytest

FROZEN_PATH = os.path.join(os.path.dirname(__file__), "oracles", "frozen.json")


@pytest.fixture(scope="session")
def frozen():
    with open(FROZEN_PATH) as fh:
        return json.load(fh)


def as_complex(nested):
    a = np.asarray(nested, dtype=np.float64)
    return a[..., 0] + 1j * a[..., 1]


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one (criterion, passed, detail) line per acceptance criterion."""
    if not hasattr(request.config, "_acceptance_lines"):
        request.config._acceptance_lines = []
    return request.config._acceptance_lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, title, detail in sorted(lines):
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {title}  ({detail})")
