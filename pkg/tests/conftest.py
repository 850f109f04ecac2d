import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"


@pytest.fixture
def counts_path():
    return FIXTURES / "appendix_counts.json"


@pytest.fixture
def seg_counts_path():
    return FIXTURES / "appendix_seg_counts.json"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj))
    return path


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
