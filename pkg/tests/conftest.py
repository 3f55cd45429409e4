import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in range(1, 9):
        if num not in ACCEPTANCE:
            terminalreporter.write_line(f"criterion {num}: FAIL  not recorded (errored or deselected)")
            continue
        ok, title, detail, secs = ACCEPTANCE[num]
        terminalreporter.write_line(
            f"criterion {num}: {'PASS' if ok else 'FAIL'}  {title}  [{detail}; {secs:.2f}s]"
        )
