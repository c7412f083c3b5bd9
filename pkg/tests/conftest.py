import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gmbridge import AssetDistribution


@pytest.fixture(scope="session")
def example_dist() -> AssetDistribution:
    """Three-point running example: values (1,2,3), probs (0.55,0.35,0.10)."""
    return AssetDistribution(values=(1.0, 2.0, 3.0), probs=(0.55, 0.35, 0.10))


@pytest.fixture(scope="session")
def bernoulli_dist() -> AssetDistribution:
    return AssetDistribution(values=(0.0, 1.0), probs=(0.5, 0.5))


@pytest.fixture(scope="session")
def single_dist() -> AssetDistribution:
    return AssetDistribution(values=(2.0,), probs=(1.0,))


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, name: str, ok: bool, detail: str = "") -> bool:
    """Register one acceptance-criterion verdict for the terminal summary."""
    line = f"criterion {number:02d} {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
