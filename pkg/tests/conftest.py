import json
from fractions import Fraction
from importlib import resources

import pytest

from transference.fixtures import FixtureSpec, generate
from transference.problem import ApproximationProblem


def load_schema(name: str) -> dict:
    return json.loads((resources.files("transference") / "schemas" / name).read_text())


@pytest.fixture(scope="session")
def rational_column() -> ApproximationProblem:
    return ApproximationProblem.from_rows([[Fraction(1, 2)], [Fraction(1, 3)]], exact=True, label="half-third")


@pytest.fixture(scope="session")
def random_2x1() -> ApproximationProblem:
    return generate(FixtureSpec("random-uniform", 2, 1, seed=0))


@pytest.fixture(scope="session")
def random_1x2() -> ApproximationProblem:
    return generate(FixtureSpec("random-uniform", 1, 2, seed=0))


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> str:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
