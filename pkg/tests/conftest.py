import numpy as np
import pytest

from attribkit.core import FeatureSchema, save_schema


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def csv_factory(tmp_path):
    """Write a CSV (header + rows of strings) and return its path."""

    def make(header, rows, name="data.csv"):
        path = tmp_path / name
        lines = [",".join(header)] + [",".join(str(v) for v in r) for r in rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return make


@pytest.fixture
def ab_schema():
    return FeatureSchema(("a", "b"), "regression", ("target",))


@pytest.fixture
def schema_file(tmp_path):
    def make(schema, name="schema.json"):
        path = tmp_path / name
        save_schema(schema, path)
        return path

    return make


CRITERIA = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[CRITERIA] = []


@pytest.fixture
def criterion(request, capsys):
    """Record one PASS/FAIL line for an acceptance criterion and return the verdict."""

    def record(number: int, name: str, observed: str, requirement: str, passed: bool) -> bool:
        line = f"{'PASS' if passed else 'FAIL'} criterion {number:>2} {name}: {observed} (need {requirement})"
        request.config.stash[CRITERIA].append((number, line))
        with capsys.disabled():
            print(f"\n{line}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
