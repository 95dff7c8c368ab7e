import pytest
from hypothesis import settings

from object_kb.corpus import default_corpus
from object_kb.sensing import simulate_record
from object_kb.symbols import BuildConfig, build_kb

settings.register_profile("default", deadline=None, derandomize=True)
settings.load_profile("default")

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion for the terminal summary."""

    def record(name: str, passed: bool, detail: str = ""):
        _ACCEPTANCE.append((name, passed, detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))


@pytest.fixture(scope="session")
def corpus_records():
    return [simulate_record(s, seed=42) for s in default_corpus()]


@pytest.fixture(scope="session")
def corpus_kb(corpus_records):
    return build_kb(corpus_records, BuildConfig(seed=42))
