import pytest

from hypoflag.corpus import corpus_models

from acceptance_log import LINES as ACCEPTANCE_LINES


@pytest.fixture(scope="session")
def corpus():
    return corpus_models()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
