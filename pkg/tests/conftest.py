import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import acceptance_log  # noqa: E402
import trained  # noqa: E402


@pytest.fixture(scope="session")
def weight_cache(request):
    return Path(request.config.cache.mkdir("cannpi-trained"))


@pytest.fixture(scope="session")
def trained_hdcn(weight_cache):
    return trained.hdcn(weight_cache)


@pytest.fixture(scope="session")
def trained_gcn(weight_cache):
    return trained.gcn(weight_cache)


def pytest_terminal_summary(terminalreporter):
    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance_log.LINES):
            terminalreporter.write_line(line)
