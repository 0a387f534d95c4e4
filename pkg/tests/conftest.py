import pytest

from activeht import kernels

ACCEPTANCE_LINES = []


@pytest.fixture(params=kernels.available())
def backend(request):
    """Run the test once per kernel backend."""
    previous = kernels.backend()
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(previous)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
