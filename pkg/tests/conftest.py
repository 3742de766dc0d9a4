import pytest

from rehab_ilc import _backend

ACCEPTANCE_LINES = []


@pytest.fixture(params=_backend.available())
def backend(request, monkeypatch):
    """Run the test once per available kernel backend."""
    monkeypatch.setattr(_backend, "kernels", _backend.load(request.param))
    return request.param


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
