import pytest


def pytest_configure(config):
    config._acceptance = {}


@pytest.fixture
def criterion(request):
    """Record and print the outcome line of one acceptance criterion."""
    lines = request.config._acceptance

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance", {})
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
