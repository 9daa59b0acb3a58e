import pytest

# lines appended by the acceptance suite, echoed once at the end of the run
ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    def _report(label, passed, detail):
        line = f"{label}: {'PASS' if passed else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
