"""Collects the acceptance verdicts and repeats them at the end of the run."""

VERDICTS = []


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in VERDICTS:
        terminalreporter.write_line(line)
