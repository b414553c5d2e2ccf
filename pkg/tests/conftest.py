"""Shared pytest plumbing: collect acceptance verdicts and print them in the
terminal summary, where they are immune to output capture."""

ACCEPTANCE_VERDICTS: list[str] = []


def record_verdict(line: str):
    ACCEPTANCE_VERDICTS.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance verdicts")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)
