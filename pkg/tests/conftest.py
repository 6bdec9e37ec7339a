"""Replays [ACCEPTANCE] verdict lines after the run summary.

Pytest captures stdout from passing tests, so the one-line verdicts the
acceptance tests print would never reach a plain `pytest -v` log. Each
criterion also appends its line here, and the hook writes them out at the
end of the run where capture no longer applies.
"""

acceptance_lines: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)
