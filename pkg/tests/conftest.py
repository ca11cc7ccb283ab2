def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One line per acceptance-criterion test at the end of the run."""
    entries = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            if "test_acceptance" in rep.nodeid and rep.when == "call":
                entries.append((rep.nodeid.split("::")[-1], status.upper()))
    if entries:
        terminalreporter.section("acceptance criteria")
        for name, status in sorted(entries):
            terminalreporter.write_line(f"{status:6s} {name}")
