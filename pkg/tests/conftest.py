"""Summarizes the acceptance suite with one pass/fail line per criterion."""

_CRITERIA = {
    "test_criterion_1": "criterion 1 (unit oracles)",
    "test_criterion_2": "criterion 2 (analytic MAP check)",
    "test_criterion_3": "criterion 3 (shrinkage property)",
    "test_criterion_4": "criterion 4 (synthetic trend reproduction)",
    "test_criterion_5": "criterion 5 (ceiling sanity)",
    "test_criterion_6": "criterion 6 (empty-category behavior)",
    "test_criterion_7": "criterion 7 (end-to-end determinism)",
    "test_criterion_8": "criterion 8 (experiment-shape fidelity)",
}


def pytest_terminal_summary(terminalreporter):
    outcomes = {}
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            name = report.location[2].split("[")[0]
            short = name.split(".")[-1]
            if short in _CRITERIA:
                outcomes[short] = status
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for key, label in _CRITERIA.items():
        if key in outcomes:
            verdict = "PASS" if outcomes[key] == "passed" else "FAIL"
            terminalreporter.write_line(f"{label}: {verdict}")
