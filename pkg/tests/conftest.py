import re
from collections import OrderedDict

CRITERIA = OrderedDict(
    [
        (1, "psi closed-form regression (1e-7, 101 points on [0, 0.99])"),
        (2, "(I, S) recovery for hinge, exponential, logistic, modified hinge"),
        (3, "intensity-ratio verdicts"),
        (4, "intensity range 0 < I <= 1.02"),
        (5, "scaling invariance of I (27 checks)"),
        (6, "scheduled modified-hinge exponent 5/4"),
        (7, "zero psi-inequality violations on the tent distribution"),
        (8, "ERM consistency and Bayes-classifier risk"),
        (9, "bit-identical artifacts on repeat"),
    ]
)

_outcomes: dict[int, list[bool]] = {}
_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_")


def pytest_runtest_logreport(report):
    match = _CRITERION.search(report.nodeid)
    if not match:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _outcomes.setdefault(int(match.group(1)), []).append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number, title in CRITERIA.items():
        results = _outcomes.get(number)
        if results is None:
            status = "NOT RUN"
        else:
            status = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}  {title}")
