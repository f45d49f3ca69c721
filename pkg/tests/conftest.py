"""Acceptance bookkeeping: one PASS/FAIL line per criterion after the run."""

from __future__ import annotations

import pytest

ACCEPTANCE_TITLES = {
    1: "duality identity and biconjugation sandwich",
    2: "stage identity for aux-weighted payoffs",
    3: "posterior martingale and decomposition",
    4: "infimal convolution vs brute force",
    5: "dual recursion vs direct dual",
    6: "independent-case reduction",
    7: "non-revealing bound",
    8: "end-to-end strategy certification",
    9: "ground-truth values",
    10: "primal recursion check",
}

_results: dict[int, list[tuple[str, bool, list[str]]]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        details = [str(v) for k, v in item.user_properties if k == "detail"]
        _results.setdefault(marker.args[0], []).append((item.name, report.outcome == "passed", details))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in ACCEPTANCE_TITLES.items():
        runs = _results.get(n)
        if not runs:
            continue
        ok = all(passed for _, passed, _ in runs)
        failed = [name for name, passed, _ in runs if not passed]
        details = "; ".join(d for _, _, ds in runs for d in ds)
        status = "PASS" if ok else "FAIL"
        line = f"ACCEPTANCE {n}: {status}  {title}"
        if details:
            line += f"  [{details}]"
        if failed:
            line += f"  failed: {', '.join(failed)}"
        terminalreporter.write_line(line)
