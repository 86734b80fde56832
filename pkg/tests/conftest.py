from collections import defaultdict

import pytest

_RESULTS = defaultdict(list)


class Recorder:
    """Collects sub-results and prints them as they are decided."""

    def __call__(self, criterion, part, ok, detail):
        _RESULTS[criterion].append((part, bool(ok), detail))
        print(f"CRITERION {criterion} [{part}]: {'PASS' if ok else 'FAIL'} {detail}")
        return ok


@pytest.fixture(scope="session")
def record():
    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_RESULTS):
        parts = _RESULTS[k]
        ok = all(p[1] for p in parts)
        terminalreporter.write_line(f"CRITERION {k}: {'PASS' if ok else 'FAIL'}")
        for part, good, detail in parts:
            terminalreporter.write_line(f"    {'pass' if good else 'FAIL'}  {part}: {detail}")
