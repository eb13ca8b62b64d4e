import contextlib
import time

import pytest

_ACCEPTANCE = []


@pytest.fixture
def criterion(capsys):
    """Context manager that prints one PASS/FAIL line for an acceptance criterion."""

    @contextlib.contextmanager
    def run(number, title):
        start = time.perf_counter()
        status = "FAIL"
        try:
            yield
            status = "PASS"
        finally:
            line = f"criterion {number}: {status}  {title}  ({time.perf_counter() - start:.1f}s)"
            _ACCEPTANCE.append(line)
            with capsys.disabled():
                print(f"\n{line}")

    return run


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
