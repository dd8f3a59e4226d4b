import contextlib
import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE = {}


class _Outcome:
    def __init__(self):
        self.detail = ""
        self.start = time.perf_counter()


@contextlib.contextmanager
def criterion(number, title, limit_s=None):
    """Record one acceptance criterion; the wrapped block passes iff it raises nothing."""
    out = _Outcome()
    try:
        yield out
        elapsed = time.perf_counter() - out.start
        if limit_s is not None:
            assert elapsed < limit_s, f"runtime {elapsed:.1f}s exceeds {limit_s}s"
        _ACCEPTANCE[number] = (title, True, out.detail)
    except BaseException as exc:
        msg = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
        _ACCEPTANCE[number] = (title, False, f"{out.detail} | {msg}".strip(" |"))
        raise


@pytest.fixture
def acceptance():
    return criterion


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
