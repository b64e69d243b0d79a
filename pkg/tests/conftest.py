import contextlib

import pytest

_LINES: list[str] = []


@pytest.fixture
def criterion():
    """``with criterion(n, "title") as info:`` records one PASS/FAIL line for the block.

    Entries put in ``info`` are appended to the line as measured values.
    """

    @contextlib.contextmanager
    def record(number, title):
        info = {}
        try:
            yield info
        except BaseException as exc:
            msg = f"{type(exc).__name__}: {exc}".splitlines()[0]
            _LINES.append(f"criterion {number:>2} FAIL  {title}: {msg}")
            raise
        extra = ", ".join(f"{k}={v}" for k, v in info.items())
        _LINES.append(f"criterion {number:>2} PASS  {title}" + (f" ({extra})" if extra else ""))

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
