import contextlib

import pytest

_ACCEPTANCE: dict[int, str] = {}


class _Record:
    def __init__(self):
        self.detail = ""


@pytest.fixture
def criterion():
    """Context manager that records one PASS/FAIL line per acceptance criterion."""

    @contextlib.contextmanager
    def run(number: int, title: str):
        rec = _Record()
        try:
            yield rec
        except BaseException:
            _ACCEPTANCE[number] = f"criterion {number} FAIL  {title}: {rec.detail}"
            raise
        _ACCEPTANCE[number] = f"criterion {number} PASS  {title}: {rec.detail}"

    return run


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[n])
