import pytest

from seqchi2.model import TestDesign


@pytest.fixture
def design_5_06():
    return TestDesign(5, 0.6)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if not REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(REPORT, key=lambda k: (int(k.split(".")[0]), k)):
        ok, detail = REPORT[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
