import pytest

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture
def record():
    def _record(criterion, passed, detail):
        prev = ACCEPTANCE.get(criterion)
        if prev is not None:
            passed = passed and prev[0]
            detail = prev[1] + "; " + detail
        ACCEPTANCE[criterion] = (passed, detail)
        print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[criterion]
        terminalreporter.write_line(
            f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
