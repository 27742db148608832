import pytest

# criterion label -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture
def verdict():
    def record(label, passed, detail):
        ACCEPTANCE[label] = (bool(passed), detail)
        print(f"criterion {label}: {'PASS' if passed else 'FAIL'}: {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE, key=lambda s: (int(s.split()[0].rstrip("abc")), s)):
        passed, detail = ACCEPTANCE[label]
        terminalreporter.write_line(f"criterion {label}: {'PASS' if passed else 'FAIL'}: {detail}")
