import pytest

from fprecon import synth

_criteria = []


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria.append((props["criterion"], report.outcome, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcome, detail in sorted(_criteria, key=lambda c: int(c[0].split(".")[0])):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {label}: {detail or 'did not complete'}")


@pytest.fixture(scope="session")
def prints():
    """Six constant-field 300x300 prints with 12 planted minutiae each."""
    out = []
    for k in range(6):
        spec = synth.random_spec(300, 300, 12, seed=100 + k)
        out.append(synth.generate(spec))
    return out
