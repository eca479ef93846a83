import pytest

from fmstct.geometry import ScanConfig


@pytest.fixture(scope="session")
def bench():
    """Bench geometry, 2*lambda_m = 40 mm."""
    return ScanConfig.bench()


@pytest.fixture(scope="session")
def small_cfg():
    """Coarse geometry with the bench distances, for fast end-to-end checks."""
    return ScanConfig(l=13.75, h=106.5, lambda_m=20.0, N=8, J=8, pixel_pitch=16.256)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Record one ``A<k> PASS|FAIL: detail`` line; all lines are echoed in the summary."""
    def record(name: str, ok: bool, detail: str) -> bool:
        line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
