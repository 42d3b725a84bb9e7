import pytest

from nscascade.config import ExperimentConfig
from nscascade.construction import build_coefficients


def desk_config(**overrides) -> ExperimentConfig:
    """Small cascade ``N = (1, 3, 16)`` on a 64^3 grid."""
    base = dict(theta_star=(16.0, 0.0, 0.0), eta_star=(0, 0, 1), A=9.0, k_star=2, n=64)
    base.update(overrides)
    return ExperimentConfig(**base)


@pytest.fixture(scope="session")
def desk_table():
    return build_coefficients(desk_config().validate())


# one line per acceptance criterion, printed after the run
ACCEPTANCE_RESULTS: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_RESULTS[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[k])
