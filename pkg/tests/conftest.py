import pytest

from riskdiff import TimeGrid, arctangent_model, entropic_driver


def fig1_model(mu=0.08):
    return arctangent_model(r=0.02, mu=mu, a=0.7, b=0.03, alpha=5.0,
                            m_level=0.0, nu=1.0, rho=-0.2, s0=100.0, v0=0.15)


@pytest.fixture(scope="session")
def model():
    return fig1_model()


@pytest.fixture(scope="session")
def driver():
    return entropic_driver(1.0, 0.2)


@pytest.fixture(scope="session")
def grid10():
    return TimeGrid(T=0.25, N=10)


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow_full: full-schedule reproduction run (long)")


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
