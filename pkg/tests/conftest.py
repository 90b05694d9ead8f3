import pytest

from evcharge.data_model import GeneratorRules, generate_synthetic_trips


@pytest.fixture(scope="session")
def trips_1000():
    return generate_synthetic_trips(1000, GeneratorRules(seed=7))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)
