import pytest

from betasel.cli import bundled_path, ingest_csv
from betasel.model import Dataset, ModelSpec

FOOD_DERIVE = ("ixp=income*persons", "income2=income^2", "persons2=persons^2")

# lines recorded by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def food():
    return ingest_csv(bundled_path(), "food/income", FOOD_DERIVE)


@pytest.fixture(scope="session")
def food_spec(food):
    return ModelSpec((food.index("persons"), food.index("ixp")), (food.index("persons"),))


def random_dataset(rng, n, p):
    cols = rng.random((n, p))
    y = rng.beta(3.0, 5.0, size=n)
    return Dataset(y, cols)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
