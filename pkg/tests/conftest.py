import numpy as np
import pytest

from adjseq import (
    CorrelationModel,
    Design,
    EventTable,
    HSDSpending,
    HypothesisSet,
    MVNSettings,
    ObservedStatistics,
    WeightingStrategy,
)

EX_COUNTS = [[100, 200], [110, 220], [225, 450]]
EX_OVERLAPS = {(0, 1): [80, 160], (0, 2): [100, 200], (1, 2): [110, 220]}
EX_WEIGHTS = [0.3, 0.3, 0.4]
EX_TRANSITION = [[0, 3 / 7, 4 / 7], [3 / 7, 0, 4 / 7], [0.5, 0.5, 0]]
# interim p-values (0.015, 0.010, 0.010); final (0.015, 0.012, 0.010)
EX_P = [[0.015, 0.015], [0.010, 0.012], [0.010, 0.010]]


def example_design(mvn=MVNSettings()) -> Design:
    table = EventTable.from_pairwise(EX_COUNTS, EX_OVERLAPS)
    return Design(
        HypothesisSet.numbered(3),
        WeightingStrategy(EX_WEIGHTS, EX_TRANSITION),
        HSDSpending(-4.0),
        CorrelationModel.from_events(table),
        mvn,
    )


@pytest.fixture(scope="session")
def design():
    return example_design()


@pytest.fixture(scope="session")
def data():
    return ObservedStatistics.from_p(EX_P)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
