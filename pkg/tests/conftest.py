import math
from pathlib import Path

import pytest

from stopbranch import (
    Configuration,
    ParticleLaw,
    StoppingSet,
    TestFunction,
    TypeSpace,
    birth_death_law,
    build_generator,
    enumerate_truncated,
)

MODELS = Path(__file__).resolve().parent.parent / "models"

# linear birth-death, b=1, d=0.5, one particle, dt=1:
# d (e^{(b-d)t} - 1) / (b e^{(b-d)t} - d)
BD_EXTINCTION = 0.5 * (math.exp(0.5) - 1) / (math.exp(0.5) - 0.5)


def one(n=1):
    return Configuration.single(0, n)


@pytest.fixture(scope="session")
def bd_law():
    return birth_death_law(1.0, 0.5)


@pytest.fixture(scope="session")
def bd_Q(bd_law):
    return build_generator(bd_law, enumerate_truncated(TypeSpace((0.0,)), 32))


@pytest.fixture(scope="session")
def bd_Q40(bd_law):
    return build_generator(bd_law, enumerate_truncated(TypeSpace((0.0,)), 40))


@pytest.fixture(scope="session")
def S3():
    return StoppingSet(frozenset({one(3)}))


@pytest.fixture(scope="session")
def frozen_Q():
    law = ParticleLaw((0.0,), (((one(1), 1.0),),))
    return build_generator(law, enumerate_truncated(TypeSpace((0.0,)), 8))


@pytest.fixture(scope="session")
def two_law():
    c = Configuration.of
    return ParticleLaw(
        (1.0, 0.8),
        (
            ((c(), 0.3), (c({0: 1, 1: 1}), 0.5), (c({1: 1}), 0.2)),
            ((c(), 0.5), (c({1: 2}), 0.25), (c({0: 1}), 0.25)),
        ),
    )


@pytest.fixture(scope="session")
def two_Q(two_law):
    return build_generator(two_law, enumerate_truncated(TypeSpace((0.0, 1.0)), 12))


@pytest.fixture(scope="session")
def s_minus():
    return TestFunction((-1.0,))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
