import numpy as np
import pytest

from encdiff.schedule import LogLinearSchedule


@pytest.fixture
def schedule() -> LogLinearSchedule:
    return LogLinearSchedule()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
