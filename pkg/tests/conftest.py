import numpy as np
import pytest

from sbridge.schedules import OUVESchedule, VESchedule, VPSchedule
from sbridge.transforms import CompressedSTFT


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def transform():
    return CompressedSTFT().fit()


@pytest.fixture(params=["sbve", "sbvp"])
def bridge_schedule(request):
    return {"sbve": VESchedule, "sbvp": VPSchedule}[request.param]()


@pytest.fixture
def ouve_schedule():
    return OUVESchedule()


class ZeroNoise:
    """Stand-in generator whose normal draws are all zero (isolates means)."""

    def standard_normal(self, shape):
        return np.zeros(shape)


class UnitNoise:
    """Stand-in generator whose normal draws are all one (exposes noise scale)."""

    def standard_normal(self, shape):
        return np.ones(shape)


@pytest.fixture
def zero_noise():
    return ZeroNoise()


@pytest.fixture
def unit_noise():
    return UnitNoise()
