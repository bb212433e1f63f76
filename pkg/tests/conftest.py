import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from trackloc.geodesy import GeoPoint
from trackloc.sim import RunConfig, build_track

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ORIGIN = GeoPoint(50.548, 12.910)


def short_track():
    """Five-element track: straight, transition, left arc r=213, transition, straight."""
    rows = [("st", 400.0), ("ta", 40.0), ("ca", 250.0, 213.0), ("ta", 40.0), ("st", 400.0)]
    return build_track(rows, ORIGIN, 30.0)


def short_config(seed=0, **kw):
    args = dict(speed_profile=((0.0, 12.0),), seed=seed)
    args.update(kw)
    return RunConfig(**args)


@pytest.fixture(scope="session")
def track5():
    return short_track()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
