import os

import pytest
from hypothesis import HealthCheck, settings

from jtwpa.physics import LineSpec, LoadingProfile

settings.register_profile("ci", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


@pytest.fixture(scope="session")
def paper_line():
    return LineSpec()


@pytest.fixture(scope="session")
def short_line():
    """A 40-cell engineered line: cheap enough for many transient runs."""
    return LineSpec(profile=LoadingProfile(N=40))
