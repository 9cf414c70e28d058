import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from pmps import syntax

ROOT = Path(__file__).resolve().parent.parent
TWOBUYERS = ROOT / "protocols" / "twobuyers.pmps"

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("slow", deadline=None, max_examples=400,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def twobuyers():
    return syntax.parse_file(TWOBUYERS.read_text())


@pytest.fixture(scope="session")
def gamma(twobuyers):
    return twobuyers.gamma()
