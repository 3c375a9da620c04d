import pytest
from hypothesis import HealthCheck, settings

from osadelay.core import derive

settings.register_profile("artifact", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("artifact")


@pytest.fixture
def make_params():
    """Parameter factory with moderate defaults."""
    def make(**kw):
        base = dict(N=3, M_C=2, p_c=0.2, eta=0.9, eta_C=0.85, lam=0.02, q=0.3, p=0.4,
                    Qs_max=4, protocol="buffering")
        base.update(kw)
        return derive(**base)
    return make


@pytest.fixture
def unit_params():
    """N = 1 with perfect channels and unit packets: deterministic two-slot service."""
    def make(lam=0.01, protocol="buffering", Qs_max=30):
        return derive(N=1, M_C=1, p_c=0.0, eta=1.0, eta_C=1.0, lam=lam, q=1.0, p=1.0,
                      Qs_max=Qs_max, protocol=protocol)
    return make
