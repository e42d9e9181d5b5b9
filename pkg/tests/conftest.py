import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_unitary(rng, d):
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_density(rng, d, rank=None):
    rank = d if rank is None else rank
    b = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    m = b @ b.conj().T
    return m / np.trace(m).real


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
