"""Shared fixtures and small builders used across the test modules."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tcdl import Dataset, RecordMatrix

# property tests run alongside heavy numerical tests; wall-clock
# deadlines only produce flaky failures there
settings.register_profile(
    "tcdl",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("tcdl")


def make_dataset(gen, t=3, n_s=8, p=12, scale=1.0):
    """Small random dataset with deterministic record ids."""
    records = tuple(
        RecordMatrix(data=scale * gen.standard_normal((n_s, p)), record_id=f"rec{s:03d}")
        for s in range(t)
    )
    return Dataset(records=records)


def low_rank_matrix(gen, n, p, rank, spectrum=None):
    """Exactly rank-deficient matrix with a controlled spectrum."""
    u, _ = np.linalg.qr(gen.standard_normal((n, rank)))
    v, _ = np.linalg.qr(gen.standard_normal((p, rank)))
    if spectrum is None:
        spectrum = np.linspace(1.0, 0.1, rank)
    return (u * spectrum) @ v.T


@pytest.fixture
def gen():
    return np.random.default_rng(20240915)
