from __future__ import annotations

import numpy as np
import pytest

from srlaser import SystemParams


def rel_err(a, b):
    """|a - b| / |b| with a safe floor for b = 0."""
    b = np.asarray(b, dtype=float)
    return np.max(np.abs(np.asarray(a, dtype=float) - b) / np.maximum(np.abs(b), 1e-300))


@pytest.fixture
def desk_params():
    """Small-N bench point: g = kappa/4, gamma = kappa/100, eta = 20 gamma."""
    return SystemParams(n_atoms=3, g=0.25, kappa=1.0, gamma=0.01, eta=0.2)


@pytest.fixture
def desk_params_n4(desk_params):
    return desk_params.updated(n_atoms=4)
