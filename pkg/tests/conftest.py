"""Shared fixtures for the calibguide test suite."""

import numpy as np
import pytest

from calibguide.geometry import BoardGeometry, IntrinsicParams
from calibguide.synth import default_real_camera


@pytest.fixture
def board():
    return BoardGeometry()


@pytest.fixture
def pinhole_params():
    """Distortion-free reference camera used by closed-form tests."""
    return IntrinsicParams(fx=1000.0, fy=1000.0, cx=640.0, cy=360.0)


@pytest.fixture
def real_camera():
    """The webcam-like ground-truth model (with distortion)."""
    return default_real_camera()


@pytest.fixture
def rng():
    return np.random.default_rng(42)
