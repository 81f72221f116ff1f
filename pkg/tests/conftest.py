"""Shared fixtures for the verification toolkit tests."""
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.geometry import Disc  # noqa: E402
from models.lattice import LatticeModel  # noqa: E402
from models.path import ExcursionConfig  # noqa: E402


@pytest.fixture
def seed():
    return 20240607


@pytest.fixture
def coarse_excursion():
    """Short excursions: ε = 0.05 with the largest admissible step."""
    return ExcursionConfig(eps_start=0.05, dt=0.05 ** 2 / 4)


@pytest.fixture
def left_disc():
    return Disc(-0.4, 0.25)


@pytest.fixture
def right_disc():
    return Disc(0.4, 0.25)


@pytest.fixture
def grid4():
    return LatticeModel.rectangle(4, 4)
