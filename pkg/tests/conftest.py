import math

import pytest

from holojet.flow import exposure, make_path
from holojet.scene import load_scene


@pytest.fixture(scope="session")
def circles():
    return load_scene("circles")


@pytest.fixture(scope="session")
def twisted():
    return load_scene("twisted")


@pytest.fixture(scope="session")
def germfol():
    return load_scene("germfol")


@pytest.fixture(scope="session")
def scaling():
    return load_scene("scaling")


@pytest.fixture(scope="session")
def regular():
    return load_scene("regular")


@pytest.fixture(scope="session")
def ysquared():
    return load_scene("ysquared")


@pytest.fixture(scope="session")
def nonbracket():
    return load_scene("nonbracket")


def rotation_path(scene, start, angle, duration=1.0, margin=None):
    """Path along the rotation generator sweeping ``angle`` radians."""
    eps = duration / 10 if margin is None else margin
    return make_path(scene.foliation, start, duration, margin, {"R": angle / exposure(duration, eps)})


@pytest.fixture(scope="session")
def rotate():
    return rotation_path


HALF_PI = math.pi / 2
