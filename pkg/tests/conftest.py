import numpy as np
import pytest

from fppsim.geometry import RigidTransform, standard_rig
from fppsim.patterns import PatternSchedule
from fppsim.scene import InfinitePlane, Material, Primitive, Scene, Sphere


def frontal_plane_scene(z_m=1.8, background=True):
    """Camera-frame plane facing the camera; optionally a distant background behind it."""
    plane = Primitive(InfinitePlane(), RigidTransform(np.eye(3), (0, 0, z_m)), Material(), background)
    if background:
        return Scene([plane])
    far = Primitive(InfinitePlane(), RigidTransform(np.eye(3), (0, 0, 50.0)), Material(), True)
    return Scene([far, plane])


def sphere_scene(radius=0.1, center_m=1.85, background_m=1.95):
    bg = Primitive(InfinitePlane(), RigidTransform(np.eye(3), (0, 0, background_m)), Material(), True)
    sph = Primitive(Sphere(radius), RigidTransform(np.eye(3), (0, 0, center_m)), Material())
    return Scene([bg, sph])


@pytest.fixture(scope="session")
def rig160():
    return standard_rig(160, 160)


@pytest.fixture(scope="session")
def schedule():
    return PatternSchedule()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
