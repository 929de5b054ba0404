import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fppsim.errors import BehindModelError, FormatError, InvalidArgument
from fppsim.geometry import (CAMERA_APERTURE_H_M, PinholeModel, Plane, Ray, RigidTransform,
                             column_planes, load_pinhole_json, look_at, pinhole_from_dict,
                             pinhole_to_dict, pixel_to_ray, project_point, projector_column_plane,
                             ray_plane_intersect, reprojection_error, rotation_z, standard_rig,
                             table1_camera, table1_projector)

angles = st.floats(-720, 720, allow_nan=False)


def random_pose(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    R = np.array([[1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
                  [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
                  [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)]])
    return RigidTransform(R, rng.normal(size=3))


# rotation_z

def test_rotation_zero_is_identity():
    assert np.array_equal(rotation_z(0), np.eye(3))


def test_rotation_60_six_times():
    R = np.linalg.matrix_power(rotation_z(60.0), 6)
    assert np.max(np.abs(R - np.eye(3))) < 1e-12


def test_rotation_90_maps_x_to_y():
    assert np.allclose(rotation_z(90) @ [1, 0, 0], [0, 1, 0], atol=1e-15)


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_rotation_rejects_non_finite(bad):
    with pytest.raises(InvalidArgument):
        rotation_z(bad)


@given(angles, angles)
def test_rotation_composition(a, b):
    assert np.max(np.abs(rotation_z(a) @ rotation_z(b) - rotation_z(a + b))) < 1e-12


@given(angles)
def test_rotation_orthonormal(a):
    R = rotation_z(a)
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
    assert abs(np.linalg.det(R) - 1) < 1e-12


# rigid transforms

def test_transform_rejects_non_orthonormal():
    with pytest.raises(InvalidArgument):
        RigidTransform(np.diag([1.0, 1.0, 1.1]))
    with pytest.raises(InvalidArgument):
        RigidTransform(np.diag([1.0, 1.0, -1.0]))


def test_transform_inverse_composes_to_identity(rng):
    for _ in range(20):
        T = random_pose(rng)
        I = T.compose(T.inverse())
        assert np.allclose(I.rotation, np.eye(3), atol=1e-9)
        assert np.allclose(I.translation, 0, atol=1e-9)


def test_transform_preserves_distances(rng):
    T = random_pose(rng)
    p, q = rng.normal(size=(2, 3))
    assert abs(np.linalg.norm(T.apply(p) - T.apply(q)) - np.linalg.norm(p - q)) < 1e-12


def test_ray_and_plane_are_unit():
    r = Ray((0, 0, 0), (3, 4, 0))
    assert abs(np.linalg.norm(r.direction) - 1) < 1e-12
    pl = Plane((0, 0, 2), 4.0)
    assert abs(np.linalg.norm(pl.normal) - 1) < 1e-12
    assert pl.offset == pytest.approx(2.0)


# pinhole models

def test_table1_focal_in_pixels():
    cam = table1_camera()
    assert cam.fx == pytest.approx(0.5 / 0.209995 * 960, rel=1e-12)
    assert cam.fx == pytest.approx(2285.77, abs=0.01)
    assert cam.fy == pytest.approx(0.5 / 0.152908 * 960, rel=1e-12)
    assert (cam.cx, cam.cy) == (480.0, 480.0)


def test_table1_off_axis_pixel():
    # independent pinhole computation: u = cx + fx * X / Z
    cam = table1_camera()
    fx = 0.5 / CAMERA_APERTURE_H_M * 960
    ray = pixel_to_ray(cam, 480 + fx * 0.1, 480)
    p = ray.at(1.0 / ray.direction[2])
    assert p[2] == pytest.approx(1.0)
    assert p[0] == pytest.approx(0.1, abs=1e-12)
    assert p[1] == pytest.approx(0.0, abs=1e-12)


def test_principal_point_ray_is_optical_axis(rng):
    cam = table1_camera(pose=random_pose(rng))
    r = pixel_to_ray(cam, cam.cx, cam.cy)
    assert np.allclose(r.direction, cam.optical_axis, atol=1e-12)
    assert np.allclose(r.origin, cam.center)


def test_pixel_to_ray_bounds():
    cam = table1_camera(100, 80)
    for u, v in [(-0.1, 0), (100, 0), (0, 80), (0, -1)]:
        with pytest.raises(InvalidArgument):
            pixel_to_ray(cam, u, v)


def test_project_optical_axis_point(rng):
    cam = table1_camera(pose=random_pose(rng))
    u, v = project_point(cam, cam.center + cam.optical_axis)
    assert (u, v) == pytest.approx((cam.cx, cam.cy), abs=1e-9)


def test_project_behind_raises():
    cam = table1_camera()
    with pytest.raises(BehindModelError):
        project_point(cam, (0, 0, -1))
    with pytest.raises(BehindModelError):
        project_point(cam, (0, 0, 0))


@settings(max_examples=200)
@given(st.floats(0, 959.999), st.floats(0, 959.999), st.floats(0.01, 100))
def test_pixel_projection_round_trip(u, v, t):
    cam = table1_camera(pose=RigidTransform(rotation_z(33.0), (0.2, -0.1, 0.3)))
    r = pixel_to_ray(cam, u, v)
    pu, pv = project_point(cam, r.at(t))
    assert abs(pu - u) < 1e-9 and abs(pv - v) < 1e-9


def test_translation_invariance(rng):
    cam = table1_camera()
    p = np.array([0.05, -0.02, 1.7])
    shift = rng.normal(size=3)
    moved = cam.with_pose(RigidTransform(cam.pose.rotation, cam.pose.translation + shift))
    assert np.allclose(project_point(moved, p + shift), project_point(cam, p), atol=1e-9)


def test_pinhole_validation():
    with pytest.raises(InvalidArgument):
        PinholeModel(10, 10, -1.0, 1.0, 5, 5, RigidTransform())
    with pytest.raises(InvalidArgument):
        PinholeModel(10, 10, 1.0, 1.0, 10, 5, RigidTransform())


# column planes

def test_center_column_plane_of_axis_aligned_projector():
    proj = table1_projector(RigidTransform())
    pl = projector_column_plane(proj, proj.cx)
    assert abs(pl.normal @ proj.optical_axis) < 1e-12
    assert abs(pl.normal[1]) < 1e-12
    assert abs(pl.offset) < 1e-12


def test_column_plane_contains_column_rays(rng):
    _, proj = standard_rig()
    for x_p in rng.uniform(0, proj.width_px, 20):
        pl = projector_column_plane(proj, x_p)
        assert abs(pl.signed_distance(proj.center)) < 1e-12
        for v in rng.uniform(0, proj.height_px, 10):
            assert abs(pl.normal @ pixel_to_ray(proj, x_p, v).direction) < 1e-12


def test_adjacent_column_planes_meet_at_center():
    _, proj = standard_rig()
    a = projector_column_plane(proj, 300.0)
    b = projector_column_plane(proj, 301.0)
    # line of intersection: direction n_a x n_b through a point solving both equations
    d = np.cross(a.normal, b.normal)
    A = np.vstack([a.normal, b.normal, d])
    p = np.linalg.solve(A, [a.offset, b.offset, d @ proj.center])
    assert np.allclose(p, proj.center, atol=1e-9)


def test_column_plane_range():
    _, proj = standard_rig()
    for bad in (-0.5, proj.width_px, math.nan):
        with pytest.raises(InvalidArgument):
            projector_column_plane(proj, bad)


def test_vectorized_column_planes_match_scalar(rng):
    _, proj = standard_rig()
    xs = rng.uniform(0, proj.width_px, 7)
    n, d = column_planes(proj, xs)
    for i, x in enumerate(xs):
        pl = projector_column_plane(proj, x)
        assert np.allclose(n[i], pl.normal) and d[i] == pytest.approx(pl.offset)


# ray/plane

def test_ray_plane_axis_case():
    p = ray_plane_intersect(Ray((0, 0, 0), (0, 0, 1)), Plane((0, 0, 1), 2.0))
    assert np.allclose(p, [0, 0, 2])


def test_ray_plane_parallel_and_behind():
    assert ray_plane_intersect(Ray((0, 0, 0), (1, 0, 0)), Plane((0, 0, 1), 2.0)) is None
    assert ray_plane_intersect(Ray((0, 0, 0), (0, 0, -1)), Plane((0, 0, 1), 2.0)) is None


def test_ray_plane_random_residual(rng):
    for _ in range(500):
        r = Ray(rng.normal(size=3), rng.normal(size=3))
        pl = Plane(rng.normal(size=3), rng.normal())
        p = ray_plane_intersect(r, pl)
        if p is not None:
            assert abs(pl.normal @ p - pl.offset) < 1e-10


# reprojection

def test_reprojection_error_cases(rng):
    cam = table1_camera()
    pts = np.column_stack([rng.uniform(-0.2, 0.2, (30, 2)), rng.uniform(1.5, 2.1, 30)])
    exact = np.array([project_point(cam, p) for p in pts])
    assert reprojection_error(cam, pts, exact) < 1e-12
    assert reprojection_error(cam, pts, exact + [0.1, 0]) == pytest.approx(0.1, abs=1e-9)
    noise = rng.normal(scale=0.3, size=exact.shape)
    brute = math.sqrt(sum(float(np.sum(e * e)) for e in noise) / len(noise))
    assert reprojection_error(cam, pts, exact + noise) == pytest.approx(brute, rel=1e-9)
    with pytest.raises(InvalidArgument):
        reprojection_error(cam, np.zeros((0, 3)), np.zeros((0, 2)))


# rig and JSON

def test_standard_rig_projector_offset_and_aim():
    cam, proj = standard_rig()
    assert np.allclose(proj.center, [-0.125, 0.1, 0.0])
    # projector axis crosses the camera axis at the throw distance
    u, v = project_point(proj, (0, 0, 1.8))
    assert (u, v) == pytest.approx((proj.cx, proj.cy), abs=1e-9)
    assert proj.fx == pytest.approx(1.8 / 0.5 * 912)


def test_look_at_axes():
    pose = look_at((0, -2, 1), (0, 0, 0))
    z = pose.rotation[:, 2]
    assert np.allclose(z, np.array([0, 2, -1]) / math.sqrt(5))
    with pytest.raises(InvalidArgument):
        look_at((0, 0, 1), (0, 0, 0))


def test_pinhole_json_round_trip(tmp_path, rng):
    cam = table1_camera(640, 480, random_pose(rng))
    doc = pinhole_to_dict(cam)
    path = tmp_path / "cam.json"
    path.write_text(json.dumps(doc))
    back = load_pinhole_json(path)
    assert (back.fx, back.fy, back.cx, back.cy) == (cam.fx, cam.fy, cam.cx, cam.cy)
    assert np.array_equal(back.pose.rotation, cam.pose.rotation)


def test_pinhole_json_rejects_unknown_and_missing():
    doc = pinhole_to_dict(table1_camera())
    with pytest.raises(FormatError, match="unknown"):
        pinhole_from_dict({**doc, "skew": 0})
    del doc["rotation"]
    with pytest.raises(FormatError, match="missing"):
        pinhole_from_dict(doc)
