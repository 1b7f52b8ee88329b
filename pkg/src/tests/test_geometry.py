import logging

import numpy as np

from sim2real.exceptions import (BehindCamera, DegeneratePoint, InvalidModel,
                                 RayParallelToPlane)
from sim2real.geometry import (CameraModel, Extrinsics, Family, Homography,
                               Intrinsics, Plane, Point2, Point3,
                               apply_homography, backproject_to_plane,
                               project)

from .constants import OBLIQUE, OVERHEAD, PROJECTIVE_M, SEED, TABLE
from .payloads import random_camera


def test_identity_homography():
    h = Homography.identity()
    assert apply_homography(h, Point2(3.5, -2.0)) == Point2(3.5, -2.0)


def test_translation_homography():
    m = np.eye(3)
    m[:2, 2] = (10, 5)
    h = Homography(m, Family.AFFINE)
    assert apply_homography(h, Point2(0, 0)) == Point2(10, 5)


def test_homogeneous_division():
    m = np.eye(3)
    m[2, 0] = 0.01
    h = Homography(m)
    assert apply_homography(h, Point2(100, 50)) == Point2(50, 25)


def test_point_at_infinity():
    m = np.eye(3)
    m[2, 0] = 0.01
    h = Homography(m)

    exc = None
    try:
        apply_homography(h, Point2(-100, 0))
    except DegeneratePoint as e:
        exc = e

    assert exc is not None
    assert exc.code == "degenerate_point"


def test_inverse_round_trip():
    h = Homography(PROJECTIVE_M)
    inverse = h.inverse()
    rng = np.random.Generator(np.random.PCG64(SEED))
    for x, y in rng.uniform(0, 640, (50, 2)):
        back = apply_homography(h, apply_homography(inverse, Point2(x, y)))
        assert abs(back.x - x) < 1e-9 and abs(back.y - y) < 1e-9


def test_homography_validation():
    for m in (np.diag([1.0, 1.0, 2.0]),
              np.zeros((3, 3)),
              np.ones((2, 3))):
        exc = None
        try:
            Homography(m)
        except InvalidModel as e:
            exc = e
        assert exc is not None

    exc = None
    try:
        Homography(PROJECTIVE_M, Family.AFFINE)
    except InvalidModel as e:
        exc = e
    assert "c = 0" in exc.detail


def test_homography_from_matrix_normalizes():
    h = Homography.from_matrix(2 * PROJECTIVE_M)
    assert h.m[2, 2] == 1.0
    assert np.allclose(h.m, PROJECTIVE_M, atol=1e-15)


def test_homography_json():
    h = Homography(PROJECTIVE_M)
    data = h.to_dict()
    assert data['family'] == "projective"
    assert data['m'] == PROJECTIVE_M.ravel().tolist()
    assert Homography.from_dict(data) == h

    scaling = Homography(np.diag([1.5, 0.5, 1.0]), Family.TWO_DOF)
    assert scaling.to_dict()['variant'] == "scaling"
    assert Homography.from_dict(scaling.to_dict()) == scaling


def test_project_on_optical_axis():
    cam = CameraModel(Intrinsics(1, 1, 0, 0), Extrinsics.identity())
    assert project(cam, Point3(0, 0, 1)) == Point2(0, 0)


def test_project_known_value():
    cam = CameraModel(Intrinsics(500, 500, 320, 240), Extrinsics.identity())
    assert project(cam, Point3(1, 0, 2)) == Point2(570, 240)


def test_project_matches_matrix_product():
    rng = np.random.Generator(np.random.PCG64(SEED))
    for _ in range(100):
        cam = random_camera(rng)
        p = np.append(rng.uniform(-0.3, 0.3, 2), rng.uniform(0, 0.2))

        c = np.hstack([cam.intrinsics.matrix(), np.zeros((3, 1))]) @ \
            np.vstack([np.hstack([cam.extrinsics.r,
                                  cam.extrinsics.t[:, None]]),
                       [0, 0, 0, 1]])
        u = c @ np.append(p, 1.0)
        pixel = project(cam, Point3(*p))
        assert abs(pixel.x - u[0] / u[2]) < 1e-9
        assert abs(pixel.y - u[1] / u[2]) < 1e-9


def test_project_behind_camera():
    cam = CameraModel(Intrinsics(1, 1, 0, 0), Extrinsics.identity())

    exc = None
    try:
        project(cam, Point3(0, 0, -1))
    except BehindCamera as e:
        exc = e

    assert exc.code == "behind_camera"
    # BehindCamera is a kind of DegeneratePoint
    assert isinstance(exc, DegeneratePoint)


def test_backproject_principal_point():
    p = backproject_to_plane(OVERHEAD, Point2(320, 240), TABLE)
    assert np.allclose(p.to_list(), [0, 0, 0], atol=1e-12)


def test_backproject_overhead():
    p = backproject_to_plane(OVERHEAD, Point2(370, 140), TABLE)
    assert np.allclose(p.to_list(), [0.1, 0.2, 0.0], atol=1e-12)


def test_backproject_round_trip():
    rng = np.random.Generator(np.random.PCG64(SEED))
    tilted = Plane.from_normal((0.1, -0.2, 1.0), 0.02)
    for i in range(1000):
        cam = random_camera(rng)
        plane = TABLE if i % 2 else tilted
        p = plane.project_point(np.append(rng.uniform(-0.3, 0.3, 2), 0.0))
        back = backproject_to_plane(cam, project(cam, Point3(*p)), plane)
        assert np.linalg.norm(back.as_array() - p) < 1e-8


def test_ray_parallel_to_plane(caplog):
    caplog.set_level(logging.DEBUG, logger="sim2real.geometry")
    wall = Plane((1.0, 0.0, 0.0), 0.0)

    exc = None
    try:
        backproject_to_plane(OVERHEAD, Point2(320, 240), wall)
    except RayParallelToPlane as e:
        exc = e

    assert exc.code == "ray_parallel_to_plane"
    assert "Backprojection pivots" in caplog.text


def test_plane_behind_camera(caplog):
    caplog.set_level(logging.DEBUG, logger="sim2real.geometry")
    ceiling = Plane((0.0, 0.0, 1.0), 2.0)

    exc = None
    try:
        backproject_to_plane(OVERHEAD, Point2(320, 240), ceiling)
    except BehindCamera as e:
        exc = e

    assert exc is not None
    assert "Plane hit at camera depth" in caplog.text


def test_extrinsics_validation():
    for r in (np.diag([1.0, 1.0, 2.0]), np.diag([1.0, 1.0, -1.0])):
        exc = None
        try:
            Extrinsics(r, [0, 0, 0])
        except InvalidModel as e:
            exc = e
        assert exc is not None


def test_extrinsics_construction_paths():
    rng = np.random.Generator(np.random.PCG64(SEED))
    poses = [Extrinsics.identity(),
             Extrinsics.from_rotvec(rng.normal(size=3), rng.normal(size=3)),
             OBLIQUE.extrinsics,
             random_camera(rng).extrinsics]
    for ext in poses:
        assert np.allclose(ext.r.T @ ext.r, np.eye(3), atol=1e-12)
        assert abs(np.linalg.det(ext.r) - 1.0) < 1e-12


def test_look_at():
    ext = Extrinsics.look_at((0.1, -0.6, 1.0), (0, 0, 0))
    assert np.allclose(ext.center, [0.1, -0.6, 1.0], atol=1e-12)
    assert np.allclose(ext.transform((0, 0, 0))[:2], 0, atol=1e-12)

    exc = None
    try:
        Extrinsics.look_at((0, 0, 1), (0, 0, 1))
    except InvalidModel as e:
        exc = e
    assert exc is not None


def test_camera_json():
    data = OBLIQUE.to_dict()
    assert sorted(data) == ['extrinsics', 'intrinsics']
    assert sorted(data['intrinsics']) == ['cx', 'cy', 'fx', 'fy']
    assert len(data['extrinsics']['r']) == 9
    assert CameraModel.from_dict(data) == OBLIQUE


def test_intrinsics_validation():
    exc = None
    try:
        Intrinsics(0, 500, 320, 240)
    except InvalidModel as e:
        exc = e
    assert exc is not None


def test_plane():
    plane = Plane.from_normal((0, 0, 2), 1.0)
    assert plane.normal == (0.0, 0.0, 1.0)
    assert plane.d == 0.5
    assert plane.signed_distance((1, 2, 3)) == 2.5
    assert np.allclose(plane.project_point((1, 2, 3)), [1, 2, 0.5])
    assert Plane.from_dict(plane.to_dict()) == plane

    e1, e2 = Plane.from_normal((0.1, -0.2, 1.0)).basis()
    assert abs(np.dot(e1, e2)) < 1e-12

    exc = None
    try:
        Plane((0.0, 0.0, 2.0))
    except InvalidModel as e:
        exc = e
    assert exc is not None


def test_points():
    assert Point2.from_list([1, 2]).to_list() == [1.0, 2.0]
    assert Point3.from_array(np.array([1, 2, 3])) == Point3(1, 2, 3)

    exc = None
    try:
        Point2(float('nan'), 0)
    except InvalidModel as e:
        exc = e
    assert exc is not None
