import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from psotrack.errors import DegenerateHomography, PointAtInfinity
from psotrack.geometry import (
    CameraIntrinsics,
    Homography,
    PlaneParams,
    PoseVector,
    RigidTransform,
    compose,
    expand_pose,
    homography_from_pose,
    nearest_rotation,
    normalize_homography,
    orthonormality_error,
    pose_to_transform,
    restrict_pose,
    rotation_angle,
    rotation_exp,
    rotation_log,
    skew,
    warp_point,
    warp_points,
)

trivial = pytest.mark.trivial

finite = st.floats(-1.0, 1.0, allow_nan=False)
small_rot = arrays(np.float64, 3, elements=st.floats(-1.8, 1.8, allow_nan=False))
poses6 = arrays(np.float64, 6, elements=st.floats(-3.0, 3.0, allow_nan=False))


def random_homography(rng):
    h = np.eye(3) + 0.2 * rng.standard_normal((3, 3))
    h[2, :2] *= 0.005
    return h


# skew


@trivial
def test_skew_of_123():
    expected = [[0, -3, 2], [3, 0, -1], [-2, 1, 0]]
    np.testing.assert_array_equal(skew([1, 2, 3]), expected)


@trivial
def test_skew_of_zero_is_zero():
    np.testing.assert_array_equal(skew([0, 0, 0]), np.zeros((3, 3)))


@trivial
def test_skew_annihilates_its_vector():
    v = np.array([4.0, -1.0, 2.0])
    np.testing.assert_array_equal(skew(v) @ v, [0.0, 0.0, 0.0])


@given(arrays(np.float64, 3, elements=finite), arrays(np.float64, 3, elements=finite))
def test_skew_is_cross_product(a, b):
    np.testing.assert_allclose(skew(a) @ b, np.cross(a, b), atol=1e-15)


# pose_to_transform


@trivial
def test_zero_pose_is_identity():
    t = pose_to_transform(PoseVector.zeros(6))
    np.testing.assert_array_equal(t.rotation, np.eye(3))
    np.testing.assert_array_equal(t.translation, np.zeros(3))


@trivial
def test_quarter_turn_about_z():
    t = pose_to_transform(PoseVector(6, [0, 0, 0, 0, 0, math.pi / 2]))
    expected = [[0, -1, 0], [1, 0, 0], [0, 0, 1]]
    np.testing.assert_allclose(t.rotation, expected, atol=1e-15)


def test_small_angle_matches_first_order_expansion():
    # frozen oracle: I + skew((1e-4, 0, 0)) written out by hand
    oracle = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, -1e-4], [0.0, 1e-4, 1.0]])
    r = pose_to_transform(PoseVector(6, [0, 0, 0, 1e-4, 0, 0])).rotation
    assert np.max(np.abs(r - oracle)) < 1e-8


def test_rodrigues_matches_matrix_exponential(rng):
    for w in rng.uniform(-2.5, 2.5, (50, 3)):
        np.testing.assert_allclose(rotation_exp(w), scipy.linalg.expm(skew(w)), atol=1e-12)


def test_tiny_angle_series_branch_is_continuous():
    w = np.array([3e-9, -2e-9, 1e-9])
    np.testing.assert_allclose(rotation_exp(w), scipy.linalg.expm(skew(w)), atol=1e-17)


@given(poses6)
def test_transform_rotation_is_proper_orthonormal(x):
    r = pose_to_transform(PoseVector(6, x)).rotation
    assert np.max(np.abs(r.T @ r - np.eye(3))) < 1e-9
    assert abs(np.linalg.det(r) - 1.0) < 1e-9


@given(small_rot.filter(lambda w: 1e-6 < np.linalg.norm(w) < math.pi - 1e-6))
def test_rotation_angle_equals_vector_norm(w):
    r = pose_to_transform(PoseVector(6, np.concatenate([np.zeros(3), w]))).rotation
    assert abs(rotation_angle(r) - np.linalg.norm(w)) < 1e-9


@given(small_rot.filter(lambda w: np.linalg.norm(w) < math.pi - 1e-3))
def test_rotation_log_inverts_exp(w):
    np.testing.assert_allclose(rotation_log(rotation_exp(w)), w, atol=1e-9)


def test_rotation_log_near_pi():
    w = np.array([0.0, (math.pi - 1e-9), 0.0])
    np.testing.assert_allclose(rotation_exp(rotation_log(rotation_exp(w))), rotation_exp(w), atol=1e-8)


def test_restricted_layouts():
    np.testing.assert_array_equal(expand_pose([1, 2, 3, 4], 4), [1, 2, 3, 0, 0, 4])
    np.testing.assert_array_equal(expand_pose([1, 2], 2), [1, 2, 0, 0, 0, 0])
    np.testing.assert_array_equal(restrict_pose([1, 2, 3, 4, 5, 6], 4), [1, 2, 3, 6])


@pytest.mark.parametrize("dof, values", [(3, [0, 0, 0]), (6, [0] * 5), (2, [0, np.nan])])
def test_pose_vector_rejects_bad_input(dof, values):
    with pytest.raises(ValueError):
        PoseVector(dof, values)


# homographies


@trivial
def test_identity_pose_gives_identity_homography():
    k = CameraIntrinsics(320.0, 310.0, 150.0, 90.0)
    h = homography_from_pose(RigidTransform.identity(), PlaneParams([0.2, -0.1, 0.7]), k)
    np.testing.assert_allclose(h.h, np.eye(3), atol=1e-15)


@trivial
def test_translation_enters_third_column():
    k = CameraIntrinsics(1.0, 1.0, 0.0, 0.0)
    h = homography_from_pose(RigidTransform(np.eye(3), [0.1, 0, 0]), PlaneParams(), k)
    np.testing.assert_allclose(h.h, [[1, 0, 0.1], [0, 1, 0], [0, 0, 1]], atol=1e-15)


def test_focal_100_translation_homography():
    # frozen oracle: diag(100,100,1) @ [[1,0,.1],[0,1,0],[0,0,1]] @ diag(.01,.01,1)
    expected = np.array([[1.0, 0.0, 10.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    k = CameraIntrinsics(100.0, 100.0, 0.0, 0.0)
    h = homography_from_pose(RigidTransform(np.eye(3), [0.1, 0, 0]), PlaneParams(), k)
    np.testing.assert_allclose(h.h, expected, atol=1e-12)


@given(
    arrays(np.float64, 3, elements=st.floats(-1, 1, allow_nan=False)).filter(
        lambda n: np.linalg.norm(n) > 1e-3
    ),
    st.floats(50, 1000),
    st.floats(-100, 100),
    st.floats(-100, 100),
)
def test_identity_homography_for_any_plane_and_camera(n, f, cx, cy):
    h = homography_from_pose(RigidTransform.identity(), PlaneParams(n), CameraIntrinsics(f, f, cx, cy))
    np.testing.assert_allclose(h.h, np.eye(3), atol=1e-12)


def test_homography_is_normalized():
    h = Homography(3.0 * np.array([[1, 0.1, 2], [0, 1, 3], [0.001, 0, 1]]))
    assert h.h[2, 2] == 1.0


def test_normalization_falls_back_to_largest_entry():
    m = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    m[2, 0] = -4.0
    m[0, 2] = 0.5
    out = normalize_homography(m)
    assert out[2, 0] == 1.0
    assert out[2, 2] == 0.0


def test_singular_homography_rejected():
    with pytest.raises(DegenerateHomography):
        Homography(np.ones((3, 3)))


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100), st.booleans())
@settings(max_examples=50)
def test_normalization_idempotent_and_scale_free(seed, scale, negate):
    rng = np.random.default_rng(seed)
    m = random_homography(rng)
    c = -scale if negate else scale
    n1 = normalize_homography(m)
    np.testing.assert_array_equal(normalize_homography(n1), n1)
    p = rng.uniform(0, 200, 2)
    a = warp_point(Homography(m), p)
    b = warp_point(Homography(c * m), p)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


# warp


@trivial
def test_warp_identity():
    assert warp_point(Homography.identity(), (10, 20)) == (10.0, 20.0)


@trivial
def test_warp_translation():
    h = Homography([[1, 0, 5], [0, 1, -3], [0, 0, 1]])
    assert warp_point(h, (2, 2)) == (7.0, -1.0)


@trivial
def test_warp_projective_division():
    h = Homography([[1, 0, 0], [0, 1, 0], [0.01, 0, 1]])
    assert warp_point(h, (100, 50)) == (50.0, 25.0)


def test_warp_point_at_infinity():
    h = Homography([[1, 0, 0], [0, 1, 0], [0.01, 0, 1]])
    with pytest.raises(PointAtInfinity):
        warp_point(h, (-100, 3))
    pts, ok = warp_points(h, np.array([[-100.0, 3.0], [0.0, 0.0]]))
    assert list(ok) == [False, True]
    assert np.isnan(pts[0]).all()


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=100)
def test_warp_composition(seed):
    rng = np.random.default_rng(seed)
    ha = Homography(random_homography(rng))
    hb = Homography(random_homography(rng))
    p = rng.uniform(0, 100, 2)
    direct = warp_point(ha @ hb, p)
    chained = warp_point(ha, warp_point(hb, p))
    np.testing.assert_allclose(direct, chained, rtol=0, atol=1e-9)


def test_warp_points_matches_scalar(rng):
    h = Homography(random_homography(rng))
    pts = rng.uniform(0, 100, (20, 2))
    out, ok = warp_points(h, pts)
    assert ok.all()
    for p, q in zip(pts, out):
        np.testing.assert_allclose(warp_point(h, p), q, rtol=0, atol=1e-12)


# compose


def _random_transform(rng):
    return pose_to_transform(PoseVector(6, rng.uniform(-1, 1, 6)))


@trivial
def test_compose_identity_left():
    b = RigidTransform(rotation_exp([0.1, -0.2, 0.3]), [1.0, 2.0, 3.0])
    c = compose(RigidTransform.identity(), b)
    np.testing.assert_array_equal(c.rotation, b.rotation)
    np.testing.assert_array_equal(c.translation, b.translation)


@trivial
def test_compose_with_inverse():
    a = RigidTransform(rotation_exp([0.4, 0.1, -0.7]), [0.3, -1.0, 2.0])
    c = compose(a, a.inverse())
    np.testing.assert_allclose(c.rotation, np.eye(3), atol=1e-9)
    np.testing.assert_allclose(c.translation, np.zeros(3), atol=1e-9)


@trivial
def test_two_eighth_turns_make_a_quarter_turn():
    q = pose_to_transform(PoseVector(6, [0, 0, 0, 0, 0, math.pi / 4]))
    half = pose_to_transform(PoseVector(6, [0, 0, 0, 0, 0, math.pi / 2]))
    np.testing.assert_allclose(compose(q, q).rotation, half.rotation, atol=1e-12)


def test_compose_matches_homogeneous_product(rng):
    a, b = _random_transform(rng), _random_transform(rng)
    np.testing.assert_allclose(compose(a, b).matrix(), a.matrix() @ b.matrix(), atol=1e-12)


def test_compose_reorthonormalizes_drift():
    drifted = RigidTransform(np.eye(3) + 1e-6 * np.arange(9).reshape(3, 3), np.zeros(3))
    c = compose(drifted, RigidTransform.identity())
    assert orthonormality_error(c.rotation) < 1e-12
    assert abs(np.linalg.det(c.rotation) - 1.0) < 1e-12


def test_long_composition_stays_orthonormal(rng):
    t = RigidTransform.identity()
    for _ in range(1000):
        t = compose(_random_transform(rng), t)
    assert orthonormality_error(t.rotation) < 1e-9


def test_nearest_rotation_is_proper():
    m = np.diag([1.0, 1.0, -1.0]) + 1e-3
    r = nearest_rotation(m)
    assert orthonormality_error(r) < 1e-12
    assert np.linalg.det(r) > 0


def test_transform_round_trip_through_pose6(rng):
    t = _random_transform(rng)
    back = pose_to_transform(PoseVector(6, t.to_pose6()))
    np.testing.assert_allclose(back.matrix(), t.matrix(), atol=1e-12)


def test_plane_from_normal_and_depth():
    p = PlaneParams.from_normal_depth([0, 0, 2], 4.0)
    np.testing.assert_allclose(p.scaled_normal, [0, 0, 0.25])
    with pytest.raises(ValueError):
        PlaneParams([0, 0, 0])


def test_intrinsics_for_image():
    k = CameraIntrinsics.for_image(240, 200)
    assert (k.fx, k.fy, k.cx, k.cy) == (240.0, 240.0, 119.5, 99.5)
    np.testing.assert_allclose(k.matrix() @ k.inverse_matrix(), np.eye(3), atol=1e-15)
    with pytest.raises(ValueError):
        CameraIntrinsics(0.0, 1.0, 0.0, 0.0)
