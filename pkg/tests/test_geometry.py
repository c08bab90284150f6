"""Tests for splatlab.geometry: cameras, projection, normalization, knn,
and the synthetic cloud generators."""

import math

import numpy as np
import pytest

from splatlab.errors import InvalidInputError
from splatlab.geometry import (
    BBox3D,
    CameraModel,
    PointCloud,
    camera_coords,
    ccm_features,
    front_camera,
    gen_lidar,
    gen_sphere,
    knn,
    lidar_ray_blocks,
    normalize_kitti,
    normalize_unit,
    project_point,
    project_points,
)


def _identity_cam(focal=(1.0, 1.0), principal=(0.0, 0.0), resolution=(8, 8)):
    return CameraModel(
        focal=focal,
        principal=principal,
        rotation=np.eye(3),
        translation=np.zeros(3),
        resolution=resolution,
    )


def test_project_on_axis():
    """Point on the optical axis lands on the principal point."""
    cam = _identity_cam()
    res = project_point(cam, np.array([0.0, 0.0, 1.0]))
    assert not res.culled
    np.testing.assert_array_equal(res.u, [0.0, 0.0])
    assert res.z == 1.0


def test_project_pinhole_division():
    cam = _identity_cam()
    res = project_point(cam, np.array([1.0, 0.0, 2.0]))
    np.testing.assert_array_equal(res.u, [0.5, 0.0])
    assert res.z == 2.0


def test_project_hand_case():
    # fx*x/z + cx = 100*0.5/4 + 32 = 44.5; fy*y/z + cy = 100*(-0.25)/4 + 32
    cam = _identity_cam(focal=(100.0, 100.0), principal=(32.0, 32.0), resolution=(64, 64))
    cam = CameraModel(cam.focal, cam.principal, cam.rotation,
                      np.array([0.0, 0.0, 4.0]), cam.resolution)
    res = project_point(cam, np.array([0.5, -0.25, -4.0 + 4.0]))
    np.testing.assert_allclose(res.u, [44.5, 25.75], rtol=0, atol=1e-12)
    assert res.z == 4.0


def test_project_matches_straightline_oracle():
    """Random pose and points against a second, straight-line implementation."""
    rng = np.random.default_rng(42)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    t = rng.normal(size=3)
    cam = CameraModel((37.0, 41.0), (15.5, 16.5), q, t, (32, 32))
    pts = rng.normal(size=(50, 3))

    u, z, valid = project_points(cam, pts)
    for i, p in enumerate(pts):
        pc = q @ p + t
        if pc[2] <= 1e-9:
            assert not valid[i]
            continue
        ux = 37.0 * pc[0] / pc[2] + 15.5
        uy = 41.0 * pc[1] / pc[2] + 16.5
        np.testing.assert_allclose(u[i], [ux, uy], rtol=0, atol=1e-12)
        np.testing.assert_allclose(z[i], pc[2], rtol=0, atol=1e-12)


def test_project_ray_scaling_invariance():
    """Scaling a point along its ray leaves u unchanged under identity pose."""
    cam = _identity_cam(focal=(50.0, 50.0), principal=(4.0, 4.0))
    p = np.array([0.3, -0.2, 1.7])
    base = project_point(cam, p)
    for lam in (0.5, 2.0, 7.3):
        res = project_point(cam, lam * p)
        np.testing.assert_allclose(res.u, base.u, rtol=0, atol=1e-9)


def test_project_culls_nonpositive_depth():
    cam = _identity_cam()
    assert project_point(cam, np.array([0.0, 0.0, -1.0])).culled
    assert project_point(cam, np.array([0.0, 0.0, 0.0])).culled
    assert project_point(cam, np.array([1.0, 1.0, 1e-10])).culled


def test_project_rejects_nonfinite():
    cam = _identity_cam()
    with pytest.raises(InvalidInputError):
        project_point(cam, np.array([np.nan, 0.0, 1.0]))


def test_camera_rejects_bad_rotation():
    with pytest.raises(InvalidInputError):
        CameraModel((1.0, 1.0), (0.0, 0.0), np.eye(3) * 2.0, np.zeros(3), (4, 4))


def test_camera_coords_applies_extrinsics():
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    cam = CameraModel((1.0, 1.0), (0.0, 0.0), q, np.array([1.0, 2.0, 3.0]), (4, 4))
    pts = rng.normal(size=(5, 3))
    np.testing.assert_allclose(camera_coords(cam, pts), pts @ q.T + [1, 2, 3], atol=1e-12)


def test_front_camera_frozen_focal():
    # 0.85 * (128/2) * sqrt(3^2 - 1), frozen from the construction formula
    cam = front_camera((128, 128), 3.0, 0.85)
    assert cam.focal[0] == pytest.approx(153.86643558619275, abs=1e-12)
    assert cam.focal[0] == cam.focal[1]
    assert cam.principal == (64.0, 64.0)
    np.testing.assert_array_equal(cam.rotation, np.eye(3))
    np.testing.assert_array_equal(cam.translation, [0.0, 0.0, 3.0])


def test_front_camera_keeps_unit_ball_visible():
    """Every unit-ball point projects inside the image for moderate fill."""
    cam = front_camera((96, 128), 2.5, 0.9)
    pts = gen_sphere(500, 1).points
    u, _, valid = project_points(cam, pts)
    assert valid.all()
    assert (u[:, 0] > 0).all() and (u[:, 0] < 128).all()
    assert (u[:, 1] > 0).all() and (u[:, 1] < 96).all()


def test_front_camera_validates():
    with pytest.raises(InvalidInputError):
        front_camera((32, 32), 1.0, 0.85)
    with pytest.raises(InvalidInputError):
        front_camera((32, 32), 3.0, 0.0)


def test_normalize_unit_symmetric_pair():
    out = normalize_unit(PointCloud(np.array([[2.0, 0, 0], [-2.0, 0, 0]])))
    np.testing.assert_allclose(out.points, [[1, 0, 0], [-1, 0, 0]], atol=1e-12)


def test_normalize_unit_degenerate_single_point():
    out = normalize_unit(PointCloud(np.array([[5.0, 5.0, 5.0]])))
    np.testing.assert_array_equal(out.points, [[0.0, 0.0, 0.0]])


def test_normalize_unit_contract_posthoc():
    """Recomputed centroid and max norm satisfy the contract."""
    rng = np.random.default_rng(7)
    out = normalize_unit(PointCloud(rng.normal(size=(200, 3)) * 3.0 + 5.0))
    np.testing.assert_allclose(out.points.mean(axis=0), np.zeros(3), atol=1e-12)
    assert abs(np.linalg.norm(out.points, axis=1).max() - 1.0) < 1e-12


def test_normalize_unit_preserves_features():
    feats = np.array([[0.1, 0.2, 0.3]])
    out = normalize_unit(PointCloud(np.array([[1.0, 2.0, 3.0]]), feats))
    np.testing.assert_array_equal(out.features, feats)


def test_normalize_kitti_centering():
    bbox = BBox3D(np.array([1.0, -2.0, 0.5]), np.array([2.0, 1.0, 1.0]), 0.77)
    out = normalize_kitti(PointCloud(bbox.center[None, :].copy()), bbox)
    np.testing.assert_allclose(out.points, [[0.0, 0.0, 0.0]], atol=1e-15)


def test_normalize_kitti_hand_composed():
    """yaw=pi/2, dims[0]=2: (2,0,0) -> rotate (0,-2,0) -> scale (0,-1,0)
    -> permute (0,0,-1)."""
    bbox = BBox3D(np.zeros(3), np.array([2.0, 1.0, 1.0]), math.pi / 2)
    out = normalize_kitti(PointCloud(np.array([[2.0, 0.0, 0.0]])), bbox)
    np.testing.assert_allclose(out.points, [[0.0, 0.0, -1.0]], atol=1e-12)


def test_normalize_kitti_identity_rotation_scale():
    bbox = BBox3D(np.zeros(3), np.array([1.0, 1.0, 1.0]), 0.0)
    out = normalize_kitti(PointCloud(np.array([[1.0, 2.0, 3.0]])), bbox)
    np.testing.assert_allclose(out.points, [[1.0, 3.0, 2.0]], atol=1e-15)


def test_normalize_kitti_rigid_invariance():
    """Rotating cloud and box together about the up axis changes nothing."""
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(40, 3))
    bbox = BBox3D(np.array([0.5, 0.3, -0.2]), np.array([3.0, 1.5, 1.2]), 0.4)
    base = normalize_kitti(PointCloud(pts.copy()), bbox)

    theta = 1.1
    rot = np.array([
        [math.cos(theta), -math.sin(theta), 0.0],
        [math.sin(theta), math.cos(theta), 0.0],
        [0.0, 0.0, 1.0],
    ])
    shift = np.array([4.0, -1.0, 2.0])
    moved = PointCloud(pts @ rot.T + shift)
    bbox2 = BBox3D(rot @ bbox.center + shift, bbox.dims, bbox.yaw + theta)
    out = normalize_kitti(moved, bbox2)
    np.testing.assert_allclose(out.points, base.points, atol=1e-9)


def test_normalize_kitti_rejects_bad_dims():
    with pytest.raises(InvalidInputError):
        BBox3D(np.zeros(3), np.array([0.0, 1.0, 1.0]), 0.0)


def test_knn_collinear():
    cloud = PointCloud(np.array([[0.0, 0, 0], [1.0, 0, 0], [3.0, 0, 0]]))
    graph = knn(cloud, 1)
    np.testing.assert_array_equal(graph.indices[:, 0], [1, 0, 1])


def test_knn_self_padding():
    graph = knn(PointCloud(np.array([[1.0, 2.0, 3.0]])), 2)
    np.testing.assert_array_equal(graph.indices, [[0, 0]])


def test_knn_excludes_self_when_enough_points():
    rng = np.random.default_rng(5)
    cloud = PointCloud(rng.normal(size=(30, 3)))
    graph = knn(cloud, 6)
    for i in range(30):
        assert i not in graph.indices[i]


def test_knn_matches_bruteforce():
    """Sort-based all-pairs oracle, lower index on ties."""
    rng = np.random.default_rng(12)
    pts = rng.normal(size=(64, 3))
    graph = knn(PointCloud(pts), 4)

    diff = pts[:, None, :] - pts[None, :, :]
    d2 = (diff * diff).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    for i in range(64):
        order = np.argsort(d2[i], kind="stable")[:4]
        np.testing.assert_array_equal(graph.indices[i], order)


def test_knn_permutation_equivariance():
    rng = np.random.default_rng(8)
    pts = rng.normal(size=(25, 3))
    perm = rng.permutation(25)
    inverse = np.empty(25, dtype=np.int64)
    inverse[perm] = np.arange(25)

    g1 = knn(PointCloud(pts), 3)
    g2 = knn(PointCloud(pts[perm]), 3)
    np.testing.assert_array_equal(g2.indices, inverse[g1.indices[perm]])


def test_gen_sphere_unit_norms():
    pts = gen_sphere(1000, 4).points
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-9)


def test_gen_sphere_deterministic():
    a = gen_sphere(100, 17).points
    b = gen_sphere(100, 17).points
    assert np.array_equal(a, b)


def test_gen_sphere_frozen_regression():
    pts = gen_sphere(4, 11).points
    expected = np.array([
        [0.018681436816318283, 0.74290675488042601, 0.66913418495210097],
        [-0.64429156388168507, -0.37620337054372088, -0.66585238957477377],
        [0.60541753377356788, -0.059576661617080237, 0.7936751421016629],
        [-0.7620842566379824, 0.64625460510085331, -0.039781543088146951],
    ])
    np.testing.assert_array_equal(pts, expected)


def test_gen_lidar_ray_structure():
    """Within-ray elevation spread is tiny next to the across-ray spread."""
    cloud = gen_lidar(1000, 8, 2)
    pts = cloud.points
    elev = np.arctan2(pts[:, 1], np.hypot(pts[:, 0], pts[:, 2]))

    blocks = lidar_ray_blocks(1000, 8)
    assert sum(len(b) for b in blocks) == 1000
    within = [elev[b].std() for b in blocks]
    means = [elev[b].mean() for b in blocks]
    assert max(within) < 0.01
    assert np.std(means) > 0.1
    assert max(within) < np.std(elev)


def test_gen_lidar_deterministic_and_validates():
    assert np.array_equal(gen_lidar(64, 8, 5).points, gen_lidar(64, 8, 5).points)
    with pytest.raises(InvalidInputError):
        gen_lidar(4, 8, 0)
    with pytest.raises(InvalidInputError):
        gen_lidar(0, 1, 0)


def test_ccm_features_from_coordinates():
    cloud = PointCloud(np.array([[1.0, -1.0, 0.0]]))
    np.testing.assert_allclose(ccm_features(cloud), [[1.0, 0.0, 0.5]], atol=1e-15)


def test_ccm_features_prefers_stored_features():
    feats = np.array([[0.25, 0.5, 0.75]])
    cloud = PointCloud(np.array([[9.0, 9.0, 9.0]]), feats)
    np.testing.assert_array_equal(ccm_features(cloud), feats)


def test_ccm_features_rejects_out_of_range():
    cloud = PointCloud(np.zeros((1, 3)), np.array([[1.5, 0.0, 0.0]]))
    with pytest.raises(InvalidInputError):
        ccm_features(cloud)


def test_pointcloud_validation():
    with pytest.raises(InvalidInputError):
        PointCloud(np.zeros((0, 3)))
    with pytest.raises(InvalidInputError):
        PointCloud(np.zeros((2, 2)))
    with pytest.raises(InvalidInputError):
        PointCloud(np.array([[np.inf, 0.0, 0.0]]))
    with pytest.raises(InvalidInputError):
        PointCloud(np.zeros((2, 3)), np.zeros((3, 1)))
