"""Geometric core: point clouds, pinhole cameras, normalization, k-NN, synthetic clouds.

Conventions used throughout the package:

* world and camera frames are right-handed; a camera at identity rotation with
  translation (0, 0, d) looks along +z at geometry near the origin,
* image coordinates u = (u_x, u_y) put u_x along columns and u_y along rows,
  pixel (row, col) covers [col, col+1) x [row, row+1) with its center at
  (col + 0.5, row + 0.5),
* points whose camera-frame depth is <= CULL_DEPTH are culled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidInputError

CULL_DEPTH = 1e-9


def _as_points(arr) -> np.ndarray:
    pts = np.asarray(arr, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
        raise InvalidInputError(f"expected an (N, 3) array with N >= 1, got shape {np.shape(arr)}")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("point coordinates must be finite")
    return pts


@dataclass
class PointCloud:
    """N world-space positions with optional per-point feature rows.

    ``points`` is (N, 3) float64; ``features`` is (N, C) float64 or None.
    Feature values are expected to lie in [0, 1] when used as CCM pseudo-color.
    """

    points: np.ndarray
    features: np.ndarray | None = None

    def __post_init__(self):
        self.points = _as_points(self.points)
        if self.features is not None:
            feats = np.asarray(self.features, dtype=np.float64)
            if feats.ndim != 2 or feats.shape[0] != self.points.shape[0]:
                raise InvalidInputError(
                    f"features must be (N, C) with N == {self.points.shape[0]}, got shape {feats.shape}"
                )
            if not np.all(np.isfinite(feats)):
                raise InvalidInputError("feature values must be finite")
            self.features = feats

    def __len__(self) -> int:
        return self.points.shape[0]

    def with_points(self, points: np.ndarray) -> "PointCloud":
        """Same features, new coordinates."""
        feats = None if self.features is None else self.features.copy()
        return PointCloud(np.asarray(points, dtype=np.float64).copy(), feats)


@dataclass
class CameraModel:
    """Pinhole intrinsics, rigid extrinsics and the target grid resolution.

    ``focal`` is (f_x, f_y), ``principal`` is (c_x, c_y), ``resolution`` is
    (height, width). ``rotation`` must be orthonormal within 1e-9.
    """

    focal: tuple[float, float]
    principal: tuple[float, float]
    rotation: np.ndarray
    translation: np.ndarray
    resolution: tuple[int, int]

    def __post_init__(self):
        fx, fy = (float(v) for v in self.focal)
        if not (math.isfinite(fx) and math.isfinite(fy)) or fx <= 0 or fy <= 0:
            raise InvalidInputError("focal lengths must be finite and positive")
        self.focal = (fx, fy)
        cx, cy = (float(v) for v in self.principal)
        if not (math.isfinite(cx) and math.isfinite(cy)):
            raise InvalidInputError("principal point must be finite")
        self.principal = (cx, cy)
        rot = np.asarray(self.rotation, dtype=np.float64)
        if rot.shape != (3, 3) or not np.all(np.isfinite(rot)):
            raise InvalidInputError("rotation must be a finite 3x3 matrix")
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > 1e-9:
            raise InvalidInputError("rotation must be orthonormal within 1e-9")
        self.rotation = rot
        t = np.asarray(self.translation, dtype=np.float64).reshape(-1)
        if t.shape != (3,) or not np.all(np.isfinite(t)):
            raise InvalidInputError("translation must be a finite 3-vector")
        self.translation = t
        h, w = (int(v) for v in self.resolution)
        if h < 1 or w < 1:
            raise InvalidInputError("resolution must be at least 1x1")
        self.resolution = (h, w)

    @property
    def height(self) -> int:
        return self.resolution[0]

    @property
    def width(self) -> int:
        return self.resolution[1]


class Projection(NamedTuple):
    u: np.ndarray
    z: float
    culled: bool


@dataclass
class BBox3D:
    """Oriented 3D box: center, per-axis dimensions (all > 0), yaw about the up axis."""

    center: np.ndarray
    dims: np.ndarray
    yaw: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64).reshape(-1)
        d = np.asarray(self.dims, dtype=np.float64).reshape(-1)
        if c.shape != (3,) or not np.all(np.isfinite(c)):
            raise InvalidInputError("bbox center must be a finite 3-vector")
        if d.shape != (3,) or not np.all(np.isfinite(d)) or np.any(d <= 0):
            raise InvalidInputError("bbox dims must be three positive finite values")
        if not math.isfinite(float(self.yaw)):
            raise InvalidInputError("bbox yaw must be finite")
        self.center = c
        self.dims = d
        self.yaw = float(self.yaw)


@dataclass
class NeighborGraph:
    """k nearest-neighbor indices per point, row i listing point i's neighbors."""

    k: int
    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices)
        if idx.ndim != 2 or idx.shape[1] != self.k:
            raise InvalidInputError(f"indices must be (N, {self.k}), got shape {idx.shape}")
        self.indices = idx.astype(np.int64, copy=False)


def camera_coords(cam: CameraModel, points: np.ndarray) -> np.ndarray:
    """Apply the rigid extrinsics: p_cam = R p + t, row-wise."""
    return points @ cam.rotation.T + cam.translation


def project_points(cam: CameraModel, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project points through the pinhole model.

    Returns (u, z, valid) where u is (N, 2) image coordinates, z is (N,)
    camera-frame depth and valid marks points with z > CULL_DEPTH. Culled rows
    of u are NaN so accidental use is loud.
    """
    pts = _as_points(points)
    cam_pts = camera_coords(cam, pts)
    z = cam_pts[:, 2]
    valid = z > CULL_DEPTH
    fx, fy = cam.focal
    cx, cy = cam.principal
    safe_z = np.where(valid, z, 1.0)
    u = np.empty((pts.shape[0], 2), dtype=np.float64)
    u[:, 0] = fx * cam_pts[:, 0] / safe_z + cx
    u[:, 1] = fy * cam_pts[:, 1] / safe_z + cy
    u[~valid] = np.nan
    return u, z, valid


def project_point(cam: CameraModel, p) -> Projection:
    """Project a single point; ``culled`` is set when its depth is <= CULL_DEPTH."""
    u, z, valid = project_points(cam, np.asarray(p, dtype=np.float64).reshape(1, 3))
    return Projection(u[0], float(z[0]), bool(not valid[0]))


def normalize_unit(cloud: PointCloud) -> PointCloud:
    """Center on the centroid and scale so the farthest point sits on the unit sphere.

    Degenerate clouds (all points coincident) are centered and left at scale 1.
    The second centering pass keeps the output centroid at zero to within a few
    float eps even for large input offsets.
    """
    pts = cloud.points - cloud.points.mean(axis=0)
    pts = pts - pts.mean(axis=0)
    scale = float(np.max(np.linalg.norm(pts, axis=1)))
    if scale < 1e-12:
        scale = 1.0
    return cloud.with_points(pts / scale)


def _rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def normalize_kitti(cloud: PointCloud, bbox: BBox3D) -> PointCloud:
    """Express an object crop in its box's canonical frame.

    Steps: subtract the box center, rotate by -yaw about the up axis (z is up
    here, the usual LiDAR convention), divide by the box's first dimension
    (its length), then permute axes (x, y, z) -> (x, z, y).
    """
    if bbox.dims[0] <= 0:
        raise InvalidInputError("bbox length must be positive")
    pts = (cloud.points - bbox.center) @ _rot_z(-bbox.yaw).T
    pts = pts / bbox.dims[0]
    return cloud.with_points(pts[:, [0, 2, 1]])


def knn(cloud: PointCloud, k: int) -> NeighborGraph:
    """Exact k nearest neighbors by Euclidean distance.

    The query point itself is excluded while the cloud has more than k points;
    when N <= k every other point appears (nearest first) and the remaining
    slots are padded with the query's own index. Distance ties break toward
    the lower point index.
    """
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    pts = cloud.points
    n = pts.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    chunk = max(1, int(2**20 // max(n, 1)))
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        diff = pts[start:stop, None, :] - pts[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        rows = np.arange(start, stop)
        if n > k:
            d2[rows - start, rows] = np.inf
            order = np.argsort(d2, axis=1, kind="stable")
            out[start:stop] = order[:, :k]
        else:
            d2[rows - start, rows] = np.inf
            order = np.argsort(d2, axis=1, kind="stable")[:, : n - 1]
            out[start:stop, : n - 1] = order
            out[start:stop, n - 1 :] = rows[:, None]
    return NeighborGraph(k=k, indices=out)


def gen_sphere(n: int, seed: int) -> PointCloud:
    """n points drawn uniformly on the unit sphere (normalized Gaussian draws)."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n, 3))
    norms = np.linalg.norm(v, axis=1)
    while np.any(norms < 1e-12):
        bad = norms < 1e-12
        v[bad] = rng.standard_normal((int(bad.sum()), 3))
        norms = np.linalg.norm(v, axis=1)
    return PointCloud(v / norms[:, None])


def gen_lidar(n: int, rays: int, seed: int) -> PointCloud:
    """n points along ``rays`` scan lines from a virtual sensor at the origin.

    Scan lines are separated in elevation (about y, sensor looking along +z)
    so a front camera sees the familiar horizontal streak bands. Point order
    is block-contiguous by ray: ray r holds n // rays points, the first
    n % rays rays one extra. Within a ray the azimuth varies widely while the
    elevation carries only a tiny jitter, giving the ray-like anisotropy.
    """
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    if rays < 1 or rays > n:
        raise InvalidInputError("rays must satisfy 1 <= rays <= n")
    rng = np.random.default_rng(seed)
    base, extra = divmod(n, rays)
    if rays == 1:
        elevations = np.array([0.0])
    else:
        elevations = np.linspace(-0.35, 0.35, rays)
    parts = []
    for r in range(rays):
        m = base + (1 if r < extra else 0)
        azim = rng.uniform(-math.pi / 4, math.pi / 4, m)
        elev = elevations[r] + rng.normal(0.0, 0.002, m)
        dist = 2.0 + 0.25 * np.sin(3.0 * azim) + rng.normal(0.0, 0.01, m)
        x = dist * np.cos(elev) * np.sin(azim)
        y = dist * np.sin(elev)
        z = dist * np.cos(elev) * np.cos(azim)
        parts.append(np.stack([x, y, z], axis=1))
    return PointCloud(np.concatenate(parts, axis=0))


def lidar_ray_blocks(n: int, rays: int) -> list[np.ndarray]:
    """Index blocks of gen_lidar output, one array of point indices per ray."""
    base, extra = divmod(n, rays)
    blocks, start = [], 0
    for r in range(rays):
        m = base + (1 if r < extra else 0)
        blocks.append(np.arange(start, start + m))
        start += m
    return blocks


def ccm_features(cloud: PointCloud) -> np.ndarray:
    """Coordinate color map: three pseudo-color channels in [0, 1] per point.

    Uses the cloud's own features when they already carry three channels in
    [0, 1]; otherwise derives (p + 1) / 2 from the coordinates, which must lie
    in [-1, 1] (normalize_unit puts them there).
    """
    if cloud.features is not None and cloud.features.shape[1] == 3:
        feats = cloud.features
        if feats.min() < -1e-9 or feats.max() > 1.0 + 1e-9:
            raise InvalidInputError("3-channel features used as CCM must lie in [0, 1]")
        return np.clip(feats, 0.0, 1.0)
    pts = cloud.points
    if np.abs(pts).max() > 1.0 + 1e-9:
        raise InvalidInputError(
            "CCM needs coordinates in [-1, 1]; run normalize_unit (or normalize_kitti) first"
        )
    return np.clip((pts + 1.0) * 0.5, 0.0, 1.0)


def front_camera(
    resolution: tuple[int, int] = (128, 128),
    distance: float = 3.0,
    fill: float = 0.85,
) -> CameraModel:
    """Identity-rotation camera at (0, 0, -distance) framing the unit ball.

    ``fill`` scales the focal length so the ball's silhouette occupies that
    fraction of the half-extent; distance must exceed 1 so the tangent cone
    exists.
    """
    if distance <= 1.0:
        raise InvalidInputError("distance must be > 1 to frame the unit ball")
    if not 0.0 < fill <= 1.0:
        raise InvalidInputError("fill must be in (0, 1]")
    h, w = int(resolution[0]), int(resolution[1])
    f = fill * (min(h, w) / 2.0) * math.sqrt(distance * distance - 1.0)
    return CameraModel(
        focal=(f, f),
        principal=(w / 2.0, h / 2.0),
        rotation=np.eye(3),
        translation=np.array([0.0, 0.0, distance]),
        resolution=(h, w),
    )
