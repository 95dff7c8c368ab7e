"""Point-cloud primitives used by the physical-property extractors."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, InvalidGeometryError, NoPlaneFoundError

DEFAULT_THRESHOLD_M = 0.005
DEFAULT_ITERATIONS = 500
TOP_LEVEL_MIN_NZ = 0.9

_DEGENERATE_EPS = 1e-12


class NoPlaneWarning(UserWarning):
    """No near-horizontal plane was found; flatness reported as 0."""


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"expected an (n, 3) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return np.array_equal(self.points, other.points)

    def merged(self, other: PointCloud) -> PointCloud:
        return PointCloud(np.vstack([self.points, other.points]))


@dataclass(frozen=True)
class BoundingBox:
    length_m: float
    width_m: float
    height_m: float


@dataclass(frozen=True)
class PlaneModel:
    normal: tuple[float, float, float]
    offset: float
    inlier_count: int
    inlier_threshold_m: float

    def distances(self, points: np.ndarray) -> np.ndarray:
        return np.abs(np.asarray(points) @ np.asarray(self.normal) - self.offset)


def bounding_box(cloud: PointCloud) -> BoundingBox:
    """Axis-aligned extents; the two horizontal extents are sorted so length >= width."""
    if len(cloud) == 0:
        raise EmptyInputError("bounding_box: empty point cloud")
    ext = cloud.points.max(axis=0) - cloud.points.min(axis=0)
    a, b = float(ext[0]), float(ext[1])
    return BoundingBox(max(a, b), min(a, b), float(ext[2]))


def _plane_through(p0, p1, p2):
    """Unit normals and offsets for a batch of point triples; None rows are degenerate."""
    n = np.cross(p1 - p0, p2 - p0)
    norm = np.linalg.norm(n, axis=1)
    scale = np.maximum(
        np.linalg.norm(p1 - p0, axis=1) * np.linalg.norm(p2 - p0, axis=1), 1.0e-300
    )
    ok = norm > _DEGENERATE_EPS * scale
    n = np.where(ok[:, None], n / np.where(ok, norm, 1.0)[:, None], 0.0)
    # orient every normal into the upper half-space so offsets are comparable
    flip = (n[:, 2] < 0) | ((n[:, 2] == 0) & (n[:, 1] < 0)) | (
        (n[:, 2] == 0) & (n[:, 1] == 0) & (n[:, 0] < 0)
    )
    n[flip] *= -1.0
    d = np.einsum("ij,ij->i", n, p0)
    return n, d, ok


def ransac_plane(
    cloud: PointCloud,
    threshold_m: float = DEFAULT_THRESHOLD_M,
    iterations: int = DEFAULT_ITERATIONS,
    seed: int | np.random.SeedSequence | None = 0,
    min_abs_nz: float = 0.0,
) -> PlaneModel:
    """Fit the plane with the most inliers among ``iterations`` 3-point hypotheses.

    When ``iterations`` reaches the number of distinct triples, every triple is
    tried in lexicographic order instead of sampling, so small clouds get the
    exhaustive answer. Collinear triples and (if ``min_abs_nz`` > 0) hypotheses
    tilted further than allowed are skipped. Ties keep the first hypothesis.
    """
    pts = cloud.points
    n = len(pts)
    if n < 3:
        raise EmptyInputError(f"ransac_plane: need at least 3 points, got {n}")
    if not threshold_m > 0:
        raise ValueError("threshold_m must be positive")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")

    if iterations >= math.comb(n, 3):
        triples = np.array(list(itertools.combinations(range(n), 3)), dtype=np.intp)
    else:
        rng = np.random.default_rng(seed)
        triples = np.stack([rng.choice(n, size=3, replace=False) for _ in range(iterations)])

    normals, offsets, ok = _plane_through(pts[triples[:, 0]], pts[triples[:, 1]], pts[triples[:, 2]])
    if min_abs_nz > 0:
        ok &= np.abs(normals[:, 2]) >= min_abs_nz
    if not ok.any():
        raise NoPlaneFoundError("ransac_plane: every sampled hypothesis was degenerate or rejected")

    cand = np.flatnonzero(ok)
    best_i, best_count = -1, -1
    # chunked to keep the (hypotheses x points) distance matrix small
    for start in range(0, len(cand), 256):
        idx = cand[start:start + 256]
        dist = np.abs(pts @ normals[idx].T - offsets[idx])
        counts = (dist <= threshold_m).sum(axis=0)
        j = int(np.argmax(counts))
        if counts[j] > best_count:
            best_i, best_count = int(idx[j]), int(counts[j])

    nrm = normals[best_i]
    return PlaneModel(
        normal=(float(nrm[0]), float(nrm[1]), float(nrm[2])),
        offset=float(offsets[best_i]),
        inlier_count=best_count,
        inlier_threshold_m=float(threshold_m),
    )


def flatness_ratio(
    top_cloud: PointCloud,
    threshold_m: float = DEFAULT_THRESHOLD_M,
    iterations: int = DEFAULT_ITERATIONS,
    seed=0,
) -> float:
    """Share of top-view points lying on the largest near-horizontal plane.

    A cloud without any admissible plane (a sphere seen from above can end up
    here) yields 0.0 and a ``NoPlaneWarning`` rather than an error.
    """
    try:
        plane = ransac_plane(top_cloud, threshold_m, iterations, seed, min_abs_nz=TOP_LEVEL_MIN_NZ)
    except NoPlaneFoundError:
        warnings.warn("no near-horizontal plane found; flatness set to 0", NoPlaneWarning, stacklevel=2)
        return 0.0
    return plane.inlier_count / len(top_cloud)


def marker_depth_ratio(rim_top_z_m: float, marker_internal_z_m: float, marker_reference_z_m: float) -> float:
    """Hollowness as internal depth over object height, clamped to [0, 1]."""
    height = rim_top_z_m - marker_reference_z_m
    if not height > 0:
        raise InvalidGeometryError(
            f"rim top ({rim_top_z_m}) must lie above the reference marker ({marker_reference_z_m})"
        )
    depth = rim_top_z_m - marker_internal_z_m
    return min(max(depth / height, 0.0), 1.0)
