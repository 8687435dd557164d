"""Grayscale images, bilinear sampling, template patches and synthetic sequences."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from . import _kernels
from .errors import InvalidRegion, ScheduleMismatch
from .geometry import (
    DOF_LAYOUTS,
    CameraIntrinsics,
    Homography,
    PlaneParams,
    PoseVector,
    RigidTransform,
    compose,
    homography_from_pose,
    pose_to_transform,
    restrict_pose,
    warp_points,
)

MIN_TEMPLATE_PIXELS = 64


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Row-major intensities in [0, 1]; ``data[y, x]``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 2 or min(data.shape) < 2:
            raise ValueError("image must be 2-D and at least 2x2")
        if not np.all(np.isfinite(data)) or data.min() < 0.0 or data.max() > 1.0:
            raise ValueError("intensities must lie in [0, 1]")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @classmethod
    def blank(cls, width: int, height: int, value: float = 0.0) -> "GrayImage":
        return cls(np.full((height, width), value))


def sample_bilinear(img: GrayImage, p: Sequence[float]) -> tuple[float, bool]:
    values, valid = sample_many(img, np.array([p[0]]), np.array([p[1]]))
    return float(values[0]), bool(valid[0])


def sample_many(img: GrayImage, xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear sampling at arbitrary-shape coordinate arrays.

    Points outside [0, w-1] x [0, h-1] (or NaN) give value 0 and valid False.
    """
    w, h = img.width, img.height
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    valid = (xs >= 0.0) & (xs <= w - 1) & (ys >= 0.0) & (ys <= h - 1)
    x = np.where(valid, xs, 0.0)
    y = np.where(valid, ys, 0.0)
    x0 = np.minimum(np.floor(x), w - 2).astype(np.intp)
    y0 = np.minimum(np.floor(y), h - 2).astype(np.intp)
    fx = x - x0
    fy = y - y0
    flat = img.data.ravel()
    i00 = y0 * w + x0
    top = flat[i00] + fx * (flat[i00 + 1] - flat[i00])
    bot = flat[i00 + w] + fx * (flat[i00 + w + 1] - flat[i00 + w])
    out = top + fy * (bot - top)
    return np.where(valid, out, 0.0), valid


@dataclass(frozen=True, eq=False)
class TemplateRegion:
    """Axis-aligned patch (x0, y0, w, h) of the reference image that is tracked."""

    rect: tuple[int, int, int, int]
    image_size: tuple[int, int]
    plane: PlaneParams = field(default_factory=PlaneParams)
    stride: int = 1
    sample_grid: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x0, y0, w, h = (int(v) for v in self.rect)
        width, height = self.image_size
        if w * h < MIN_TEMPLATE_PIXELS:
            raise InvalidRegion(f"template {w}x{h} has fewer than {MIN_TEMPLATE_PIXELS} pixels")
        if x0 < 0 or y0 < 0 or x0 + w > width or y0 + h > height:
            raise InvalidRegion(f"region {(x0, y0, w, h)} exceeds image {width}x{height}")
        if self.stride < 1:
            raise InvalidRegion("stride must be >= 1")
        gx, gy = np.meshgrid(
            np.arange(x0, x0 + w, self.stride, dtype=float),
            np.arange(y0, y0 + h, self.stride, dtype=float),
        )
        grid = np.column_stack([gx.ravel(), gy.ravel()])
        grid.setflags(write=False)
        object.__setattr__(self, "rect", (x0, y0, w, h))
        object.__setattr__(self, "sample_grid", grid)

    @classmethod
    def in_image(cls, img: GrayImage, rect, plane: PlaneParams | None = None, stride: int = 1):
        return cls(tuple(rect), (img.width, img.height), plane or PlaneParams(), stride)

    def corners(self) -> np.ndarray:
        """The four outermost pixel centres, clockwise from top-left."""
        x0, y0, w, h = self.rect
        x1, y1 = x0 + w - 1, y0 + h - 1
        return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)

    def diagonal(self) -> float:
        _, _, w, h = self.rect
        return float(np.hypot(w, h))

    def template_values(self, img: GrayImage) -> np.ndarray:
        values, _ = sample_many(img, self.sample_grid[:, 0], self.sample_grid[:, 1])
        return values


@dataclass(frozen=True, eq=False)
class WarpedPatch:
    values: np.ndarray
    valid_mask: np.ndarray

    @property
    def valid_fraction(self) -> float:
        return float(np.mean(self.valid_mask)) if self.valid_mask.size else 0.0


def extract_patch(region: TemplateRegion, h: Homography, img: GrayImage) -> WarpedPatch:
    values, valid = extract_patches(region, h.h[None], img)
    return WarpedPatch(values[0], valid[0])


def extract_patches(region: TemplateRegion, hs: np.ndarray, img: GrayImage, compiled: bool = True):
    """Sample ``img`` at the template grid warped by each of the (m, 3, 3) homographies.

    Returns (values, valid), both shaped (m, n_samples).
    """
    hs = np.ascontiguousarray(hs, dtype=float)
    if compiled and _kernels.AVAILABLE:
        return _kernels.warp_sample(hs, region.sample_grid, img.data)
    grid = region.sample_grid
    u, v = grid[:, 0], grid[:, 1]
    num_x = hs[:, 0, 0, None] * u + hs[:, 0, 1, None] * v + hs[:, 0, 2, None]
    num_y = hs[:, 1, 0, None] * u + hs[:, 1, 1, None] * v + hs[:, 1, 2, None]
    den = hs[:, 2, 0, None] * u + hs[:, 2, 1, None] * v + hs[:, 2, 2, None]
    finite = np.abs(den) >= 1e-12
    den = np.where(finite, den, np.nan)
    with np.errstate(invalid="ignore"):
        values, valid = sample_many(img, num_x / den, num_y / den)
    return values, valid & finite


def warp_image(img: GrayImage, h: Homography, fill: float = 0.0) -> np.ndarray:
    """Backward-map every output pixel q to img(h^-1 q)."""
    hinv = np.linalg.inv(h.h)
    gx, gy = np.meshgrid(np.arange(img.width, dtype=float), np.arange(img.height, dtype=float))
    pts, ok = warp_points(hinv, np.stack([gx, gy], axis=-1))
    with np.errstate(invalid="ignore"):
        values, valid = sample_many(img, pts[..., 0], pts[..., 1])
    return np.where(valid & ok, values, fill)


@dataclass(frozen=True, eq=False)
class SyntheticSequence:
    frames: list
    truth_homographies: list
    truth_poses: list
    intensity_gains: list

    def __post_init__(self):
        n = len(self.frames)
        if not (len(self.truth_homographies) == len(self.truth_poses) == len(self.intensity_gains) == n):
            raise ScheduleMismatch("sequence arrays differ in length")

    def __len__(self):
        return len(self.frames)


def generate_sequence(
    base: GrayImage,
    region: TemplateRegion,
    k: CameraIntrinsics,
    motion_schedule: Sequence[PoseVector],
    gain_schedule: Sequence[float],
) -> SyntheticSequence:
    """Render ``base`` under a cumulative motion and gain schedule.

    Each frame is warped directly from ``base`` by its cumulative homography,
    so interpolation blur never compounds along the sequence.
    """
    if len(motion_schedule) != len(gain_schedule):
        raise ScheduleMismatch(
            f"{len(motion_schedule)} motions but {len(gain_schedule)} gains"
        )
    if region.image_size != (base.width, base.height):
        raise InvalidRegion("region was defined on an image of a different size")

    frames = [base]
    homographies = [Homography.identity()]
    poses = [RigidTransform.identity()]
    gains = [1.0]
    cumulative = RigidTransform.identity()
    for step, gain in zip(motion_schedule, gain_schedule):
        cumulative = compose(pose_to_transform(step), cumulative)
        h = homography_from_pose(cumulative, region.plane, k)
        frame = np.clip(warp_image(base, h) * float(gain), 0.0, 1.0)
        frames.append(GrayImage(frame))
        homographies.append(h)
        poses.append(cumulative)
        gains.append(float(gain))
    return SyntheticSequence(frames, homographies, poses, gains)


def textured_image(width: int, height: int, seed: int = 0, scales=(1.2, 3.0, 8.0)) -> GrayImage:
    """Band-limited random texture stretched to [0.05, 0.95]."""
    rng = np.random.default_rng(seed)
    acc = np.zeros((height, width))
    for sigma in scales:
        layer = gaussian_filter(rng.standard_normal((height, width)), sigma, mode="reflect")
        acc += layer / layer.std()
    lo, hi = acc.min(), acc.max()
    return GrayImage(0.05 + 0.9 * (acc - lo) / (hi - lo))


def random_motion_schedule(
    n: int,
    max_translation: float,
    max_rotation: float,
    seed: int = 0,
    dof: int = 6,
    restoring: float = 0.3,
) -> list[PoseVector]:
    """Random per-frame motions within +/- the given step limits.

    Each step is drawn uniformly and then pulled back toward the reference
    pose by ``restoring`` times the accumulated pose, so the trajectory
    wanders without leaving the field of view. Steps stay within the limits.
    """
    rng = np.random.default_rng(seed)
    limits = np.array([max_translation] * 3 + [max_rotation] * 3)
    mask = np.zeros(6, dtype=bool)
    mask[list(DOF_LAYOUTS[dof])] = True
    cumulative = RigidTransform.identity()
    steps = []
    for _ in range(n):
        drift = cumulative.to_pose6()
        step = rng.uniform(-limits, limits) - restoring * drift
        step = np.where(mask, np.clip(step, -limits, limits), 0.0)
        pose = PoseVector(dof, restrict_pose(step, dof))
        cumulative = compose(pose_to_transform(pose), cumulative)
        steps.append(pose)
    return steps


def gain_ramp(n: int, drift: float) -> list[float]:
    """Gain 1 + drift * i / n for frames i = 1..n."""
    if n == 0:
        return []
    return [1.0 + drift * i / n for i in range(1, n + 1)]
