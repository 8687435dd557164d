"""Rigid motion, plane-induced homographies and the pixel warp.

Poses are parametrized by a translation and an axis-angle rotation. A pose
vector of reduced dimension searches only a subset of the six components:

    dof=6 -> (tx, ty, tz, rx, ry, rz)
    dof=4 -> (tx, ty, tz, rz)
    dof=2 -> (tx, ty)

Components that are not searched are held at zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateHomography, PointAtInfinity

POSE_NAMES = ("tx", "ty", "tz", "rx", "ry", "rz")

DOF_LAYOUTS = {
    6: (0, 1, 2, 3, 4, 5),
    4: (0, 1, 2, 5),
    2: (0, 1),
}

_ORTHO_TOL = 1e-9
_DET_TOL = 1e-12


def layout_names(dof: int) -> tuple[str, ...]:
    """Component names searched for a given ``dof``."""
    return tuple(POSE_NAMES[i] for i in DOF_LAYOUTS[dof])


@dataclass(frozen=True)
class PoseVector:
    dof: int
    values: np.ndarray

    def __post_init__(self):
        if self.dof not in DOF_LAYOUTS:
            raise ValueError(f"dof must be one of 2, 4, 6, got {self.dof}")
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.shape != (self.dof,):
            raise ValueError(f"expected {self.dof} pose values, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise ValueError("pose values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, dof: int) -> "PoseVector":
        return cls(dof, np.zeros(dof))

    def full(self) -> np.ndarray:
        """The 6-vector (tx, ty, tz, rx, ry, rz) with unsearched components at 0."""
        return expand_pose(self.values, self.dof)


def expand_pose(values, dof: int) -> np.ndarray:
    out = np.zeros(6)
    out[list(DOF_LAYOUTS[dof])] = values
    return out


def restrict_pose(full6, dof: int) -> np.ndarray:
    return np.asarray(full6, dtype=float)[list(DOF_LAYOUTS[dof])]


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float).reshape(-1)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @classmethod
    def from_matrix(cls, m) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def to_pose6(self) -> np.ndarray:
        """(tx, ty, tz, rx, ry, rz) with the rotation as an axis-angle vector."""
        return np.concatenate([self.translation, rotation_log(self.rotation)])


@dataclass(frozen=True)
class Homography:
    h: np.ndarray

    def __post_init__(self):
        h = np.array(self.h, dtype=float)
        if h.shape != (3, 3):
            raise ValueError("homography must be 3x3")
        if not np.all(np.isfinite(h)):
            raise DegenerateHomography("homography has non-finite entries")
        if abs(np.linalg.det(h)) < _DET_TOL:
            raise DegenerateHomography(f"singular homography (det={np.linalg.det(h):.3g})")
        h = normalize_homography(h)
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    def __matmul__(self, other: "Homography") -> "Homography":
        return Homography(self.h @ other.h)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.h))


def normalize_homography(h) -> np.ndarray:
    """Fix the projective scale: h33 = 1, or the largest entry = 1 if h33 ~ 0."""
    h = np.asarray(h, dtype=float)
    if abs(h[2, 2]) > 1e-12:
        return h / h[2, 2]
    return h / h.flat[np.argmax(np.abs(h))]


@dataclass(frozen=True)
class PlaneParams:
    """Unit plane normal divided by plane depth, in the reference camera frame."""

    scaled_normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        n = np.array(self.scaled_normal, dtype=float).reshape(-1)
        if n.shape != (3,) or not np.all(np.isfinite(n)) or np.linalg.norm(n) <= 0:
            raise ValueError("scaled normal must be a finite, nonzero 3-vector")
        n.setflags(write=False)
        object.__setattr__(self, "scaled_normal", n)

    @classmethod
    def from_normal_depth(cls, normal, depth: float) -> "PlaneParams":
        normal = np.asarray(normal, dtype=float)
        if depth <= 0:
            raise ValueError("plane depth must be positive")
        return cls(normal / np.linalg.norm(normal) / depth)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")

    @classmethod
    def for_image(cls, width: int, height: int, focal: float | None = None) -> "CameraIntrinsics":
        f = float(focal if focal is not None else max(width, height))
        return cls(f, f, (width - 1) / 2.0, (height - 1) / 2.0)

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def inverse_matrix(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )


def skew(v) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_exp(w) -> np.ndarray:
    """Rodrigues' formula for exp(skew(w))."""
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    k = skew(w)
    if theta < 1e-8:
        # second-order series; the cubic term is below double precision here
        return np.eye(3) + k + 0.5 * (k @ k)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * k + b * (k @ k)


def rotation_angle(r) -> float:
    """Angle of a rotation matrix in [0, pi]."""
    r = np.asarray(r, dtype=float)
    s = 0.5 * np.linalg.norm([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    c = 0.5 * (np.trace(r) - 1.0)
    return float(np.arctan2(s, c))


def rotation_log(r) -> np.ndarray:
    """Axis-angle vector of a rotation matrix (inverse of ``rotation_exp``)."""
    r = np.asarray(r, dtype=float)
    theta = rotation_angle(r)
    vee = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if theta < 1e-8:
        return 0.5 * vee
    if np.pi - theta > 1e-6:
        return theta / (2.0 * np.sin(theta)) * vee
    # near pi the antisymmetric part vanishes; read the axis off R + I
    b = 0.5 * (r + np.eye(3))
    col = int(np.argmax(np.diag(b)))
    axis = b[:, col] / np.sqrt(b[col, col])
    if np.dot(vee, axis) < 0:
        axis = -axis
    return theta * axis / np.linalg.norm(axis)


def nearest_rotation(m) -> np.ndarray:
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def orthonormality_error(r) -> float:
    r = np.asarray(r, dtype=float)
    return float(np.max(np.abs(r.T @ r - np.eye(3))))


def pose_to_transform(x: PoseVector) -> RigidTransform:
    full = x.full()
    return RigidTransform(rotation_exp(full[3:]), full[:3])


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """a after b, i.e. the homogeneous product a.matrix() @ b.matrix()."""
    r = a.rotation @ b.rotation
    if orthonormality_error(r) > _ORTHO_TOL:
        r = nearest_rotation(r)
    t = a.rotation @ b.translation + a.translation
    return RigidTransform(r, t)


def homography_matrix(rotation, translation, scaled_normal, k: CameraIntrinsics) -> np.ndarray:
    """Unnormalized K (R + t n^T) K^-1."""
    euclid = np.asarray(rotation) + np.outer(translation, scaled_normal)
    return k.matrix() @ euclid @ k.inverse_matrix()


def homography_from_pose(t: RigidTransform, n: PlaneParams, k: CameraIntrinsics) -> Homography:
    return Homography(homography_matrix(t.rotation, t.translation, n.scaled_normal, k))


def warp_point(h: Homography, p: Sequence[float]) -> tuple[float, float]:
    m = h.h if isinstance(h, Homography) else np.asarray(h, dtype=float)
    u, v = float(p[0]), float(p[1])
    d = m[2, 0] * u + m[2, 1] * v + m[2, 2]
    if abs(d) < 1e-12:
        raise PointAtInfinity(f"point ({u}, {v}) maps to infinity")
    return (
        (m[0, 0] * u + m[0, 1] * v + m[0, 2]) / d,
        (m[1, 0] * u + m[1, 1] * v + m[1, 2]) / d,
    )


def warp_points(h, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized warp of an (n, 2) array.

    Returns (warped, ok) where ``ok`` is False for points sent to infinity;
    their coordinates are set to NaN.
    """
    m = h.h if isinstance(h, Homography) else np.asarray(h, dtype=float)
    pts = np.asarray(pts, dtype=float)
    u, v = pts[..., 0], pts[..., 1]
    d = m[2, 0] * u + m[2, 1] * v + m[2, 2]
    ok = np.abs(d) >= 1e-12
    d = np.where(ok, d, np.nan)
    out = np.stack(
        [(m[0, 0] * u + m[0, 1] * v + m[0, 2]) / d, (m[1, 0] * u + m[1, 1] * v + m[1, 2]) / d],
        axis=-1,
    )
    return out, ok
