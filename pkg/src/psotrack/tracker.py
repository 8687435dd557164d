"""Frame-to-template tracking of a planar patch with a particle swarm.

For each new frame the swarm searches an incremental pose x; the candidate
homography is built from T(x) composed on the left of the running estimate,
the template grid is warped into the frame and compared with the cached
template intensities. The best increment is folded into the estimate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateHomography, DegenerateTemplate
from .geometry import (
    DOF_LAYOUTS,
    CameraIntrinsics,
    PoseVector,
    RigidTransform,
    compose,
    homography_from_pose,
    pose_to_transform,
)
from .imaging import GrayImage, TemplateRegion, extract_patch, extract_patches
from .optimizer import PsoConfig, SearchBounds, TerminationReason, optimize, preset
from .similarity import (
    INVALID_FITNESS,
    Measure,
    SimilarityMeasure,
    entropy,
    evaluate,
    evaluate_batch,
    quantize,
)

DEFAULT_TRANSLATION_BOUND = 0.05
DEFAULT_ROTATION_BOUND = 0.1

# the swarm often spends 20-30 iterations without improving while still exploring
TRACKER_STALL_ITERATIONS = 40

MI_LOSS_FRACTION = 0.15
SSD_LOSS_RMS = 0.05
NCC_LOSS_LEVEL = 0.3


def default_bounds(
    dof: int,
    translation: float = DEFAULT_TRANSLATION_BOUND,
    rotation: float = DEFAULT_ROTATION_BOUND,
) -> SearchBounds:
    half = np.array([translation] * 3 + [rotation] * 3)[list(DOF_LAYOUTS[dof])]
    return SearchBounds.symmetric(half)


@dataclass(frozen=True)
class TrackerConfig:
    dof: int = 6
    measure: SimilarityMeasure = field(default_factory=SimilarityMeasure)
    pso: PsoConfig = field(
        default_factory=lambda: preset("common", stall_iterations=TRACKER_STALL_ITERATIONS)
    )
    bounds: SearchBounds | None = None
    intrinsics: CameraIntrinsics | None = None
    warm_start: bool = False

    def __post_init__(self):
        if self.dof not in DOF_LAYOUTS:
            raise ValueError(f"dof must be one of 2, 4, 6, got {self.dof}")
        if self.bounds is None:
            object.__setattr__(self, "bounds", default_bounds(self.dof))
        if self.bounds.dim != self.dof:
            raise ValueError(f"bounds have {self.bounds.dim} dimensions, dof is {self.dof}")

    def camera(self, img: GrayImage) -> CameraIntrinsics:
        return self.intrinsics or CameraIntrinsics.for_image(img.width, img.height)


@dataclass(frozen=True, eq=False)
class TrackState:
    region: TemplateRegion
    intrinsics: CameraIntrinsics
    template_values: np.ndarray
    template_bins: np.ndarray
    loss_threshold: float
    cumulative_transform: RigidTransform = field(default_factory=RigidTransform.identity)
    frame_index: int = 0
    last_fitness: float = np.inf
    lost: bool = False
    last_increment: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class FrameResult:
    frame_index: int
    incremental_pose: PoseVector
    cumulative_transform: RigidTransform
    fitness: float
    iterations: int
    wall_time: float
    lost: bool = False
    termination: TerminationReason = TerminationReason.MAX_ITERATIONS


def loss_threshold(measure: SimilarityMeasure, template_values: np.ndarray) -> float:
    if measure.kind is Measure.MI:
        return MI_LOSS_FRACTION * entropy(template_values, cfg=measure.hist)
    if measure.kind is Measure.SSD:
        return -template_values.size * SSD_LOSS_RMS**2
    return NCC_LOSS_LEVEL


def init_tracker(reference: GrayImage, region: TemplateRegion, cfg: TrackerConfig) -> TrackState:
    if region.image_size != (reference.width, reference.height):
        raise ValueError("region does not belong to this reference image")
    values = region.template_values(reference)
    values.setflags(write=False)
    if np.ptp(values) == 0.0:
        raise DegenerateTemplate("template has constant intensity")
    return TrackState(
        region=region,
        intrinsics=cfg.camera(reference),
        template_values=values,
        template_bins=quantize(values, cfg.measure.hist.bins),
        loss_threshold=loss_threshold(cfg.measure, values),
    )


def _rodrigues_batch(w: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(w, axis=1)
    k = np.zeros((len(w), 3, 3))
    k[:, 0, 1], k[:, 0, 2] = -w[:, 2], w[:, 1]
    k[:, 1, 0], k[:, 1, 2] = w[:, 2], -w[:, 0]
    k[:, 2, 0], k[:, 2, 1] = -w[:, 1], w[:, 0]
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0, np.sin(safe) / safe)
    b = np.where(small, 0.5, (1.0 - np.cos(safe)) / (safe * safe))
    return np.eye(3) + a[:, None, None] * k + b[:, None, None] * (k @ k)


def candidate_homographies(state: TrackState, increments: np.ndarray, dof: int) -> np.ndarray:
    """Unnormalized homographies for an (m, dof) batch of incremental poses."""
    full = np.zeros((len(increments), 6))
    full[:, list(DOF_LAYOUTS[dof])] = increments
    r_inc = _rodrigues_batch(full[:, 3:])
    base = state.cumulative_transform
    rot = r_inc @ base.rotation
    trans = r_inc @ base.translation + full[:, :3]
    n = state.region.plane.scaled_normal
    k = state.intrinsics
    euclid = rot + trans[:, :, None] * n[None, None, :]
    return k.matrix() @ euclid @ k.inverse_matrix()


def frame_fitness_batch(state: TrackState, frame: GrayImage, cfg: TrackerConfig, increments) -> np.ndarray:
    increments = np.atleast_2d(np.asarray(increments, dtype=float))
    hs = candidate_homographies(state, increments, cfg.dof)
    fits = np.full(len(hs), INVALID_FITNESS)
    good = np.abs(np.linalg.det(hs)) >= 1e-12
    if good.any():
        values, valid = extract_patches(state.region, hs[good], frame)
        fits[good] = evaluate_batch(
            cfg.measure, values, valid, state.template_values, state.template_bins
        )
    return fits


def pose_homography(state: TrackState, increment: PoseVector):
    t = compose(pose_to_transform(increment), state.cumulative_transform)
    return t, homography_from_pose(t, state.region.plane, state.intrinsics)


def frame_fitness(state: TrackState, frame: GrayImage, cfg: TrackerConfig, increment: PoseVector) -> float:
    """Reference (unbatched) fitness of one incremental pose."""
    try:
        _, h = pose_homography(state, increment)
    except DegenerateHomography:
        return INVALID_FITNESS
    return evaluate(cfg.measure, extract_patch(state.region, h, frame), state.template_values)


def track_frame(state: TrackState, frame: GrayImage, cfg: TrackerConfig) -> tuple[TrackState, FrameResult]:
    if state.lost:
        raise ValueError("cannot track from a lost state")
    start = time.perf_counter()
    index = state.frame_index + 1
    pso = replace(cfg.pso, seed=cfg.pso.seed + index)
    warm = state.last_increment if cfg.warm_start and state.last_increment is not None else None

    result = optimize(
        lambda xs: frame_fitness_batch(state, frame, cfg, xs),
        pso,
        cfg.bounds,
        batch=True,
        initial_positions=warm,
    )
    increment = PoseVector(cfg.dof, result.best_position)
    cumulative, h = pose_homography(state, increment)
    fitness = evaluate(cfg.measure, extract_patch(state.region, h, frame), state.template_values)
    lost = not fitness >= state.loss_threshold

    new_state = replace(
        state,
        cumulative_transform=cumulative,
        frame_index=index,
        last_fitness=fitness,
        lost=lost,
        last_increment=np.array(result.best_position),
    )
    record = FrameResult(
        frame_index=index,
        incremental_pose=increment,
        cumulative_transform=cumulative,
        fitness=fitness,
        iterations=result.iterations_used,
        wall_time=time.perf_counter() - start,
        lost=lost,
        termination=result.termination_reason,
    )
    return new_state, record


def track_sequence(reference: GrayImage, region: TemplateRegion, frames, cfg: TrackerConfig) -> list[FrameResult]:
    """Track every frame in order, stopping after the first lost one."""
    if len(frames) == 0:
        raise ValueError("no frames to track")
    state = init_tracker(reference, region, cfg)
    results = []
    for frame in frames:
        state, record = track_frame(state, frame, cfg)
        results.append(record)
        if state.lost:
            break
    return results
