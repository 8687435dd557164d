"""Error metrics against ground truth, similarity surfaces and experiment grids."""

from __future__ import annotations

import hashlib
import math
import statistics
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import fileio
from .geometry import (
    DOF_LAYOUTS,
    POSE_NAMES,
    CameraIntrinsics,
    PlaneParams,
    RigidTransform,
    homography_from_pose,
    rotation_angle,
    warp_points,
)
from .imaging import GrayImage, SyntheticSequence, TemplateRegion
from .optimizer import preset
from .similarity import SimilarityMeasure
from .tracker import (
    TRACKER_STALL_ITERATIONS,
    FrameResult,
    TrackerConfig,
    default_bounds,
    frame_fitness_batch,
    init_tracker,
    track_sequence,
)

ERROR_COLUMNS = ["frame", "trans_err", "rot_err", "corner_rmse", "fitness", "iterations"]
SUMMARY_COLUMNS = [
    "run", "dof", "measure", "preset", "seed", "mean_corner_rmse", "nrmse", "frames_tracked",
]
SURFACE_COLUMNS = ["row", "col", "dim1", "dim2", "fitness"]


@dataclass(frozen=True)
class PoseError:
    translation_error: float
    rotation_error: float
    corner_rmse: float


def corner_rmse(h_est, h_true, region: TemplateRegion) -> float:
    """RMS distance between the template corners mapped by two homographies."""
    corners = region.corners()
    a, _ = warp_points(h_est, corners)
    b, _ = warp_points(h_true, corners)
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1))))


def pose_error(
    est: RigidTransform,
    truth: RigidTransform,
    region: TemplateRegion,
    k: CameraIntrinsics,
    plane: PlaneParams | None = None,
) -> PoseError:
    plane = plane or region.plane
    return PoseError(
        translation_error=float(np.linalg.norm(est.translation - truth.translation)),
        rotation_error=rotation_angle(est.rotation @ truth.rotation.T),
        corner_rmse=corner_rmse(
            homography_from_pose(est, plane, k), homography_from_pose(truth, plane, k), region
        ),
    )


def nrmse(corner_errors: Sequence[float], region: TemplateRegion) -> float:
    """Root mean square of per-frame corner errors over the template diagonal."""
    if len(corner_errors) == 0:
        return math.nan
    return math.sqrt(sum(e * e for e in corner_errors) / len(corner_errors)) / region.diagonal()


@dataclass
class ExperimentReport:
    run: str
    dof: int
    measure: str
    preset: str
    seed: int
    errors: list[PoseError]
    fitness: list[float]
    iterations: list[int]
    lost: list[bool]
    frames_checksum: str = ""
    mean_corner_rmse: float = field(init=False)
    median_corner_rmse: float = field(init=False)
    max_corner_rmse: float = field(init=False)
    mean_translation_error: float = field(init=False)
    mean_rotation_error: float = field(init=False)
    mean_iterations: float = field(init=False)
    nrmse: float = field(init=False)
    region_diagonal: float = 1.0

    def __post_init__(self):
        self.recompute()

    def recompute(self) -> None:
        c = [e.corner_rmse for e in self.errors]
        self.mean_corner_rmse = statistics.fmean(c) if c else math.nan
        self.median_corner_rmse = statistics.median(c) if c else math.nan
        self.max_corner_rmse = max(c) if c else math.nan
        self.mean_translation_error = (
            statistics.fmean(e.translation_error for e in self.errors) if c else math.nan
        )
        self.mean_rotation_error = (
            statistics.fmean(e.rotation_error for e in self.errors) if c else math.nan
        )
        self.mean_iterations = statistics.fmean(self.iterations) if self.iterations else math.nan
        self.nrmse = (
            math.sqrt(sum(e * e for e in c) / len(c)) / self.region_diagonal if c else math.nan
        )

    @property
    def frames_tracked(self) -> int:
        return sum(1 for lost in self.lost if not lost)

    @property
    def any_lost(self) -> bool:
        return any(self.lost)

    def error_rows(self):
        return [
            (i + 1, e.translation_error, e.rotation_error, e.corner_rmse, f, it)
            for i, (e, f, it) in enumerate(zip(self.errors, self.fitness, self.iterations))
        ]

    def summary_row(self):
        return (
            self.run, self.dof, self.measure, self.preset, self.seed,
            self.mean_corner_rmse, self.nrmse, self.frames_tracked,
        )


def frames_checksum(frames: Sequence[GrayImage]) -> str:
    digest = hashlib.sha256()
    for frame in frames:
        digest.update(np.ascontiguousarray(frame.data).tobytes())
    return digest.hexdigest()


def report_from_results(
    run: str,
    results: list[FrameResult],
    seq: SyntheticSequence,
    region: TemplateRegion,
    cfg: TrackerConfig,
    k: CameraIntrinsics,
    preset_name: str = "",
    checksum: str = "",
) -> ExperimentReport:
    errors = [
        pose_error(r.cumulative_transform, seq.truth_poses[r.frame_index], region, k)
        for r in results
    ]
    return ExperimentReport(
        run=run,
        dof=cfg.dof,
        measure=cfg.measure.kind.value,
        preset=preset_name,
        seed=cfg.pso.seed,
        errors=errors,
        fitness=[r.fitness for r in results],
        iterations=[r.iterations for r in results],
        lost=[r.lost for r in results],
        frames_checksum=checksum,
        region_diagonal=region.diagonal(),
    )


def track_synthetic(
    seq: SyntheticSequence,
    region: TemplateRegion,
    cfg: TrackerConfig,
    run: str = "run",
    preset_name: str = "",
    max_frames: int | None = None,
) -> ExperimentReport:
    """Track ``seq.frames[1:]`` against the template in ``seq.frames[0]``."""
    frames = list(seq.frames[1:])
    if max_frames is not None:
        frames = frames[:max_frames]
    k = cfg.camera(seq.frames[0])
    results = track_sequence(seq.frames[0], region, frames, cfg)
    return report_from_results(
        run, results, seq, region, cfg, k, preset_name, frames_checksum(frames)
    )


def write_errors_csv(path, report: ExperimentReport) -> None:
    fileio.write_csv(path, ERROR_COLUMNS, report.error_rows())


def write_summary_csv(path, reports: Sequence[ExperimentReport]) -> None:
    fileio.write_csv(path, SUMMARY_COLUMNS, [r.summary_row() for r in reports])


@dataclass
class Surface:
    dims: tuple[str, str]
    axis1: np.ndarray
    axis2: np.ndarray
    values: np.ndarray

    def argmax(self) -> tuple[int, int]:
        """(row, col) of the best cell; row indexes ``axis1``."""
        i = int(np.argmax(self.values))
        return divmod(i, self.values.shape[1])

    def rows(self):
        for r, a in enumerate(self.axis1):
            for c, b in enumerate(self.axis2):
                yield r, c, float(a), float(b), float(self.values[r, c])


def similarity_surface(
    reference: GrayImage,
    frame: GrayImage,
    region: TemplateRegion,
    cfg: TrackerConfig,
    dims: tuple[str, str] = ("tx", "ty"),
    grid: int = 41,
    center=None,
    half_width=None,
    chunk: int = 256,
) -> Surface:
    """Fitness on a grid over two pose components, the others held at ``center``.

    The grid spans ``center +/- half_width`` along each chosen component;
    by default ``half_width`` is the tracker's search bound for it.
    """
    names = [POSE_NAMES[i] for i in DOF_LAYOUTS[cfg.dof]]
    try:
        cols = [names.index(d) for d in dims]
    except ValueError:
        raise ValueError(f"dims {dims} not searched at dof={cfg.dof} ({names})") from None
    center = np.zeros(cfg.dof) if center is None else np.asarray(center, dtype=float)
    if half_width is None:
        half = [cfg.bounds.upper[c] - center[c] for c in cols]
        half = [min(h, center[c] - cfg.bounds.lower[c]) for h, c in zip(half, cols)]
    else:
        half = list(np.broadcast_to(np.asarray(half_width, dtype=float), (2,)))
    axis1 = center[cols[0]] + np.linspace(-half[0], half[0], grid)
    axis2 = center[cols[1]] + np.linspace(-half[1], half[1], grid)

    poses = np.tile(center, (grid * grid, 1))
    a, b = np.meshgrid(axis1, axis2, indexing="ij")
    poses[:, cols[0]] = a.ravel()
    poses[:, cols[1]] = b.ravel()

    state = init_tracker(reference, region, cfg)
    values = np.concatenate(
        [frame_fitness_batch(state, frame, cfg, poses[i : i + chunk]) for i in range(0, len(poses), chunk)]
    )
    return Surface(tuple(dims), axis1, axis2, values.reshape(grid, grid))


def write_surface_csv(path, surface: Surface) -> None:
    fileio.write_csv(path, SURFACE_COLUMNS, surface.rows())


@dataclass
class ExperimentSpec:
    """A cross product of tracking runs over one sequence.

    ``sequence`` is either an in-memory ``SyntheticSequence`` or a directory
    holding ``frame_%04d.pgm`` files and ``truth.csv``.
    """

    sequence: SyntheticSequence | str | Path
    region: tuple[int, int, int, int]
    measures: Sequence[str] = ("mi",)
    dofs: Sequence[int] = (6,)
    presets: Sequence[str] = ("common",)
    seeds: Sequence[int] = (0,)
    intrinsics: CameraIntrinsics | None = None
    plane: PlaneParams = field(default_factory=PlaneParams)
    bins: int = 32
    translation_bound: float = 0.05
    rotation_bound: float = 0.1
    pso_overrides: dict = field(default_factory=dict)
    max_frames: int | None = None
    out_dir: str | Path | None = None

    def cells(self):
        for measure in self.measures:
            for dof in self.dofs:
                for preset_name in self.presets:
                    for seed in self.seeds:
                        yield measure, dof, preset_name, seed


def run_name(measure: str, dof: int, preset_name: str, seed: int) -> str:
    return f"{measure}_dof{dof}_{preset_name}_s{seed}"


def cell_config(spec: ExperimentSpec, measure: str, dof: int, preset_name: str, seed: int) -> TrackerConfig:
    overrides = {"stall_iterations": TRACKER_STALL_ITERATIONS, **spec.pso_overrides, "seed": seed}
    return TrackerConfig(
        dof=dof,
        measure=SimilarityMeasure.parse(measure, spec.bins),
        pso=preset(preset_name, **overrides),
        bounds=default_bounds(dof, spec.translation_bound, spec.rotation_bound),
        intrinsics=spec.intrinsics,
    )


def run_experiment(spec: ExperimentSpec, executor=None) -> list[ExperimentReport]:
    """Run every (measure, dof, preset, seed) cell and write CSVs if ``out_dir`` is set.

    Cells share nothing but the read-only sequence, so an ``executor`` may run
    them concurrently; reports come back in cell order either way.
    """
    seq = spec.sequence
    if not isinstance(seq, SyntheticSequence):
        seq = fileio.load_sequence(seq)
    region = TemplateRegion.in_image(seq.frames[0], spec.region, spec.plane)
    cells = list(spec.cells())

    def run_cell(cell):
        measure, dof, preset_name, seed = cell
        cfg = cell_config(spec, measure, dof, preset_name, seed)
        return track_synthetic(
            seq, region, cfg, run_name(*cell), preset_name, spec.max_frames
        )

    mapper = executor.map if executor is not None else map
    reports = list(mapper(run_cell, cells))

    if spec.out_dir is not None:
        out = Path(spec.out_dir)
        for report in reports:
            write_errors_csv(out / f"errors_{report.run}.csv", report)
        write_summary_csv(out / "summary.csv", reports)
    return reports


def with_pso(cfg: TrackerConfig, **changes) -> TrackerConfig:
    return replace(cfg, pso=replace(cfg.pso, **changes))
