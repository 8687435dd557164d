"""Command-line entry point: ``psotrack {generate,track,surface,experiment}``.

Every option can be given in a UTF-8 ``key=value`` file passed with
``--config`` (one pair per line, ``#`` starts a comment) or as a flag
``--key value``; flags win. Exit status is 0 on success, 1 for configuration
errors and 2 for runtime failures. A lost track is reported, not an error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fileio
from .errors import ConfigError, TrackingError
from .geometry import (
    DOF_LAYOUTS,
    POSE_NAMES,
    CameraIntrinsics,
    PlaneParams,
    homography_from_pose,
)
from .harness import (
    ERROR_COLUMNS,
    ExperimentSpec,
    pose_error,
    run_experiment,
    similarity_surface,
    write_surface_csv,
)
from .imaging import TemplateRegion, gain_ramp, generate_sequence, random_motion_schedule, textured_image
from .optimizer import PRESETS, Topology, preset
from .similarity import HistogramConfig, SimilarityMeasure
from .tracker import TRACKER_STALL_ITERATIONS, TrackerConfig, default_bounds, track_sequence

COMMANDS = ("generate", "track", "surface", "experiment")


def _ints(text):
    return [int(v) for v in _strs(text)]


def _floats(text):
    return [float(v) for v in _strs(text)]


def _strs(text):
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _inertia(text):
    parts = _floats(str(text).replace(":", ","))
    if len(parts) == 1:
        return parts[0]
    if len(parts) == 2:
        return tuple(parts)
    raise ValueError("inertia is a number or start:end")


def _region(text):
    vals = _ints(text)
    if len(vals) != 4:
        raise ValueError("region is x0,y0,w,h")
    return tuple(vals)


def _normal(text):
    vals = _floats(text)
    if len(vals) != 4:
        raise ValueError("normal is nx,ny,nz,depth")
    return PlaneParams.from_normal_depth(vals[:3], vals[3])


def _measure(text):
    return SimilarityMeasure.parse(text).kind.value


def _measures(text):
    return [_measure(m) for m in _strs(text)]


def _dof(text):
    d = int(text)
    if d not in DOF_LAYOUTS:
        raise ValueError("dof must be 2, 4 or 6")
    return d


def _bins(text):
    return HistogramConfig(int(text)).bins


def _preset(text):
    if text not in PRESETS:
        raise ValueError(f"unknown preset; choose from {sorted(PRESETS)}")
    return text


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise ValueError("must be >= 1")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise ValueError("must be >= 0")
    return v


def _positive(text):
    v = float(text)
    if not v > 0:
        raise ValueError("must be > 0")
    return v


def _nonneg(text):
    v = float(text)
    if not v >= 0:
        raise ValueError("must be >= 0")
    return v


def _dims(text):
    vals = _strs(text)
    if len(vals) != 2 or any(v not in POSE_NAMES for v in vals):
        raise ValueError(f"dims are two of {','.join(POSE_NAMES)}")
    return tuple(vals)


# key -> (parser, default, help)
SCHEMA = {
    "out": (str, "out", "output directory"),
    "run": (str, "run", "run name used in output file names"),
    "ref": (str, None, "reference image (PGM)"),
    "seq": (str, None, "sequence directory with frame_%04d.pgm [and truth.csv]"),
    "frame": (str, None, "current frame for the surface command (PGM)"),
    "base": (str, None, "base image for generate; omitted -> procedural texture"),
    "width": (_positive_int, 240, "procedural base width"),
    "height": (_positive_int, 200, "procedural base height"),
    "texture_seed": (int, 7, "seed of the procedural texture"),
    "region": (_region, None, "template rectangle x0,y0,w,h"),
    "normal": (_normal, PlaneParams(), "plane guess nx,ny,nz,depth (default 0,0,1,1)"),
    "fx": (_positive, None, "focal length x (pixels)"),
    "fy": (_positive, None, "focal length y (pixels)"),
    "cx": (float, None, "principal point x"),
    "cy": (float, None, "principal point y"),
    "measure": (_measure, "mi", "similarity: mi, ncc or ssd"),
    "measures": (_measures, None, "comma list of measures (experiment, surface)"),
    "bins": (_bins, 32, "histogram bins for MI"),
    "dof": (_dof, 6, "searched degrees of freedom: 2, 4 or 6"),
    "dofs": (lambda t: [_dof(v) for v in _strs(t)], None, "comma list of dofs (experiment)"),
    "preset": (_preset, "common", "PSO preset: common or trelea"),
    "presets": (lambda t: [_preset(v) for v in _strs(t)], None, "comma list of presets"),
    "seed": (int, 0, "PSO seed"),
    "seeds": (_ints, None, "comma list of seeds (experiment)"),
    "swarm_size": (_positive_int, None, "override preset swarm size"),
    "inertia": (_inertia, None, "override inertia: w or start:end"),
    "cognitive": (float, None, "override cognitive weight"),
    "social": (float, None, "override social weight"),
    "topology": (Topology.parse, None, "global, circle, local(k) or wheel"),
    "max_iterations": (_positive_int, None, "PSO iteration cap"),
    "stall_iterations": (_positive_int, TRACKER_STALL_ITERATIONS, "stop after this many non-improving iterations"),
    "fitness_threshold": (float, None, "stop once the best fitness reaches this"),
    "improvement_threshold": (_nonneg, None, "minimum gain that counts as improvement"),
    "trans_bound": (_positive, 0.05, "per-frame translation search half-width"),
    "rot_bound": (_positive, 0.1, "per-frame rotation search half-width (rad)"),
    "warm_start": (_bool, False, "seed one particle with the previous increment"),
    "max_frames": (_positive_int, None, "track at most this many frames"),
    "frames": (_nonneg_int, 100, "number of generated frames after the base"),
    "max_step": (_nonneg, 0.01, "generator per-frame translation limit"),
    "max_rot": (_nonneg, 0.02, "generator per-frame rotation limit (rad)"),
    "gain_drift": (float, 0.0, "gain of frame i is 1 + drift * i / n"),
    "motion_seed": (int, None, "generator motion seed (defaults to seed)"),
    "dims": (_dims, ("tx", "ty"), "two pose components for the surface grid"),
    "grid": (_positive_int, 41, "surface grid resolution per axis"),
}

REQUIRED = {
    "generate": (),
    "track": ("ref", "seq", "region"),
    "surface": ("ref", "frame", "region"),
    "experiment": ("seq", "region"),
}

_PSO_KEYS = {
    "swarm_size": "swarm_size",
    "inertia": "inertia",
    "cognitive": "cognitive_weight",
    "social": "social_weight",
    "topology": "topology",
    "max_iterations": "max_iterations",
    "stall_iterations": "stall_iterations",
    "fitness_threshold": "fitness_threshold",
    "improvement_threshold": "improvement_threshold",
}


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    def pso_overrides(self) -> dict:
        return {
            target: self.values[key]
            for key, target in _PSO_KEYS.items()
            if self.values[key] is not None
        }

    def intrinsics(self, width: int, height: int) -> CameraIntrinsics:
        default = CameraIntrinsics.for_image(width, height)
        fx = self.fx if self.fx is not None else default.fx
        fy = self.fy if self.fy is not None else fx
        cx = self.cx if self.cx is not None else default.cx
        cy = self.cy if self.cy is not None else default.cy
        return CameraIntrinsics(fx, fy, cx, cy)

    def tracker_config(self, width: int, height: int, dof=None, measure=None, preset_name=None, seed=None):
        dof = self.dof if dof is None else dof
        return TrackerConfig(
            dof=dof,
            measure=SimilarityMeasure.parse(measure or self.measure, self.bins),
            pso=preset(
                preset_name or self.preset,
                **{**self.pso_overrides(), "seed": self.seed if seed is None else seed},
            ),
            bounds=default_bounds(dof, self.trans_bound, self.rot_bound),
            intrinsics=self.intrinsics(width, height),
            warm_start=self.warm_start,
        )


def read_config_file(path) -> dict[str, tuple[str, int]]:
    """Raw ``key -> (value, line)`` entries of a key=value file."""
    entries = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected key=value", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in SCHEMA:
            raise ConfigError("unknown key", key=key, line=lineno)
        entries[key] = (value, lineno)
    return entries


def parse_config(command: str, path=None, overrides: dict | None = None) -> RunConfig:
    """Merge defaults, the config file and flag overrides, validating every value."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    raw = read_config_file(path) if path else {}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        key = key.replace("-", "_")
        if key not in SCHEMA:
            raise ConfigError("unknown key", key=key)
        raw[key] = (value, None)

    values = {}
    for key, (parse, default, _) in SCHEMA.items():
        if key not in raw:
            values[key] = default
            continue
        text, lineno = raw[key]
        try:
            values[key] = parse(text)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid value {text!r}: {exc}", key=key, line=lineno) from None

    for key in REQUIRED[command]:
        if values[key] is None:
            raise ConfigError("missing required option", key=key)

    cfg = RunConfig(command, values)
    try:
        preset(cfg.preset, **cfg.pso_overrides())
    except ValueError as exc:
        raise ConfigError(str(exc), key="pso") from None
    if values["max_step"] > values["trans_bound"] or values["max_rot"] > values["rot_bound"]:
        _warn("generator step limits exceed the tracker search bounds")
    return cfg


def _warn(msg):
    print(f"WARN: {msg}", file=sys.stderr)


def _info(msg):
    print(msg, file=sys.stderr)


def cmd_generate(cfg: RunConfig) -> None:
    if cfg.base:
        base = fileio.read_pgm(cfg.base)
    else:
        base = textured_image(cfg.width, cfg.height, seed=cfg.texture_seed)
    if cfg.region is None:
        side = max(8, min(64, base.width // 3, base.height // 3))
        rect = ((base.width - side) // 2, (base.height - side) // 2, side, side)
    else:
        rect = cfg.region
    region = TemplateRegion.in_image(base, rect, cfg.normal)
    k = cfg.intrinsics(base.width, base.height)
    motion_seed = cfg.seed if cfg.motion_seed is None else cfg.motion_seed
    schedule = random_motion_schedule(cfg.frames, cfg.max_step, cfg.max_rot, seed=motion_seed)
    seq = generate_sequence(base, region, k, schedule, gain_ramp(cfg.frames, cfg.gain_drift))
    out = Path(cfg.out)
    fileio.save_sequence(out, seq)
    n = cfg.normal.scaled_normal
    depth = 1.0 / np.linalg.norm(n)
    meta = [
        "# camera and template used to render this sequence",
        f"fx={k.fx!r}", f"fy={k.fy!r}", f"cx={k.cx!r}", f"cy={k.cy!r}",
        "normal=" + ",".join(repr(float(v)) for v in (*(n * depth), depth)),
        "region=" + ",".join(str(v) for v in region.rect),
    ]
    fileio.atomic_write_text(out / "sequence.cfg", "\n".join(meta) + "\n")
    _info(f"wrote {len(seq)} frames and truth.csv to {out}")


def _frame_index(path: Path) -> int:
    return int(path.stem.split("_")[-1])


def cmd_track(cfg: RunConfig) -> None:
    ref_path = Path(cfg.ref)
    reference = fileio.read_pgm(ref_path)
    paths = [
        p for p in fileio.list_frames(cfg.seq)
        if not (ref_path.exists() and os.path.samefile(p, ref_path))
    ]
    if cfg.max_frames is not None:
        paths = paths[: cfg.max_frames]
    if not paths:
        raise TrackingError("no frames to track besides the reference")
    truth_path = Path(cfg.seq) / fileio.TRUTH_FILE
    truth = fileio.read_truth(truth_path)[1] if truth_path.exists() else None
    if truth is None:
        _warn(f"{truth_path} not found; error columns will be nan")

    tcfg = cfg.tracker_config(reference.width, reference.height)
    region = TemplateRegion.in_image(reference, cfg.region, cfg.normal)
    frames = [fileio.read_pgm(p) for p in paths]
    results = track_sequence(reference, region, frames, tcfg)
    k = tcfg.intrinsics

    error_rows, pose_rows = [], []
    for path, r in zip(paths, results):
        idx = _frame_index(path)
        if truth is not None and idx < len(truth):
            e = pose_error(r.cumulative_transform, truth[idx], region, k)
            errs = (e.translation_error, e.rotation_error, e.corner_rmse)
        else:
            errs = (math.nan, math.nan, math.nan)
        error_rows.append((idx, *errs, r.fitness, r.iterations))
        h = homography_from_pose(r.cumulative_transform, region.plane, k)
        pose_rows.append(
            (idx, *h.h.ravel().tolist(), *r.cumulative_transform.to_pose6().tolist(),
             r.fitness, r.iterations, int(r.lost))
        )
    out = Path(cfg.out)
    fileio.write_csv(out / f"errors_{cfg.run}.csv", ERROR_COLUMNS, error_rows)
    pose_header = fileio.TRUTH_COLUMNS[:10] + ["tx", "ty", "tz", "rx", "ry", "rz", "fitness", "iterations", "lost"]
    fileio.write_csv(out / f"poses_{cfg.run}.csv", pose_header, pose_rows)
    if results[-1].lost:
        _warn(f"track lost at frame {_frame_index(paths[len(results) - 1])}")
    _info(f"tracked {len(results)} frames; results in {out}")


def cmd_surface(cfg: RunConfig) -> None:
    reference = fileio.read_pgm(cfg.ref)
    frame = fileio.read_pgm(cfg.frame)
    region = TemplateRegion.in_image(reference, cfg.region, cfg.normal)
    for measure in cfg.measures or [cfg.measure]:
        tcfg = cfg.tracker_config(reference.width, reference.height, measure=measure)
        surface = similarity_surface(reference, frame, region, tcfg, cfg.dims, cfg.grid)
        path = Path(cfg.out) / f"surface_{measure}.csv"
        write_surface_csv(path, surface)
        r, c = surface.argmax()
        _info(f"{measure}: argmax at {cfg.dims[0]}={surface.axis1[r]:.5g}, "
              f"{cfg.dims[1]}={surface.axis2[c]:.5g} -> {path}")


def cmd_experiment(cfg: RunConfig) -> None:
    seq = fileio.load_sequence(cfg.seq)
    first = seq.frames[0]
    overrides = cfg.pso_overrides()
    overrides.pop("seed", None)
    spec = ExperimentSpec(
        sequence=seq,
        region=cfg.region,
        measures=cfg.measures or [cfg.measure],
        dofs=cfg.dofs or [cfg.dof],
        presets=cfg.presets or [cfg.preset],
        seeds=cfg.seeds or [cfg.seed],
        intrinsics=cfg.intrinsics(first.width, first.height),
        plane=cfg.normal,
        bins=cfg.bins,
        translation_bound=cfg.trans_bound,
        rotation_bound=cfg.rot_bound,
        pso_overrides=overrides,
        max_frames=cfg.max_frames,
        out_dir=cfg.out,
    )
    for report in run_experiment(spec):
        lost = " (lost)" if report.any_lost else ""
        _info(f"{report.run}: mean corner rmse {report.mean_corner_rmse:.3f} px, "
              f"nrmse {report.nrmse:.4f}{lost}")


HANDLERS = {
    "generate": cmd_generate,
    "track": cmd_track,
    "surface": cmd_surface,
    "experiment": cmd_experiment,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="psotrack", description="Planar template tracking with particle swarms.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for command in COMMANDS:
        p = sub.add_parser(command)
        p.add_argument("--config", help="key=value configuration file")
        for key, (_, default, help_text) in SCHEMA.items():
            if isinstance(default, (int, float, str)):
                help_text += f" (default {default})"
            # argparse expands % in help strings
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, help=help_text.replace("%", "%%"))
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise ConfigError(f"a command is required: {', '.join(COMMANDS)}")
        flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
        cfg = parse_config(args.command, args.config, flags)
    except ConfigError as exc:
        print(f"ERROR: ConfigError: {exc}", file=sys.stderr)
        return 1
    try:
        HANDLERS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"ERROR: ConfigError: {exc}", file=sys.stderr)
        return 1
    except (TrackingError, OSError, ValueError) as exc:
        print(f"ERROR: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
