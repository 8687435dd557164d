"""Binary PGM images, sequence directories and atomic CSV output."""

from __future__ import annotations

import csv
import io
import os
import re
import tempfile
from pathlib import Path

import numpy as np

from .errors import MissingSequence
from .geometry import Homography, RigidTransform, rotation_exp
from .imaging import GrayImage, SyntheticSequence

FRAME_PATTERN = "frame_{:04d}.pgm"
TRUTH_FILE = "truth.csv"
TRUTH_COLUMNS = (
    ["frame"]
    + [f"h{r}{c}" for r in (1, 2, 3) for c in (1, 2, 3)]
    + ["tx", "ty", "tz", "rx", "ry", "rz", "gain"]
)

_HEADER_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temporary file in the same directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def format_float(x: float) -> str:
    return repr(float(x))


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    atomic_write_text(path, buf.getvalue())


def read_pgm(path) -> GrayImage:
    """Read a binary (P5) PGM with maxval up to 65535; intensities scaled to [0, 1]."""
    raw = Path(path).read_bytes()
    pos = 0
    tokens = []
    for _ in range(4):
        m = _HEADER_TOKEN.match(raw, pos)
        if m is None:
            raise ValueError(f"{path}: truncated PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    width, height, maxval = (int(t) for t in tokens[1:])
    if not 0 < maxval < 65536:
        raise ValueError(f"{path}: bad maxval {maxval}")
    pos += 1  # single whitespace byte before the raster
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    pixels = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
    return GrayImage(pixels.reshape(height, width).astype(np.float64) / maxval)


def encode_pgm(img: GrayImage) -> bytes:
    pixels = np.rint(img.data * 255.0).astype(np.uint8)
    return f"P5\n{img.width} {img.height}\n255\n".encode("ascii") + pixels.tobytes()


def write_pgm(path, img: GrayImage) -> None:
    atomic_write_bytes(path, encode_pgm(img))


def truth_row(index: int, h: Homography, pose: RigidTransform, gain: float) -> list:
    return [index, *h.h.ravel().tolist(), *pose.to_pose6().tolist(), float(gain)]


def save_sequence(directory, seq: SyntheticSequence) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(seq.frames):
        write_pgm(directory / FRAME_PATTERN.format(i), frame)
    rows = [
        truth_row(i, h, t, g)
        for i, (h, t, g) in enumerate(
            zip(seq.truth_homographies, seq.truth_poses, seq.intensity_gains)
        )
    ]
    write_csv(directory / TRUTH_FILE, TRUTH_COLUMNS, rows)


def list_frames(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingSequence(f"sequence directory {directory} does not exist")
    frames = sorted(directory.glob("frame_*.pgm"))
    if not frames:
        raise MissingSequence(f"no frame_*.pgm files in {directory}")
    return frames


def read_truth(path) -> tuple[list[Homography], list[RigidTransform], list[float]]:
    homographies, poses, gains = [], [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            h = np.array([float(row[c]) for c in TRUTH_COLUMNS[1:10]]).reshape(3, 3)
            t = [float(row[c]) for c in ("tx", "ty", "tz")]
            r = rotation_exp([float(row[c]) for c in ("rx", "ry", "rz")])
            homographies.append(Homography(h))
            poses.append(RigidTransform(r, t))
            gains.append(float(row["gain"]))
    return homographies, poses, gains


def load_sequence(directory) -> SyntheticSequence:
    """Frames plus ground truth from a directory written by ``save_sequence``."""
    paths = list_frames(directory)
    truth = Path(directory) / TRUTH_FILE
    if not truth.exists():
        raise MissingSequence(f"{truth} not found")
    homographies, poses, gains = read_truth(truth)
    if len(homographies) != len(paths):
        raise MissingSequence(f"{truth} has {len(homographies)} rows for {len(paths)} frames")
    return SyntheticSequence([read_pgm(p) for p in paths], homographies, poses, gains)
