"""Similarity measures between a warped patch and the template.

All measures are oriented so that larger is better: SSD is returned negated.
Entropies are in bits over equal-width histograms on [0, 1].
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import EmptyOverlap, ZeroVariance

INVALID_FITNESS = -math.inf
MIN_VALID_FRACTION = 0.5


@dataclass(frozen=True)
class HistogramConfig:
    bins: int = 32

    def __post_init__(self):
        if not (isinstance(self.bins, (int, np.integer)) and 2 <= self.bins <= 256):
            raise ValueError(f"bins must be an integer in [2, 256], got {self.bins!r}")


class Measure(enum.Enum):
    SSD = "ssd"
    NCC = "ncc"
    MI = "mi"


@dataclass(frozen=True)
class SimilarityMeasure:
    kind: Measure = Measure.MI
    hist: HistogramConfig = field(default_factory=HistogramConfig)

    @classmethod
    def parse(cls, name: str, bins: int = 32) -> "SimilarityMeasure":
        return cls(Measure(name.lower()), HistogramConfig(bins))


def _masked(a, mask):
    a = np.asarray(a, dtype=float)
    if mask is None:
        return a
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise ValueError("stream and mask lengths differ")
    return a[mask]


def _pair(a, b, mask):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("streams differ in length")
    return _masked(a, mask), _masked(b, mask)


def quantize(a, bins: int) -> np.ndarray:
    """Bin index of each intensity; 1.0 falls in the last bin."""
    return np.minimum((np.asarray(a, dtype=float) * bins).astype(np.intp), bins - 1).clip(0)


def entropy_from_counts(counts) -> float:
    counts = np.asarray(counts, dtype=float).ravel()
    total = counts.sum()
    if total <= 0:
        raise EmptyOverlap("no valid samples")
    p = counts[counts > 0] / total
    return -math.fsum((p * np.log2(p)).tolist())


def ssd(a, b, mask=None) -> float:
    a, b = _pair(a, b, mask)
    if a.size == 0:
        raise EmptyOverlap("no valid samples")
    return -math.fsum(((a - b) ** 2).tolist())


def ncc(a, b, mask=None) -> float:
    a, b = _pair(a, b, mask)
    if a.size < 2:
        raise EmptyOverlap("NCC needs at least two valid samples")
    da = a - a.mean()
    db = b - b.mean()
    saa = float(np.dot(da, da))
    sbb = float(np.dot(db, db))
    if saa <= 1e-24 or sbb <= 1e-24:
        raise ZeroVariance("constant stream over the valid mask")
    r = float(np.dot(da, db)) / math.sqrt(saa * sbb)
    return max(-1.0, min(1.0, r))


def entropy(a, mask=None, cfg: HistogramConfig = HistogramConfig()) -> float:
    a = _masked(a, mask)
    if a.size == 0:
        raise EmptyOverlap("no valid samples")
    return entropy_from_counts(np.bincount(quantize(a, cfg.bins), minlength=cfg.bins))


def joint_histogram(a, b, bins: int) -> np.ndarray:
    idx = quantize(a, bins) * bins + quantize(b, bins)
    return np.bincount(idx, minlength=bins * bins).reshape(bins, bins)


def joint_entropy(a, b, mask=None, cfg: HistogramConfig = HistogramConfig()) -> float:
    a, b = _pair(a, b, mask)
    if a.size == 0:
        raise EmptyOverlap("no valid samples")
    return entropy_from_counts(joint_histogram(a, b, cfg.bins))


def mutual_information(a, b, mask=None, cfg: HistogramConfig = HistogramConfig()) -> float:
    a, b = _pair(a, b, mask)
    if a.size == 0:
        raise EmptyOverlap("no valid samples")
    joint = joint_histogram(a, b, cfg.bins)
    mi = entropy_from_counts(joint.sum(axis=1)) + entropy_from_counts(joint.sum(axis=0))
    mi -= entropy_from_counts(joint)
    if -1e-12 < mi < 0.0:
        mi = 0.0
    return mi


def evaluate(measure: SimilarityMeasure, patch, template_values) -> float:
    """Score one warped patch against the template; INVALID_FITNESS if unusable."""
    if patch.valid_fraction < MIN_VALID_FRACTION:
        return INVALID_FITNESS
    mask = patch.valid_mask
    try:
        if measure.kind is Measure.SSD:
            return ssd(patch.values, template_values, mask)
        if measure.kind is Measure.NCC:
            return ncc(patch.values, template_values, mask)
        return mutual_information(patch.values, template_values, mask, measure.hist)
    except (EmptyOverlap, ZeroVariance):
        return INVALID_FITNESS


def _rows_entropy(counts: np.ndarray) -> np.ndarray:
    """Entropy (bits) of each row of a nonnegative count matrix."""
    total = counts.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        clog = np.where(counts > 0, counts * np.log2(np.where(counts > 0, counts, 1.0)), 0.0)
        return np.log2(total) - clog.sum(axis=1) / total


def evaluate_batch(
    measure: SimilarityMeasure,
    values: np.ndarray,
    valid: np.ndarray,
    template_values: np.ndarray,
    quantized_template: np.ndarray | None = None,
    compiled: bool = True,
) -> np.ndarray:
    """Vectorized ``evaluate`` over m patches stacked as (m, n) arrays.

    Agrees with ``evaluate`` to rounding error; rows with too few valid
    samples or zero variance score INVALID_FITNESS.
    """
    values = np.asarray(values, dtype=float)
    valid = np.asarray(valid, dtype=bool)
    m, n = values.shape
    nvalid = valid.sum(axis=1)
    ok = (nvalid / n) >= MIN_VALID_FRACTION
    out = np.full(m, INVALID_FITNESS)
    if not ok.any():
        return out
    if measure.kind is Measure.SSD:
        w = valid.astype(float)
        d = (values - template_values) ** 2
        out[ok] = -(d * w).sum(axis=1)[ok]
        return out

    if measure.kind is Measure.NCC:
        w = valid.astype(float)
        cnt = np.maximum(nvalid, 1)
        mu_a = (values * w).sum(axis=1) / cnt
        mu_b = (template_values * w).sum(axis=1) / cnt
        da = (values - mu_a[:, None]) * w
        db = (template_values - mu_b[:, None]) * w
        saa = (da * da).sum(axis=1)
        sbb = (db * db).sum(axis=1)
        good = ok & (nvalid >= 2) & (saa > 1e-24) & (sbb > 1e-24)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = (da * db).sum(axis=1) / np.sqrt(saa * sbb)
        out[good] = np.clip(r[good], -1.0, 1.0)
        return out

    bins = measure.hist.bins
    qb = quantize(template_values, bins) if quantized_template is None else quantized_template
    cells = bins * bins
    if compiled and _kernels.AVAILABLE:
        joint = _kernels.joint_counts(values, valid, np.ascontiguousarray(qb, dtype=np.intp), bins)
    else:
        idx = (np.arange(m)[:, None] * cells + quantize(values, bins) * bins + qb)[valid]
        joint = np.bincount(idx, minlength=m * cells).reshape(m, bins, bins).astype(float)
    sel = joint[ok]
    mi = (
        _rows_entropy(sel.sum(axis=2))
        + _rows_entropy(sel.sum(axis=1))
        - _rows_entropy(sel.reshape(len(sel), cells))
    )
    out[ok] = np.where((mi < 0.0) & (mi > -1e-12), 0.0, mi)
    return out
