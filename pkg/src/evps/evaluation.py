"""Angular-error metrics: per-pixel error maps, MAE, event-count bins."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EmptyMask, EventStream, NormalMap
from .representation import event_counts


@dataclass
class ErrorMap:
    """Per-pixel angular error in degrees; valid where pred and gt both are."""

    degrees: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.degrees = np.asarray(self.degrees, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.degrees.shape != self.mask.shape or self.degrees.ndim != 2:
            raise ValueError("error grid and mask must be matching 2-d arrays")

    @property
    def width(self):
        return self.degrees.shape[1]

    @property
    def height(self):
        return self.degrees.shape[0]


@dataclass
class BinnedReport:
    """MAE per event-count bin [lo, hi] inclusive; nan where a bin is empty."""

    bin_lo: np.ndarray
    bin_hi: np.ndarray
    maes: np.ndarray
    pixel_counts: np.ndarray

    def __post_init__(self):
        n = len(self.bin_lo)
        if not (len(self.bin_hi) == len(self.maes) == len(self.pixel_counts) == n):
            raise ValueError("bin columns must share one length")

    @property
    def labels(self):
        return [f"{lo}-{hi}" for lo, hi in zip(self.bin_lo, self.bin_hi)]

    def overall_mae(self):
        """Count-weighted recombination of the per-bin MAEs."""
        total = int(self.pixel_counts.sum())
        if total == 0:
            raise EmptyMask("no pixels fell into any bin")
        filled = self.pixel_counts > 0
        return float(np.sum(self.maes[filled] * self.pixel_counts[filled]) / total)


def angular_error(pred, gt):
    """Angle between unit vectors in degrees; broadcasts over leading axes."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    dot = np.clip(np.sum(pred * gt, axis=-1), -1.0, 1.0)
    deg = np.degrees(np.arccos(dot))
    return float(deg) if deg.ndim == 0 else deg


def _joint_mask(pred: NormalMap, gt: NormalMap):
    if pred.normals.shape != gt.normals.shape:
        raise ValueError("prediction and ground-truth dimensions differ")
    return pred.mask & gt.mask


def mae(pred: NormalMap, gt: NormalMap) -> float:
    """Mean angular error in degrees over jointly valid pixels."""
    both = _joint_mask(pred, gt)
    if not both.any():
        raise EmptyMask("prediction and ground-truth masks do not intersect")
    return float(np.mean(angular_error(pred.normals[both], gt.normals[both])))


def error_map(pred: NormalMap, gt: NormalMap) -> ErrorMap:
    """Per-pixel angular error where both maps are valid, 0/invalid elsewhere."""
    both = _joint_mask(pred, gt)
    degrees = np.zeros(both.shape)
    degrees[both] = angular_error(pred.normals[both], gt.normals[both])
    return ErrorMap(degrees, both)


def mae_by_event_count(pred: NormalMap, gt: NormalMap, stream: EventStream,
                       bin_width: int = 2, max_count: int = 20) -> BinnedReport:
    """MAE per event-count bin: [1, w], [w+1, 2w], ... up to max_count.

    Pixels outside the joint mask, with zero events, or with more than
    max_count events are not binned. Empty bins report count 0 and nan.
    """
    if bin_width < 1 or max_count < bin_width:
        raise ValueError("need bin_width >= 1 and max_count >= bin_width")
    both = _joint_mask(pred, gt)
    if not both.any():
        raise EmptyMask("prediction and ground-truth masks do not intersect")
    if (stream.height, stream.width) != both.shape:
        raise ValueError("event stream dimensions differ from the normal maps")
    counts = event_counts(stream).reshape(both.shape)

    errors = angular_error(pred.normals, gt.normals)
    lo = np.arange(1, max_count + 1, bin_width)
    hi = np.minimum(lo + bin_width - 1, max_count)
    maes = np.full(len(lo), np.nan)
    pixel_counts = np.zeros(len(lo), dtype=np.int64)
    for i in range(len(lo)):
        sel = both & (counts >= lo[i]) & (counts <= hi[i])
        pixel_counts[i] = int(sel.sum())
        if pixel_counts[i]:
            maes[i] = float(np.mean(errors[sel]))
    return BinnedReport(lo, hi, maes, pixel_counts)
