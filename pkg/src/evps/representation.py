"""Fixed-length per-pixel summaries of one event cycle.

A cycle is cut into n_segments equal time slices; a pixel's polarity
vector holds the signed event count per slice. Multiplying the counts
by a contrast threshold and exponentiating the running sum recovers the
relative intensity at the slice boundaries, which is what the analytic
solver fits. The raw polarity vector is what the network consumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EventStream, LightTrajectory, NormalMap, normalize_phase

N_SEGMENTS = 96


@dataclass
class PolarityVector:
    """Signed event counts per time slice for one pixel."""

    values: np.ndarray
    pixel: tuple[int, int]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64)
        if self.values.ndim != 1 or len(self.values) < 2:
            raise ValueError("values must be a 1-d vector with at least 2 segments")

    @property
    def n_segments(self):
        return len(self.values)


@dataclass
class ContrastSeries:
    """Relative intensity at slice boundaries, and their cycle phases.

    samples[0] is 1 by construction (the cycle start is the reference);
    samples[k] = exp(C * sum of the first k slice counts). One more
    boundary than slices, so len = n_segments + 1; the final boundary
    wraps to phase 0.
    """

    samples: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.phases = np.asarray(self.phases, dtype=np.float64)
        if self.samples.shape != self.phases.shape or self.samples.ndim != 1:
            raise ValueError("samples and phases must be matching 1-d arrays")
        if np.any(self.samples <= 0.0):
            raise ValueError("contrast samples must be positive")
        if abs(self.samples[0] - 1.0) > 1e-9:
            raise ValueError("the first sample is the reference and must be 1")


def segment_indices(timestamps, period, n_segments):
    """Slice index per timestamp; the final slice is closed on the right."""
    idx = np.floor(np.asarray(timestamps, dtype=np.float64)
                   / period * n_segments).astype(np.int64)
    return np.clip(idx, 0, n_segments - 1)


def polarity_vector(events, trajectory: LightTrajectory,
                    n_segments: int = N_SEGMENTS,
                    pixel: tuple[int, int] = (0, 0)) -> PolarityVector:
    """Bin one pixel's events (iterable of Event) into slice sums."""
    if n_segments < 2:
        raise ValueError("need at least two segments")
    events = list(events)
    values = np.zeros(n_segments, dtype=np.int64)
    if events:
        t = np.array([e.timestamp for e in events])
        p = np.array([e.polarity for e in events], dtype=np.int64)
        if np.any(t < 0) or np.any(t > trajectory.period):
            raise ValueError("event timestamps must lie within one cycle")
        np.add.at(values, segment_indices(t, trajectory.period, n_segments), p)
    return PolarityVector(values, pixel)


def polarity_matrix(stream: EventStream,
                    n_segments: int = N_SEGMENTS) -> tuple[np.ndarray, np.ndarray]:
    """All pixels at once: (h*w, n_segments) slice sums and per-pixel counts."""
    npix = stream.width * stream.height
    values = np.zeros((npix, n_segments), dtype=np.int64)
    counts = np.zeros(npix, dtype=np.int64)
    if len(stream):
        pix = stream.ys.astype(np.int64) * stream.width + stream.xs.astype(np.int64)
        seg = segment_indices(stream.timestamps, stream.trajectory.period, n_segments)
        np.add.at(values, (pix, seg), stream.polarities.astype(np.int64))
        np.add.at(counts, pix, 1)
    return values, counts


def event_counts(stream: EventStream) -> np.ndarray:
    """Total events per pixel, flattened row-major (h*w,)."""
    counts = np.zeros(stream.width * stream.height, dtype=np.int64)
    if len(stream):
        pix = stream.ys.astype(np.int64) * stream.width + stream.xs.astype(np.int64)
        np.add.at(counts, pix, 1)
    return counts


def contrast_series(vector: PolarityVector, contrast: float,
                    trajectory: LightTrajectory) -> ContrastSeries:
    """Integrate slice counts into relative intensity at slice boundaries."""
    if not contrast > 0.0:
        raise ValueError("contrast must be positive")
    m = vector.n_segments
    samples = np.empty(m + 1)
    samples[0] = 1.0
    samples[1:] = np.exp(contrast * np.cumsum(vector.values))
    phases = normalize_phase(np.arange(m + 1) * (trajectory.period / m), trajectory)
    return ContrastSeries(samples, phases)


@dataclass
class PixelDataset:
    """Polarity vectors (n, n_segments) with pixel coords and optional labels."""

    features: np.ndarray
    pixels: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.pixels = np.asarray(self.pixels, dtype=np.int64)
        if self.features.ndim != 2 or self.pixels.shape != (len(self.features), 2):
            raise ValueError("need one (x, y) pixel per feature row")
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64)
            if self.normals.shape != (len(self.features), 3):
                raise ValueError("need one unit normal per feature row")

    def __len__(self):
        return len(self.features)

    @property
    def n_segments(self):
        return self.features.shape[1]

    @staticmethod
    def concatenate(datasets):
        datasets = list(datasets)
        if not datasets:
            raise ValueError("nothing to concatenate")
        widths = {d.n_segments for d in datasets}
        if len(widths) != 1:
            raise ValueError("datasets disagree on segment count")
        labelled = [d.normals is not None for d in datasets]
        if any(labelled) and not all(labelled):
            raise ValueError("cannot mix labelled and unlabelled datasets")
        return PixelDataset(
            np.concatenate([d.features for d in datasets]),
            np.concatenate([d.pixels for d in datasets]),
            np.concatenate([d.normals for d in datasets]) if all(labelled) else None,
        )


def build_dataset(stream: EventStream, mask=None,
                  n_segments: int = N_SEGMENTS,
                  ground_truth: NormalMap | None = None) -> PixelDataset:
    """One dataset row per masked-in pixel, in row-major pixel order.

    mask defaults to all pixels. When ground_truth is given its grid
    must match the sensor and each row gets its pixel's true normal.
    """
    if mask is None:
        mask = np.ones((stream.height, stream.width), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (stream.height, stream.width):
        raise ValueError("mask shape must match the sensor")
    if ground_truth is not None and (
            ground_truth.height != stream.height or ground_truth.width != stream.width):
        raise ValueError("ground-truth grid must match the sensor")
    values, _ = polarity_matrix(stream, n_segments)
    keep = np.flatnonzero(mask.ravel())
    pixels = np.stack([keep % stream.width, keep // stream.width], axis=1)
    normals = None
    if ground_truth is not None:
        normals = ground_truth.normals.reshape(-1, 3)[keep]
    return PixelDataset(values[keep].astype(np.float64), pixels, normals)
