"""Closed-form normal recovery from one cycle of events.

Under a light circling at fixed elevation phi, a Lambertian pixel's
relative intensity over the cycle is a raised cosine of the azimuth:

    E(theta) = amplitude * cos(theta - phase) + offset

with amplitude = cos(phi) * sqrt(beta) / I0, offset = sin(phi)
* sqrt(1 - beta) / I0, phase = the normal's azimuth, beta = nx^2 +
ny^2, and I0 the (unknown) intensity at the cycle start. The inversion

    n = (a*cos(phase), a*sin(phase), offset) / hypot(a, offset),
    a = amplitude * tan(phi)

is homogeneous in (amplitude, offset), so I0 cancels and no intensity
calibration is needed. The sign of n is fixed by requiring nz >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (DegenerateFit, DegenerateParams, EventStream, NormalMap,
                   normalize_phase)
from .representation import N_SEGMENTS, ContrastSeries, polarity_matrix

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class CosineParams:
    """Amplitude, phase, offset of the fitted relative-intensity cosine."""

    amplitude: float
    phase: float
    offset: float

    def __post_init__(self):
        if not (np.isfinite(self.amplitude) and self.amplitude >= 0.0):
            raise ValueError(f"amplitude must be finite and >= 0, got {self.amplitude}")
        if not (np.isfinite(self.phase) and np.isfinite(self.offset)):
            raise ValueError("phase and offset must be finite")

    @property
    def alpha(self):
        """Azimuth of the recovered normal (the fitted phase)."""
        return self.phase

    def beta(self, elevation):
        """nx^2 + ny^2 the parameters imply at the given light elevation."""
        a = self.amplitude * np.tan(elevation)
        d2 = a * a + self.offset * self.offset
        if d2 == 0.0:
            raise DegenerateParams("amplitude and offset both vanish")
        return a * a / d2


def fit_cosine(series: ContrastSeries) -> CosineParams:
    """Least-squares fit of samples ~ a*cos(phase) + b*sin(phase) + c.

    Exact for data in the model's span. Raises DegenerateFit when the
    phases cannot pin three coefficients (fewer than 3 samples, or
    fewer than 3 distinct phases).
    """
    if len(series.samples) < 3:
        raise DegenerateFit("need at least 3 samples")
    design = np.stack([np.cos(series.phases), np.sin(series.phases),
                       np.ones_like(series.phases)], axis=1)
    coef, _, rank, _ = np.linalg.lstsq(design, series.samples, rcond=None)
    if rank < 3:
        raise DegenerateFit("sample phases do not span the cosine basis")
    a, b, c = coef
    return CosineParams(amplitude=float(np.hypot(a, b)),
                        phase=float(np.mod(np.arctan2(b, a), TWO_PI)),
                        offset=float(c))


def normal_from_params(params: CosineParams, elevation: float) -> np.ndarray:
    """Invert fitted cosine parameters to a unit normal with nz >= 0."""
    if not 0.0 < elevation < np.pi / 2:
        raise ValueError(f"elevation must lie in (0, pi/2), got {elevation}")
    a = params.amplitude * np.tan(elevation)
    norm = np.hypot(a, params.offset)
    if norm == 0.0:
        raise DegenerateParams("amplitude and offset both vanish")
    n = np.array([a * np.cos(params.phase), a * np.sin(params.phase),
                  params.offset]) / norm
    return -n if n[2] < 0.0 else n


@dataclass
class SolveDiagnostics:
    """Per-pixel fit bookkeeping from solve_map."""

    event_counts: np.ndarray
    nonpositive_offset: np.ndarray


def solve_map(stream: EventStream, contrast: float, elevation: float | None = None,
              n_segments: int = N_SEGMENTS, min_events: int = 4,
              return_diagnostics: bool = False):
    """Analytic per-pixel solve over one cycle of events.

    Equivalent to polarity_vector -> contrast_series -> fit_cosine ->
    normal_from_params at every pixel, batched through one shared
    design matrix. Pixels with fewer than min_events events, or whose
    fit admits no normal, are masked invalid. elevation defaults to the
    stream trajectory's. The fitted phase is shifted by the trajectory
    azimuth_offset so recovered azimuths are absolute.

    A fitted offset <= 0 (possible under specular highlights) still
    inverts through the z-flip; with return_diagnostics the affected
    pixels are flagged alongside the per-pixel event counts.
    """
    if not contrast > 0.0:
        raise ValueError("contrast must be positive")
    if n_segments < 2:
        raise ValueError("need at least 2 segments")
    if min_events < 1:
        raise ValueError("min_events must be at least 1")
    traj = stream.trajectory
    if elevation is None:
        elevation = traj.elevation
    if not 0.0 < elevation < np.pi / 2:
        raise ValueError(f"elevation must lie in (0, pi/2), got {elevation}")

    values, counts = polarity_matrix(stream, n_segments)
    npix = values.shape[0]
    with np.errstate(over="ignore"):
        samples = np.empty((npix, n_segments + 1))
        samples[:, 0] = 1.0
        np.exp(contrast * np.cumsum(values, axis=1), out=samples[:, 1:])

    phases = normalize_phase(np.arange(n_segments + 1) * (traj.period / n_segments), traj)
    design = np.stack([np.cos(phases), np.sin(phases), np.ones_like(phases)], axis=1)
    # One 3x3 normal-equation system shared by every pixel.
    gram = design.T @ design
    coef = np.linalg.solve(gram, design.T @ samples.T)  # (3, npix)
    a, b, c = coef

    amplitude = np.hypot(a, b)
    alpha = np.arctan2(b, a) + traj.azimuth_offset
    scaled = amplitude * np.tan(elevation)
    norm = np.hypot(scaled, c)
    with np.errstate(invalid="ignore", divide="ignore"):
        normals = np.stack([scaled * np.cos(alpha), scaled * np.sin(alpha), c],
                           axis=1) / norm[:, None]
    normals = np.where(normals[:, 2:3] < 0.0, -normals, normals)

    valid = (counts >= min_events) & (norm > 0.0) & np.all(np.isfinite(normals), axis=1)
    normals = np.where(valid[:, None], normals, 0.0)

    shape = (stream.height, stream.width)
    result = NormalMap(normals.reshape(*shape, 3), valid.reshape(shape))
    if not return_diagnostics:
        return result
    diagnostics = SolveDiagnostics(event_counts=counts.reshape(shape),
                                   nonpositive_offset=(c <= 0.0).reshape(shape) & valid.reshape(shape))
    return result, diagnostics
