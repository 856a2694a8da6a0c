"""Shared geometry and shading primitives.

Coordinate conventions used throughout the package:

* Image pixels are addressed (x, y) with x the column and y the row;
  arrays are indexed ``[y, x]``.
* Surface normals are unit length-3 float vectors (nx, ny, nz) with
  nz >= 0 (the camera looks down +z, so visible surfaces face it).
* The light direction is a unit vector from the surface toward the
  light. It circles the optical axis at a fixed elevation angle,
  completing one revolution per period.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

VIEW_DIRECTION = np.array([0.0, 0.0, 1.0])

# Shadowed pixels keep this fraction of the albedo-scaled source intensity
# so log-intensity stays finite; see render_sequence.
INTENSITY_FLOOR_FRACTION = 1e-4


class DegenerateFit(ValueError):
    """Raised when a regression problem is rank deficient."""


class DegenerateParams(ValueError):
    """Raised when fitted parameters admit no unit normal."""


class EmptyMask(ValueError):
    """Raised when an evaluation has no valid pixels to average."""


class CycleNotCovered(ValueError):
    """Raised when an event stream does not span the requested cycle."""


@dataclass(frozen=True)
class LightTrajectory:
    """Circular light path: fixed elevation, azimuth revolving over time.

    direction is +1 for counterclockwise azimuth growth, -1 for clockwise.
    azimuth_offset is the azimuth at t = 0 (and at every whole period).
    """

    elevation: float = np.pi / 4
    period: float = 1.0
    direction: int = 1
    azimuth_offset: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.elevation < np.pi / 2:
            raise ValueError(f"elevation must lie in (0, pi/2), got {self.elevation}")
        if not self.period > 0.0:
            raise ValueError(f"period must be positive, got {self.period}")
        if self.direction not in (1, -1):
            raise ValueError(f"direction must be +1 or -1, got {self.direction}")


@dataclass(frozen=True)
class Event:
    """One brightness-change event: polarity +1 (brighter) or -1 (darker)."""

    timestamp: float
    x: int
    y: int
    polarity: int

    def __post_init__(self):
        if self.polarity not in (1, -1):
            raise ValueError(f"polarity must be +1 or -1, got {self.polarity}")


EVENT_DTYPE = np.dtype([("t", "<f8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])


@dataclass(eq=False)
class EventStream:
    """Events for one sensor, sorted by (t, y, x), stored as columns.

    duration, when known (the simulator sets it), is the time span the
    stream observes; pixels can be quiet, so it is not derivable from
    the events themselves and is not persisted by the binary format.
    """

    width: int
    height: int
    timestamps: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    polarities: np.ndarray
    trajectory: LightTrajectory = field(default_factory=LightTrajectory)
    duration: float | None = None

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        self.xs = np.asarray(self.xs, dtype=np.uint16)
        self.ys = np.asarray(self.ys, dtype=np.uint16)
        self.polarities = np.asarray(self.polarities, dtype=np.int8)

    def __len__(self):
        return len(self.timestamps)

    def validate(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("sensor dimensions must be positive")
        n = len(self.timestamps)
        if not (len(self.xs) == len(self.ys) == len(self.polarities) == n):
            raise ValueError("event columns must share one length")
        if n == 0:
            return
        if not np.all(np.isfinite(self.timestamps)) or np.any(self.timestamps < 0):
            raise ValueError("timestamps must be finite and non-negative")
        if np.any(self.xs >= self.width) or np.any(self.ys >= self.height):
            raise ValueError("event coordinates fall outside the sensor")
        if not np.all(np.isin(self.polarities, (1, -1))):
            raise ValueError("polarities must be +1 or -1")
        if np.any(np.diff(self.timestamps) < 0):
            raise ValueError("events must be sorted by timestamp")

    @property
    def events(self) -> list[Event]:
        return [
            Event(float(t), int(x), int(y), int(p))
            for t, x, y, p in zip(self.timestamps, self.xs, self.ys, self.polarities)
        ]

    @classmethod
    def from_events(cls, width, height, events, trajectory=None, duration=None):
        """Build a sorted stream from an iterable of Event."""
        events = list(events)
        t = np.array([e.timestamp for e in events], dtype=np.float64)
        x = np.array([e.x for e in events], dtype=np.uint16)
        y = np.array([e.y for e in events], dtype=np.uint16)
        p = np.array([e.polarity for e in events], dtype=np.int8)
        order = np.lexsort((x, y, t))
        if trajectory is None:
            trajectory = LightTrajectory()
        return cls(width, height, t[order], x[order], y[order], p[order],
                   trajectory, duration)


@dataclass
class NormalMap:
    """Per-pixel unit normals (height, width, 3) with a validity mask.

    Invalid pixels hold the zero vector and mask False.
    """

    normals: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.normals = np.asarray(self.normals, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.normals.ndim != 3 or self.normals.shape[2] != 3:
            raise ValueError("normals must have shape (height, width, 3)")
        if self.mask.shape != self.normals.shape[:2]:
            raise ValueError("mask shape must match the normal grid")

    @property
    def width(self):
        return self.normals.shape[1]

    @property
    def height(self):
        return self.normals.shape[0]


@dataclass(frozen=True)
class ContrastThresholdModel:
    """Gaussian per-event contrast threshold, clamped at 0.1 * mean."""

    mean: float = 0.2
    std_dev: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if not self.mean > 0.0:
            raise ValueError(f"threshold mean must be positive, got {self.mean}")
        if not 0.0 <= self.std_dev < self.mean:
            raise ValueError(
                f"threshold std_dev must lie in [0, mean), got {self.std_dev}")

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        c = rng.normal(self.mean, self.std_dev, size=size)
        return np.maximum(c, 0.1 * self.mean)


@dataclass
class SceneConfig:
    """Per-pixel reflectance fields plus the (constant) source intensity."""

    albedo: np.ndarray
    specular_weight: np.ndarray
    specular_exponent: np.ndarray
    light_intensity: float = 1.0

    def __post_init__(self):
        self.albedo = np.asarray(self.albedo, dtype=np.float64)
        self.specular_weight = np.asarray(self.specular_weight, dtype=np.float64)
        self.specular_exponent = np.asarray(self.specular_exponent, dtype=np.float64)
        if not (self.albedo.shape == self.specular_weight.shape
                == self.specular_exponent.shape):
            raise ValueError("reflectance fields must share one shape")
        if np.any(self.albedo <= 0.0):
            raise ValueError("albedo must be positive everywhere")
        if np.any(self.specular_weight < 0.0):
            raise ValueError("specular weight must be non-negative")
        if not self.light_intensity > 0.0:
            raise ValueError("light intensity must be positive")


def light_direction(trajectory: LightTrajectory, t) -> np.ndarray:
    """Unit light vector(s) at time t (scalar or array; appends axis 3)."""
    t = np.asarray(t, dtype=np.float64)
    theta = trajectory.azimuth_offset + trajectory.direction * 2.0 * np.pi \
        * np.mod(t, trajectory.period) / trajectory.period
    theta = np.asarray(theta)
    cos_el = np.cos(trajectory.elevation)
    out = np.stack(
        [cos_el * np.cos(theta),
         cos_el * np.sin(theta),
         np.broadcast_to(np.sin(trajectory.elevation), theta.shape)],
        axis=-1,
    )
    return out if t.ndim else out.reshape(3)


def normalize_phase(t, trajectory: LightTrajectory):
    """Azimuth advance since the start of the current cycle, in [0, 2*pi).

    Excludes azimuth_offset: t = 0 and every whole period map to 0.
    """
    t = np.asarray(t, dtype=np.float64)
    phase = trajectory.direction * 2.0 * np.pi * np.mod(t, trajectory.period) / trajectory.period
    phase = np.mod(phase, 2.0 * np.pi)
    return phase if t.ndim else float(phase)


def shade(normal, light_dir, albedo=1.0, specular_weight=0.0,
          specular_exponent=32.0, light_intensity=1.0):
    """Scalar intensity for one surface patch under one light direction.

    Lambertian term plus an optional mirror-lobe specular term; attached
    shadows (n . l <= 0) return exactly 0. No clamping floor here — the
    renderer applies it.
    """
    normal = np.asarray(normal, dtype=np.float64)
    light_dir = np.asarray(light_dir, dtype=np.float64)
    ndotl = float(normal @ light_dir)
    if ndotl <= 0.0:
        return 0.0
    value = albedo * ndotl
    if specular_weight > 0.0:
        # Reflection of l about n, dotted with the +z view direction.
        r_z = 2.0 * ndotl * normal[2] - light_dir[2]
        value += specular_weight * max(r_z, 0.0) ** specular_exponent
    return float(light_intensity * value)


def shade_image(normals, mask, light_dir, config: SceneConfig) -> np.ndarray:
    """Vectorized shade over an (H, W, 3) normal grid; masked-out pixels 0."""
    light_dir = np.asarray(light_dir, dtype=np.float64)
    ndotl = normals @ light_dir
    lit = (ndotl > 0.0) & mask
    ndotl = np.where(lit, ndotl, 0.0)
    value = config.albedo * ndotl
    if np.any(config.specular_weight > 0.0):
        r_z = 2.0 * ndotl * normals[..., 2] - light_dir[2]
        value = value + np.where(
            lit, config.specular_weight * np.maximum(r_z, 0.0) ** config.specular_exponent,
            0.0)
    return config.light_intensity * value
