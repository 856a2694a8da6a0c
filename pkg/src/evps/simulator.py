"""Synthetic scenes, frame rendering, and event synthesis.

Events are generated the way a contrast camera fires: a pixel emits when
its log intensity drifts one threshold away from the level at its last
event, with the threshold redrawn per event. Frames are linearly
interpolated in the log domain between samples, so event timestamps are
sub-frame accurate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    INTENSITY_FLOOR_FRACTION,
    ContrastThresholdModel,
    CycleNotCovered,
    EventStream,
    LightTrajectory,
    NormalMap,
    SceneConfig,
    light_direction,
    shade_image,
)

SCENE_KINDS = ("sphere", "gaussian-bumps", "ramp")


@dataclass
class Scene:
    """Ground-truth geometry plus reflectance for the renderer."""

    normals: NormalMap
    config: SceneConfig

    @property
    def width(self):
        return self.normals.width

    @property
    def height(self):
        return self.normals.height


@dataclass
class FrameSequence:
    """Uniformly sampled intensity frames (n, height, width)."""

    frames: np.ndarray
    times: np.ndarray
    trajectory: LightTrajectory

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.times = np.asarray(self.times, dtype=np.float64)
        if self.frames.ndim != 3 or len(self.frames) != len(self.times):
            raise ValueError("need one (height, width) frame per sample time")
        if len(self.times) >= 2 and not np.all(np.diff(self.times) > 0):
            raise ValueError("frame times must be strictly increasing")
        if np.any(self.frames <= 0.0):
            raise ValueError("frames must be strictly positive (log domain)")

    @property
    def width(self):
        return self.frames.shape[2]

    @property
    def height(self):
        return self.frames.shape[1]


def _smooth_field(rng, height, width, lo, hi, cells=4):
    """Random field in [lo, hi], bilinear over a coarse seeded lattice."""
    lattice = rng.random((cells + 1, cells + 1))
    gy = np.linspace(0.0, cells, height)
    gx = np.linspace(0.0, cells, width)
    iy = np.minimum(gy.astype(int), cells - 1)
    ix = np.minimum(gx.astype(int), cells - 1)
    fy = (gy - iy)[:, None]
    fx = (gx - ix)[None, :]
    f = (lattice[np.ix_(iy, ix)] * (1 - fy) * (1 - fx)
         + lattice[np.ix_(iy + 1, ix)] * fy * (1 - fx)
         + lattice[np.ix_(iy, ix + 1)] * (1 - fy) * fx
         + lattice[np.ix_(iy + 1, ix + 1)] * fy * fx)
    return lo + (hi - lo) * f


def make_scene(kind: str, seed: int = 0, width: int = 128, height: int = 128,
               randomize_brdf: bool = False, radius: float | None = None,
               tilt: float = np.pi / 6, n_bumps: int = 5,
               specular_weight: float | None = None,
               specular_exponent: float | None = None) -> Scene:
    """Build a seeded synthetic scene.

    kind "sphere" is a spherical cap centered on the image; radius
    defaults to min(width, height), which keeps every visible slope at
    or below 45 degrees. kind "gaussian-bumps" sums n_bumps seeded
    Gaussian heights; "ramp" is a plane tilted about the y axis by tilt.

    Albedo is a smooth seeded field in [0.3, 1.0]. With randomize_brdf
    the specular weight is a smooth field in [0, 0.5] and the exponent
    is drawn log-uniform from [10, 200]; otherwise both default to 0
    weight / exponent 32. Explicit scalar specular_weight /
    specular_exponent override either path.
    """
    if kind not in SCENE_KINDS:
        raise ValueError(f"unknown scene kind {kind!r}")
    if width < 8 or height < 8:
        raise ValueError("scene dimensions must be at least 8x8")
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0

    if kind == "sphere":
        r = float(min(width, height)) if radius is None else float(radius)
        if r <= 0:
            raise ValueError("sphere radius must be positive")
        dx = (xs - cx) / r
        dy = (ys - cy) / r
        d2 = dx * dx + dy * dy
        inside = d2 < 1.0
        nz = np.sqrt(np.maximum(1.0 - d2, 0.0))
        normals = np.where(inside[..., None], np.stack([dx, dy, nz], axis=-1), 0.0)
        mask = inside
    elif kind == "gaussian-bumps":
        hx = np.zeros((height, width))
        hy = np.zeros((height, width))
        for _ in range(n_bumps):
            bx = rng.uniform(0.15, 0.85) * width
            by = rng.uniform(0.15, 0.85) * height
            sigma = rng.uniform(0.08, 0.2) * min(width, height)
            amp = rng.uniform(0.3, 1.6) * sigma * rng.choice([-1.0, 1.0])
            g = amp * np.exp(-((xs - bx) ** 2 + (ys - by) ** 2) / (2 * sigma ** 2))
            hx += g * -(xs - bx) / sigma ** 2
            hy += g * -(ys - by) / sigma ** 2
        norm = np.sqrt(hx * hx + hy * hy + 1.0)
        normals = np.stack([-hx / norm, -hy / norm, 1.0 / norm], axis=-1)
        mask = np.ones((height, width), dtype=bool)
    else:  # ramp
        if not 0.0 <= tilt < np.pi / 2:
            raise ValueError("ramp tilt must lie in [0, pi/2)")
        n = np.array([-np.sin(tilt), 0.0, np.cos(tilt)])
        normals = np.broadcast_to(n, (height, width, 3)).copy()
        mask = np.ones((height, width), dtype=bool)

    albedo = _smooth_field(rng, height, width, 0.3, 1.0)
    if specular_weight is not None:
        weight = np.full((height, width), float(specular_weight))
    elif randomize_brdf:
        weight = _smooth_field(rng, height, width, 0.0, 0.5)
    else:
        weight = np.zeros((height, width))
    if specular_exponent is not None:
        exponent = np.full((height, width), float(specular_exponent))
    elif randomize_brdf:
        exponent = np.full((height, width), float(np.exp(rng.uniform(np.log(10), np.log(200)))))
    else:
        exponent = np.full((height, width), 32.0)

    config = SceneConfig(albedo=albedo, specular_weight=weight,
                         specular_exponent=exponent)
    return Scene(NormalMap(normals, mask), config)


def render_sequence(scene: Scene, trajectory: LightTrajectory,
                    frames_per_cycle: int = 100, cycles: int = 2) -> FrameSequence:
    """Render frames_per_cycle * cycles frames, floored away from zero.

    Frame i sits at t = i * period / frames_per_cycle. Shadowed or
    masked-out pixels are clamped to a small positive floor so the log
    intensity used by the event model stays finite.
    """
    if frames_per_cycle < 8:
        raise ValueError("need at least 8 frames per cycle")
    if cycles < 1:
        raise ValueError("need at least one cycle")
    n = frames_per_cycle * cycles
    times = np.arange(n) * (trajectory.period / frames_per_cycle)
    floor = INTENSITY_FLOOR_FRACTION * scene.config.light_intensity
    frames = np.empty((n, scene.height, scene.width))
    for i, t in enumerate(times):
        img = shade_image(scene.normals.normals, scene.normals.mask,
                          light_direction(trajectory, float(t)), scene.config)
        frames[i] = np.maximum(img, floor)
    return FrameSequence(frames, times, trajectory)


def simulate_events(frames: FrameSequence,
                    threshold: ContrastThresholdModel) -> EventStream:
    """Fire events at threshold crossings of the log intensity.

    Between consecutive frames the log intensity is taken as linear. A
    pixel fires when it reaches its reference level plus or minus the
    pending threshold (equality included), the reference moves to the
    crossed level, and the next threshold is redrawn. Events come out
    sorted by (t, y, x).
    """
    if len(frames.frames) < 2:
        raise ValueError("need at least two frames to simulate events")
    n, height, width = frames.frames.shape
    npix = height * width
    rng = np.random.default_rng(threshold.seed)

    logs = np.log(frames.frames).reshape(n, npix)
    l0 = logs[0].copy()
    # Reference level tracked as l0 + mean*steps + drift rather than a
    # running float sum: with a fixed threshold, drift stays exactly zero
    # and the reference is bitwise mean*(net polarity count) above l0, so
    # repeated +-C updates cannot round the conservation margin away.
    steps = np.zeros(npix, dtype=np.int64)
    drift = np.zeros(npix)
    mean = threshold.mean
    pend = threshold.sample(rng, npix)

    out_t, out_pix, out_pol = [], [], []
    for i in range(n - 1):
        la, lb = logs[i], logs[i + 1]
        ta, tb = frames.times[i], frames.times[i + 1]
        dt = tb - ta
        dl = lb - la
        d = lb - l0
        while True:
            gap = (d - mean * steps) - drift
            up = gap >= pend
            down = gap <= -pend
            active = np.flatnonzero(up | down)
            if active.size == 0:
                break
            sign = np.where(up[active], 1.0, -1.0)
            steps[active] += sign.astype(np.int64)
            drift[active] += sign * (pend[active] - mean)
            level = l0[active] + (mean * steps[active] + drift[active])
            frac = (level - la[active]) / dl[active]
            # fp noise in the crossing must not leak past either frame
            out_t.append(np.clip(ta + frac * dt, ta, tb))
            out_pix.append(active)
            out_pol.append(sign.astype(np.int8))
            pend[active] = threshold.sample(rng, active.size)

    if out_t:
        t = np.concatenate(out_t)
        pix = np.concatenate(out_pix)
        pol = np.concatenate(out_pol)
    else:
        t = np.empty(0)
        pix = np.empty(0, dtype=np.int64)
        pol = np.empty(0, dtype=np.int8)
    x = (pix % width).astype(np.uint16)
    y = (pix // width).astype(np.uint16)
    order = np.lexsort((x, y, t))
    dt = frames.times[1] - frames.times[0]
    return EventStream(width, height, t[order], x[order], y[order], pol[order],
                       frames.trajectory, duration=float(n * dt))


def select_cycle(stream: EventStream, cycle_index: int = 1) -> EventStream:
    """Slice out one rotation period [k*T, (k+1)*T), rebased to t = 0.

    Errors if the stream demonstrably does not span the cycle: the
    recorded duration is too short, or no duration is known and the
    last event precedes the cycle start. An empty stream with unknown
    duration passes through empty.
    """
    if cycle_index < 0:
        raise ValueError("cycle_index must be non-negative")
    period = stream.trajectory.period
    start = cycle_index * period
    end = start + period
    tol = 1e-9 * period
    if stream.duration is not None:
        if stream.duration + tol < end:
            raise CycleNotCovered(
                f"stream covers {stream.duration:.6g} s, cycle needs {end:.6g} s")
    elif len(stream) and stream.timestamps[-1] < start:
        raise CycleNotCovered(
            f"last event at {stream.timestamps[-1]:.6g} s precedes cycle start {start:.6g} s")
    keep = (stream.timestamps >= start) & (stream.timestamps < end)
    return EventStream(stream.width, stream.height,
                       stream.timestamps[keep] - start, stream.xs[keep],
                       stream.ys[keep], stream.polarities[keep],
                       stream.trajectory, duration=period)


def center_crop(stream: EventStream, size: int) -> EventStream:
    """Keep events inside the centered size x size window, shifting coords."""
    if size < 1 or size > stream.width or size > stream.height:
        raise ValueError(
            f"crop size {size} does not fit a {stream.width}x{stream.height} sensor")
    x0 = (stream.width - size) // 2
    y0 = (stream.height - size) // 2
    keep = ((stream.xs >= x0) & (stream.xs < x0 + size)
            & (stream.ys >= y0) & (stream.ys < y0 + size))
    return EventStream(size, size, stream.timestamps[keep],
                       stream.xs[keep] - x0, stream.ys[keep] - y0,
                       stream.polarities[keep], stream.trajectory,
                       duration=stream.duration)
