"""Bit-exact persistence: event streams, normal maps, model checkpoints,
CSV interchange, and 8-bit image renderings.

All binary formats are little-endian regardless of host, identified by
an 8-byte magic. Readers reject unknown magics, truncated payloads, and
payloads that violate the documented invariants.
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image

from .core import EVENT_DTYPE, EventStream, LightTrajectory, NormalMap
from .evaluation import ErrorMap
from .network import Model, MlpConfig

EVENT_MAGIC = b"EVPSEVT1"
NORMAL_MAGIC = b"EVPSNRM1"
MODEL_MAGIC = b"EVPSMDL1"

_EVENT_HEADER = struct.Struct("<8sIIddbdQ")

# Piecewise-linear error colormap (cold to hot); invalid pixels are
# plain black, distinct from the dark-blue cold end.
ERROR_COLOR_STOPS = (
    (0.00, (0, 0, 64)),
    (0.25, (0, 0, 255)),
    (0.50, (255, 0, 0)),
    (0.75, (255, 255, 0)),
    (1.00, (255, 255, 255)),
)


class MalformedFile(ValueError):
    """Raised when a file fails magic, size, or invariant checks."""


def _read_exact(fh, size, what):
    data = fh.read(size)
    if len(data) != size:
        raise MalformedFile(f"truncated {what}: wanted {size} bytes, got {len(data)}")
    return data


def write_events(stream: EventStream, path):
    stream.validate()
    records = np.empty(len(stream), dtype=EVENT_DTYPE)
    records["t"] = stream.timestamps
    records["x"] = stream.xs
    records["y"] = stream.ys
    records["p"] = stream.polarities
    traj = stream.trajectory
    header = _EVENT_HEADER.pack(EVENT_MAGIC, stream.width, stream.height,
                                traj.period, traj.elevation, traj.direction,
                                traj.azimuth_offset, len(stream))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(records.tobytes())


def read_events(path) -> EventStream:
    with open(path, "rb") as fh:
        header = _read_exact(fh, _EVENT_HEADER.size, "event header")
        magic, width, height, period, elevation, direction, offset, count = \
            _EVENT_HEADER.unpack(header)
        if magic != EVENT_MAGIC:
            raise MalformedFile(f"bad magic {magic!r}, expected {EVENT_MAGIC!r}")
        payload = fh.read()
    if len(payload) != count * EVENT_DTYPE.itemsize:
        raise MalformedFile(
            f"payload holds {len(payload)} bytes, header promises {count} events")
    records = np.frombuffer(payload, dtype=EVENT_DTYPE)
    try:
        trajectory = LightTrajectory(elevation, period, direction, offset)
        stream = EventStream(width, height, records["t"].copy(),
                             records["x"].copy(), records["y"].copy(),
                             records["p"].copy(), trajectory)
        stream.validate()
    except ValueError as exc:
        raise MalformedFile(f"invalid event payload: {exc}") from exc
    return stream


def write_normals(nmap: NormalMap, path):
    payload = np.where(nmap.mask[..., None], nmap.normals, 0.0)
    header = struct.pack("<8sII", NORMAL_MAGIC, nmap.width, nmap.height)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.astype("<f4").tobytes())


def read_normals(path) -> NormalMap:
    head = struct.Struct("<8sII")
    with open(path, "rb") as fh:
        magic, width, height = head.unpack(_read_exact(fh, head.size, "normal header"))
        if magic != NORMAL_MAGIC:
            raise MalformedFile(f"bad magic {magic!r}, expected {NORMAL_MAGIC!r}")
        payload = fh.read()
    expected = width * height * 3 * 4
    if len(payload) != expected:
        raise MalformedFile(
            f"payload holds {len(payload)} bytes, header dimensions need {expected}")
    normals = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    normals = normals.reshape(height, width, 3)
    mask = np.any(normals != 0.0, axis=2)
    norms = np.linalg.norm(normals[mask], axis=1)
    if norms.size and np.any(np.abs(norms - 1.0) > 1e-4):
        raise MalformedFile("valid pixels must hold unit normals (within 1e-4)")
    return NormalMap(normals, mask)


def write_model(model: Model, path):
    cfg = model.config
    parts = [MODEL_MAGIC, struct.pack("<I", len(model.weights))]
    for fan_in, fan_out in zip(cfg.widths[:-1], cfg.widths[1:]):
        parts.append(struct.pack("<II", fan_in, fan_out))
    parts.append(struct.pack("<d", cfg.dropout))
    for w, b in zip(model.weights, model.biases):
        parts.append(w.astype("<f8").tobytes())
        parts.append(b.astype("<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_model(path) -> Model:
    """Restore a checkpoint. The init seed is not persisted; the
    returned config carries seed 0."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 8, "model header")
        if magic != MODEL_MAGIC:
            raise MalformedFile(f"bad magic {magic!r}, expected {MODEL_MAGIC!r}")
        (n_layers,) = struct.unpack("<I", _read_exact(fh, 4, "layer count"))
        if n_layers < 1:
            raise MalformedFile("checkpoint holds no layers")
        dims = [struct.unpack("<II", _read_exact(fh, 8, "layer dims"))
                for _ in range(n_layers)]
        (dropout,) = struct.unpack("<d", _read_exact(fh, 8, "dropout rate"))
        widths = [dims[0][0]] + [out for _, out in dims]
        for i in range(1, n_layers):
            if dims[i][0] != dims[i - 1][1]:
                raise MalformedFile("layer dimensions do not chain")
        weights, biases = [], []
        for fan_in, fan_out in dims:
            wb = _read_exact(fh, fan_in * fan_out * 8, "weight matrix")
            weights.append(np.frombuffer(wb, dtype="<f8").reshape(fan_in, fan_out).copy())
            bb = _read_exact(fh, fan_out * 8, "bias vector")
            biases.append(np.frombuffer(bb, dtype="<f8").copy())
        if fh.read(1):
            raise MalformedFile("trailing bytes after model payload")
    try:
        config = MlpConfig(tuple(widths), dropout, seed=0)
        return Model(weights, biases, config)
    except ValueError as exc:
        raise MalformedFile(f"invalid model payload: {exc}") from exc


def export_events_csv(stream: EventStream, path):
    stream.validate()
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("t,x,y,p\n")
        for t, x, y, p in zip(stream.timestamps, stream.xs, stream.ys,
                              stream.polarities):
            fh.write(f"{t:.9f},{x},{y},{p}\n")


def import_events_csv(path, width=None, height=None,
                      trajectory: LightTrajectory | None = None) -> EventStream:
    """Parse the CSV interchange format; sensor dimensions default to
    the smallest grid containing every event."""
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != "t,x,y,p":
            raise MalformedFile(f"bad CSV header {header!r}, expected 't,x,y,p'")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise MalformedFile(f"line {lineno}: expected 4 fields, got {len(parts)}")
            try:
                t, x, y, p = float(parts[0]), int(parts[1]), int(parts[2]), int(parts[3])
            except ValueError as exc:
                raise MalformedFile(f"line {lineno}: {exc}") from exc
            if p not in (1, -1):
                raise MalformedFile(f"line {lineno}: polarity must be +1 or -1, got {p}")
            if t < 0 or x < 0 or y < 0:
                raise MalformedFile(f"line {lineno}: negative field")
            rows.append((t, x, y, p))
    t = np.array([r[0] for r in rows])
    x = np.array([r[1] for r in rows], dtype=np.uint16)
    y = np.array([r[2] for r in rows], dtype=np.uint16)
    p = np.array([r[3] for r in rows], dtype=np.int8)
    order = np.lexsort((x, y, t))
    if width is None:
        width = int(x.max()) + 1 if len(x) else 1
    if height is None:
        height = int(y.max()) + 1 if len(y) else 1
    stream = EventStream(width, height, t[order], x[order], y[order], p[order],
                         trajectory if trajectory is not None else LightTrajectory())
    try:
        stream.validate()
    except ValueError as exc:
        raise MalformedFile(f"invalid CSV events: {exc}") from exc
    return stream


def visualize_normals(nmap: NormalMap) -> np.ndarray:
    """Map components from [-1, 1] to [0, 255]; invalid pixels black."""
    rgb = np.round(255.0 * (nmap.normals + 1.0) / 2.0)
    rgb = np.clip(rgb, 0, 255).astype(np.uint8)
    return np.where(nmap.mask[..., None], rgb, np.uint8(0))


def visualize_error(errmap: ErrorMap, max_degrees: float = 45.0) -> np.ndarray:
    """Render errors through the fixed cold-to-hot map, clamped at max."""
    if not max_degrees > 0:
        raise ValueError("max_degrees must be positive")
    t = np.clip(errmap.degrees / max_degrees, 0.0, 1.0)
    stops = np.array([s for s, _ in ERROR_COLOR_STOPS])
    colors = np.array([c for _, c in ERROR_COLOR_STOPS], dtype=np.float64)
    rgb = np.stack([np.interp(t, stops, colors[:, ch]) for ch in range(3)], axis=-1)
    rgb = np.round(rgb).astype(np.uint8)
    return np.where(errmap.mask[..., None], rgb, np.uint8(0))


def save_image(rgb: np.ndarray, path):
    """Write an (H, W, 3) uint8 array as a lossless raster image."""
    Image.fromarray(np.ascontiguousarray(rgb), mode="RGB").save(path)


def load_image(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))
