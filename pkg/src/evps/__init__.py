"""Event-based photometric stereo: simulate event streams under a light
rotating about the optical axis, then recover per-pixel surface normals
analytically or with a per-pixel MLP.

Submodules import lazily so the CLI can configure thread pools before
numpy loads.
"""

__version__ = "0.1.0"

_EXPORTS = {
    "ContrastThresholdModel": "core",
    "Event": "core",
    "EventStream": "core",
    "LightTrajectory": "core",
    "NormalMap": "core",
    "SceneConfig": "core",
    "light_direction": "core",
    "normalize_phase": "core",
    "shade": "core",
    "FrameSequence": "simulator",
    "Scene": "simulator",
    "center_crop": "simulator",
    "make_scene": "simulator",
    "render_sequence": "simulator",
    "select_cycle": "simulator",
    "simulate_events": "simulator",
    "ContrastSeries": "representation",
    "PixelDataset": "representation",
    "PolarityVector": "representation",
    "build_dataset": "representation",
    "contrast_series": "representation",
    "polarity_vector": "representation",
    "CosineParams": "analytic",
    "fit_cosine": "analytic",
    "normal_from_params": "analytic",
    "solve_map": "analytic",
    "MlpConfig": "network",
    "Model": "network",
    "TrainConfig": "network",
    "backward": "network",
    "cosine_loss": "network",
    "forward": "network",
    "infer_map": "network",
    "init_model": "network",
    "train": "network",
    "BinnedReport": "evaluation",
    "ErrorMap": "evaluation",
    "angular_error": "evaluation",
    "error_map": "evaluation",
    "mae": "evaluation",
    "mae_by_event_count": "evaluation",
    "read_events": "io",
    "read_model": "io",
    "read_normals": "io",
    "visualize_error": "io",
    "visualize_normals": "io",
    "write_events": "io",
    "write_model": "io",
    "write_normals": "io",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    if name in _EXPORTS:
        import importlib

        module = importlib.import_module(f".{_EXPORTS[name]}", __name__)
        return getattr(module, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
