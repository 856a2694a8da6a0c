"""Shared fixtures: one simulated sphere scene reused across test modules."""

from types import SimpleNamespace

import pytest

from evps import core, simulator


@pytest.fixture(scope="session")
def sphere_case():
    """64x64 spherical cap, two cycles, fixed threshold 0.2, no noise."""
    scene = simulator.make_scene("sphere", seed=3, width=64, height=64)
    trajectory = core.LightTrajectory()
    frames = simulator.render_sequence(scene, trajectory)
    threshold = core.ContrastThresholdModel(mean=0.2, std_dev=0.0, seed=7)
    stream = simulator.simulate_events(frames, threshold)
    cycle = simulator.select_cycle(stream, 1)
    return SimpleNamespace(scene=scene, trajectory=trajectory, frames=frames,
                           threshold=threshold, stream=stream, cycle=cycle)
