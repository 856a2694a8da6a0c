import numpy as np
import pytest

from evps import core, simulator


def make_frames(values, times=None, trajectory=None):
    """Single-pixel frame sequence from a list of intensities."""
    values = np.asarray(values, dtype=np.float64).reshape(-1, 1, 1)
    if times is None:
        times = np.linspace(0.0, 1.0, len(values))
    if trajectory is None:
        trajectory = core.LightTrajectory()
    return simulator.FrameSequence(values, np.asarray(times), trajectory)


def fixed_threshold(c):
    return core.ContrastThresholdModel(mean=c, std_dev=0.0, seed=0)


class TestMakeScene:
    def test_sphere_center_points_up(self):
        scene = simulator.make_scene("sphere", width=128, height=128)
        center = scene.normals.normals[64, 64]
        assert np.linalg.norm(center - [0, 0, 1]) < 0.02

    def test_sphere_oblique_pixel(self):
        # with radius 80 the point cx + r/sqrt(2) lands on the grid at x=120
        scene = simulator.make_scene("sphere", width=128, height=128, radius=80.0)
        x = int(round(63.5 + 80.0 / np.sqrt(2)))
        got = scene.normals.normals[63, x]
        assert np.linalg.norm(got - [np.sqrt(0.5), 0, np.sqrt(0.5)]) < 0.02

    def test_sphere_default_radius_keeps_slopes_under_45deg(self):
        scene = simulator.make_scene("sphere", width=128, height=128)
        assert scene.normals.mask.all()
        assert scene.normals.normals[..., 2].min() > np.cos(np.pi / 4) - 0.01

    def test_ramp_constant_normal(self):
        scene = simulator.make_scene("ramp", width=16, height=16, tilt=np.pi / 6)
        want = np.array([-0.5, 0.0, np.sqrt(3) / 2])
        assert np.allclose(scene.normals.normals, want, atol=1e-12)

    def test_bumps_unit_normals_facing_camera(self):
        scene = simulator.make_scene("gaussian-bumps", seed=5, width=32, height=32)
        norms = np.linalg.norm(scene.normals.normals, axis=2)
        assert np.allclose(norms, 1.0, atol=1e-12)
        assert scene.normals.normals[..., 2].min() > 0

    def test_albedo_range(self):
        scene = simulator.make_scene("gaussian-bumps", seed=2, width=32, height=32)
        assert scene.config.albedo.min() >= 0.3
        assert scene.config.albedo.max() <= 1.0
        assert np.all(scene.config.specular_weight == 0.0)

    def test_randomized_brdf_range(self):
        scene = simulator.make_scene("sphere", seed=2, width=32, height=32,
                                     randomize_brdf=True)
        assert scene.config.specular_weight.min() >= 0.0
        assert scene.config.specular_weight.max() <= 0.5
        assert scene.config.specular_weight.max() > 0.0

    def test_explicit_specular_override(self):
        scene = simulator.make_scene("sphere", seed=2, width=32, height=32,
                                     specular_weight=0.45, specular_exponent=60)
        assert np.all(scene.config.specular_weight == 0.45)
        assert np.all(scene.config.specular_exponent == 60.0)

    def test_seed_determinism(self):
        a = simulator.make_scene("gaussian-bumps", seed=9, width=32, height=32)
        b = simulator.make_scene("gaussian-bumps", seed=9, width=32, height=32)
        assert np.array_equal(a.normals.normals, b.normals.normals)
        assert np.array_equal(a.config.albedo, b.config.albedo)

    @pytest.mark.parametrize("kw", [
        {"kind": "cone"}, {"kind": "sphere", "width": 4},
        {"kind": "sphere", "height": 7}, {"kind": "sphere", "radius": -1.0},
        {"kind": "ramp", "tilt": np.pi / 2},
    ])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            simulator.make_scene(**{"kind": "sphere", "width": 16, "height": 16, **kw})


class TestRenderSequence:
    def test_default_frame_count(self, sphere_case):
        assert sphere_case.frames.frames.shape[0] == 200

    def test_apex_intensity_constant(self):
        # odd size puts a pixel exactly at the apex where beta = 0
        scene = simulator.make_scene("sphere", width=65, height=65)
        traj = core.LightTrajectory()
        frames = simulator.render_sequence(scene, traj, frames_per_cycle=32, cycles=1)
        apex = frames.frames[:, 32, 32]
        want = scene.config.albedo[32, 32] * np.sin(traj.elevation)
        assert np.allclose(apex, want, atol=1e-12)

    def test_ramp_is_exact_sinusoid(self):
        scene = simulator.make_scene("ramp", width=8, height=8, tilt=np.pi / 6)
        traj = core.LightTrajectory()
        frames = simulator.render_sequence(scene, traj, frames_per_cycle=64, cycles=1)
        theta = core.normalize_phase(frames.times, traj)
        design = np.stack([np.cos(theta), np.sin(theta), np.ones_like(theta)], axis=1)
        pixel = frames.frames[:, 3, 5]
        coef, _, _, _ = np.linalg.lstsq(design, pixel, rcond=None)
        assert np.abs(design @ coef - pixel).max() < 1e-12

    def test_floor_applied_in_shadow(self):
        # steep ramp spends part of the cycle in attached shadow
        scene = simulator.make_scene("ramp", width=8, height=8, tilt=1.2)
        frames = simulator.render_sequence(scene, core.LightTrajectory(),
                                           frames_per_cycle=32, cycles=1)
        floor = core.INTENSITY_FLOOR_FRACTION * scene.config.light_intensity
        assert frames.frames.min() == pytest.approx(floor)

    def test_rejects_degenerate_sampling(self):
        scene = simulator.make_scene("ramp", width=8, height=8)
        with pytest.raises(ValueError):
            simulator.render_sequence(scene, core.LightTrajectory(), frames_per_cycle=4)
        with pytest.raises(ValueError):
            simulator.render_sequence(scene, core.LightTrajectory(), cycles=0)

    def test_frame_sequence_validation(self):
        with pytest.raises(ValueError):
            make_frames([1.0, 2.0], times=[0.5, 0.1])
        with pytest.raises(ValueError):
            make_frames([1.0, -1.0])


class TestSimulateEvents:
    def test_rising_pixel_emits_two_positive(self):
        stream = simulator.simulate_events(make_frames([1.0, 1.5], times=[0.0, 0.5]),
                                           fixed_threshold(0.2))
        assert stream.polarities.tolist() == [1, 1]
        # crossings of ln(1.5) ~ 0.405 at levels 0.2 and 0.4
        want = 0.5 * np.array([0.2, 0.4]) / np.log(1.5)
        assert np.allclose(stream.timestamps, want, atol=1e-12)

    def test_constant_pixel_is_silent(self):
        stream = simulator.simulate_events(make_frames([2.0, 2.0, 2.0]),
                                           fixed_threshold(0.2))
        assert len(stream) == 0

    def test_rise_and_fall_balance(self):
        stream = simulator.simulate_events(
            make_frames([1.0, 1.5, 1.0], times=[0.0, 0.5, 1.0]), fixed_threshold(0.2))
        assert stream.polarities.tolist() == [1, 1, -1, -1]
        # equal thresholds up and down: the reference returns to its start,
        # so the signed count is zero regardless of path
        assert stream.polarities.sum() == 0
        assert stream.timestamps[-1] == pytest.approx(1.0)

    def test_polarity_matches_local_slope(self, sphere_case):
        frames, stream = sphere_case.frames, sphere_case.stream
        logs = np.log(frames.frames.reshape(len(frames.frames), -1))
        pix = stream.ys.astype(int) * stream.width + stream.xs.astype(int)
        interval = np.searchsorted(frames.times, stream.timestamps, side="left") - 1
        interval = np.clip(interval, 0, len(frames.times) - 2)
        slopes = logs[interval + 1, pix] - logs[interval, pix]
        assert np.all(np.sign(slopes) == stream.polarities)

    def test_conservation_at_stream_end(self, sphere_case):
        frames, stream = sphere_case.frames, sphere_case.stream
        c = sphere_case.threshold.mean
        logs = np.log(frames.frames.reshape(len(frames.frames), -1))
        pix = stream.ys.astype(int) * stream.width + stream.xs.astype(int)
        signed = np.zeros(logs.shape[1])
        np.add.at(signed, pix, stream.polarities)
        assert np.all(np.abs(c * signed - (logs[-1] - logs[0])) < c)

    def test_sorted_and_in_range(self, sphere_case):
        sphere_case.stream.validate()
        t = sphere_case.stream.timestamps
        assert np.all(np.diff(t) >= 0)

    def test_determinism(self, sphere_case):
        again = simulator.simulate_events(sphere_case.frames, sphere_case.threshold)
        assert np.array_equal(again.timestamps, sphere_case.stream.timestamps)
        assert np.array_equal(again.xs, sphere_case.stream.xs)
        assert np.array_equal(again.ys, sphere_case.stream.ys)
        assert np.array_equal(again.polarities, sphere_case.stream.polarities)

    def test_steady_state_cycles_repeat(self):
        # after the first cycle the reference levels settle: cycles 2 and 3
        # produce identical per-pixel event counts under a fixed threshold
        scene = simulator.make_scene("sphere", seed=4, width=32, height=32)
        frames = simulator.render_sequence(scene, core.LightTrajectory(), cycles=3)
        stream = simulator.simulate_events(frames, fixed_threshold(0.2))
        counts = []
        for k in (1, 2):
            cyc = simulator.select_cycle(stream, k)
            grid = np.zeros(32 * 32, dtype=int)
            np.add.at(grid, cyc.ys.astype(int) * 32 + cyc.xs.astype(int), 1)
            counts.append(grid)
        assert np.array_equal(counts[0], counts[1])

    def test_gaussian_threshold_changes_events(self):
        frames = make_frames(2.0 + np.sin(np.linspace(0, 2 * np.pi, 40)),
                             times=np.linspace(0, 1, 40))
        fixed = simulator.simulate_events(frames, fixed_threshold(0.2))
        noisy = simulator.simulate_events(
            frames, core.ContrastThresholdModel(0.2, 0.05, seed=1))
        assert len(fixed) > 0
        assert not np.array_equal(fixed.timestamps, noisy.timestamps)

    def test_needs_two_frames(self):
        with pytest.raises(ValueError):
            simulator.simulate_events(make_frames([1.0], times=[0.0]),
                                      fixed_threshold(0.2))


class TestSelectCycle:
    def stream_at(self, times, duration=None):
        events = [core.Event(t, 0, 0, 1) for t in times]
        return core.EventStream.from_events(1, 1, events, duration=duration)

    def test_second_cycle_rebased(self):
        out = simulator.select_cycle(self.stream_at([0.3, 0.9, 1.2, 1.8]), 1)
        assert np.allclose(out.timestamps, [0.2, 0.8])
        assert out.duration == 1.0

    def test_first_cycle_unchanged(self):
        out = simulator.select_cycle(self.stream_at([0.3, 0.9, 1.2, 1.8]), 0)
        assert np.allclose(out.timestamps, [0.3, 0.9])

    def test_empty_stream_passes_through(self):
        out = simulator.select_cycle(self.stream_at([]), 1)
        assert len(out) == 0

    def test_rejects_uncovered_cycle_by_duration(self):
        with pytest.raises(core.CycleNotCovered):
            simulator.select_cycle(self.stream_at([0.5, 1.5], duration=2.0), 2)

    def test_rejects_uncovered_cycle_by_last_event(self):
        with pytest.raises(core.CycleNotCovered):
            simulator.select_cycle(self.stream_at([0.3, 0.9]), 1)

    def test_rejects_negative_index(self):
        with pytest.raises(ValueError):
            simulator.select_cycle(self.stream_at([0.5]), -1)

    def test_simulated_duration_covers_whole_cycles(self, sphere_case):
        assert sphere_case.stream.duration == pytest.approx(2.0)
        assert sphere_case.cycle.timestamps.max() < 1.0


class TestCenterCrop:
    def test_crop_shifts_coordinates(self):
        events = [core.Event(0.1, 1, 1, 1), core.Event(0.2, 2, 2, -1),
                  core.Event(0.3, 0, 3, 1)]
        stream = core.EventStream.from_events(4, 4, events)
        out = simulator.center_crop(stream, 2)
        assert (out.width, out.height) == (2, 2)
        assert out.xs.tolist() == [0, 1]
        assert out.ys.tolist() == [0, 1]
        assert np.allclose(out.timestamps, [0.1, 0.2])

    def test_rejects_oversize(self):
        stream = core.EventStream.from_events(4, 4, [])
        with pytest.raises(ValueError):
            simulator.center_crop(stream, 8)
