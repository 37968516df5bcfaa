"""Track geometry, generation, and raceline optimizer tests."""

import math

import numpy as np
import pytest

from raceduel.track import (
    ClosedPolyline,
    OffTrackError,
    Raceline,
    TrackModel,
    compute_raceline,
    generate_training_tracks,
    make_ring_track,
    make_rounded_rect_track,
    menger_curvature,
    optimal_lane_table,
)


@pytest.fixture(scope="module")
def ring():
    return make_ring_track(radius=10.0)


@pytest.fixture(scope="module")
def rect():
    return make_rounded_rect_track()


class TestFrenet:
    def test_on_centerline_zero_offsets(self, ring):
        s = 7.3
        pos = ring.center.point_at(s)
        heading = ring.center.heading_at(s)
        f = ring.frenet(pos, heading)
        assert f.e1 == pytest.approx(0.0, abs=1e-9)
        assert f.e2 == pytest.approx(0.0, abs=1e-9)
        assert f.s == pytest.approx(s, abs=1e-6)

    def test_ccw_ring_outward_is_negative_e1(self, ring):
        # closed-form circle oracle: point at radius R + d, tangent heading
        R, d = 10.0, 0.35
        th = 1.1
        pos = np.array([(R + d) * math.cos(th), (R + d) * math.sin(th)])
        heading = th + math.pi / 2  # CCW tangent
        f = ring.frenet(pos, heading)
        assert f.e1 == pytest.approx(-d, abs=2e-3)
        assert abs(f.e2) < 2e-2

    def test_roundtrip_identity(self, ring):
        rng = np.random.default_rng(3)
        L = ring.center.total_length
        for _ in range(1000):
            s = rng.uniform(0, L)
            e1 = rng.uniform(-ring.half_width, ring.half_width)
            e2 = rng.uniform(-0.5, 0.5)
            pos, heading = ring.from_frenet(s, e1, e2)
            f = ring.frenet(pos, heading)
            assert f.s == pytest.approx(s, abs=1e-6)
            assert f.e1 == pytest.approx(e1, abs=1e-6)
            assert f.e2 == pytest.approx(e2, abs=1e-6)

    def test_far_point_raises(self, ring):
        with pytest.raises(OffTrackError):
            ring.frenet(np.array([0.0, 0.0]), 0.0)  # ring center, 10 m away


class TestLanes:
    def test_center_is_middle_lane(self, ring):
        assert ring.lane_of(0.0) == 1
        assert ring.center_lane == 1

    def test_boundary_belongs_to_higher_index(self, ring):
        b = -ring.half_width + ring.lane_width
        assert ring.lane_of(b) == 1
        assert ring.lane_of(b - 1e-9) == 0

    def test_extremes_clamped(self, ring):
        assert ring.lane_of(-ring.half_width - 1.0) == 0
        assert ring.lane_of(ring.half_width + 1.0) == ring.n_lanes - 1

    def test_lane_center_inverts(self, ring):
        for lane in range(ring.n_lanes):
            assert ring.lane_of(ring.lane_center(lane)) == lane


class TestGeneration:
    def test_sixteen_tracks_split_8_8(self):
        tracks = generate_training_tracks(seed=11)
        assert len(tracks) == 16
        dirs = [t.direction for t in tracks]
        assert dirs.count("CW") == 8
        assert dirs.count("CCW") == 8

    def test_deterministic_per_seed(self):
        a = generate_training_tracks(seed=5)
        b = generate_training_tracks(seed=5)
        for ta, tb in zip(a, b):
            assert np.array_equal(ta.center.pts, tb.center.pts)

    def test_steep_exceeds_moderate_per_orientation(self):
        tracks = generate_training_tracks(seed=11)
        for direction in ("CW", "CCW"):
            steep = [
                float(np.max(np.abs(menger_curvature(t.center.pts))))
                for t in tracks
                if t.meta["direction"] == direction and t.meta["style"] == "steep"
            ]
            moderate = [
                float(np.max(np.abs(menger_curvature(t.center.pts))))
                for t in tracks
                if t.meta["direction"] == direction and t.meta["style"] == "moderate"
            ]
            assert len(steep) == len(moderate) == 4
            assert min(steep) > max(moderate)

    def test_tracks_are_simple_and_wide_enough(self):
        for t in generate_training_tracks(seed=3)[:4]:
            assert t.center.total_length > 30.0
            assert t.half_width > 0.2  # wider than the default car


class TestRaceline:
    def test_zero_iterations_equals_centerline(self, ring):
        rl = compute_raceline(ring, iterations=0)
        assert np.allclose(rl.line.pts, ring.center.pts)
        assert all(lane == ring.center_lane for lane in rl.optimal_lanes)

    def test_objective_non_increasing(self, rect):
        rl = compute_raceline(rect, iterations=150)
        h = rl.objective_history
        assert all(h[i + 1] <= h[i] + 1e-15 for i in range(len(h) - 1))

    def test_rounded_rect_curvature_reduced(self, rect):
        rl = compute_raceline(rect, iterations=300)
        k_center = float(np.max(np.abs(rect.center.curvature)))
        k_race = float(np.max(np.abs(rl.curvature)))
        assert k_race < k_center

    def test_ring_converges_to_outer_clamp(self, ring):
        margin = 0.15
        rl = compute_raceline(ring, iterations=300, margin=margin)
        expect = 1.0 / (10.0 + ring.half_width - margin)
        k_race = float(np.max(np.abs(rl.curvature)))
        assert k_race == pytest.approx(expect, rel=0.05)

    def test_raceline_stays_within_margin(self, rect):
        margin = 0.15
        rl = compute_raceline(rect, iterations=200, margin=margin)
        for p in rl.line.pts:
            _, _, e1, _ = rect.center.project(p)
            assert abs(e1) <= rect.half_width - margin + 1e-6

    def test_mirroring_track_mirrors_raceline(self):
        t = make_rounded_rect_track(length=16.0, width=9.0, corner_radius=2.0)
        tm = t.mirrored()
        rl = compute_raceline(t, iterations=120)
        rlm = compute_raceline(tm, iterations=120)
        flipped = rl.line.pts.copy()
        flipped[:, 1] = -flipped[:, 1]
        np.testing.assert_allclose(rlm.line.pts, flipped, atol=1e-9)

    def test_json_roundtrip(self, rect, tmp_path):
        rl = compute_raceline(rect, iterations=50)
        p = tmp_path / "raceline.json"
        rl.save(p)
        loaded = Raceline.load(p)
        np.testing.assert_allclose(loaded.line.pts, rl.line.pts)
        assert loaded.optimal_lanes == rl.optimal_lanes


class TestOptimalLaneTable:
    def test_centerline_gives_middle_lane(self, ring):
        rl = compute_raceline(ring, iterations=0)
        table = optimal_lane_table(rl, ring)
        assert table == [ring.center_lane] * ring.n_checkpoints

    def test_left_hugging_line_gives_leftmost_lane(self, ring):
        offsets = np.full(ring.n_checkpoints, ring.half_width - 0.1)
        pts = ring.center.offset_polyline(ring.half_width - 0.1)
        rl = Raceline(
            line=ClosedPolyline(pts),
            offsets=offsets,
            optimal_lanes=[],
            converged=True,
        )
        table = optimal_lane_table(rl, ring)
        assert table == [ring.n_lanes - 1] * ring.n_checkpoints

    def test_matches_direct_band_oracle(self, ring):
        # build a raceline from known per-checkpoint offsets, keeping them
        # clear of band boundaries so interpolation cannot flip lanes
        rng = np.random.default_rng(9)
        k = ring.n_checkpoints
        lane_targets = rng.integers(0, ring.n_lanes, size=k)
        offsets = np.array([ring.lane_center(v) for v in lane_targets])
        from raceduel.track import _periodic_spline_eval

        s_dense = ring.center._cum[:-1]
        alpha = _periodic_spline_eval(
            ring.checkpoint_s, offsets, ring.center.total_length, s_dense
        )
        normals = np.array([ring.center.normal_at(s) for s in s_dense])
        pts = ring.center.pts + alpha[:, None] * normals
        rl = Raceline(
            line=ClosedPolyline(pts), offsets=offsets, optimal_lanes=[], converged=True
        )
        table = optimal_lane_table(rl, ring)
        oracle = [ring.lane_of(float(o)) for o in offsets]
        mismatches = sum(1 for a, b in zip(table, oracle) if a != b)
        assert mismatches == 0


class TestTrackIO:
    def test_json_roundtrip(self, rect, tmp_path):
        p = tmp_path / "track.json"
        rect.save(p)
        loaded = TrackModel.load(p)
        np.testing.assert_allclose(loaded.center.pts, rect.center.pts)
        assert loaded.half_width == rect.half_width
        assert loaded.n_lanes == rect.n_lanes
        assert loaded.direction == rect.direction
        assert loaded.n_checkpoints == rect.n_checkpoints

    def test_direction_mismatch_rejected(self, rect):
        d = rect.to_dict()
        d["direction"] = "CW" if rect.direction == "CCW" else "CCW"
        with pytest.raises(ValueError):
            TrackModel.from_dict(d)

    def test_checkpoints_uniform_and_increasing(self, rect):
        ds = np.diff(rect.checkpoint_s)
        assert np.all(ds > 0)
        assert np.allclose(ds, rect.spacing)


class TestGenerationFailure:
    def test_impossible_band_raises(self):
        import numpy as np
        from raceduel.track import GenerationError, _generate_banded_track

        rng = np.random.default_rng(0)
        with pytest.raises(GenerationError):
            _generate_banded_track(rng, (10.0, 11.0), 0.8, 3, 1.6, retries=5)
