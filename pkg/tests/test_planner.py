"""Discrete game planner tests against the exhaustive minimax oracle."""

import numpy as np
import pytest

from raceduel.dynamics import VehicleState
from raceduel.planner import (
    CostMode,
    DiscreteState,
    GameNode,
    NoLaneError,
    SpeedBins,
    TransitionModel,
    collision_excluded,
    discretize,
    feasible_transitions,
    plan,
    plan_cost,
)
from raceduel.track import make_ring_track, make_single_bend_track, compute_raceline

from game_oracle import solve as oracle_solve


def make_model(**kw):
    defaults = dict(spacing=1.6, lane_width=0.5333333333333333, n_lanes=3,
                    bins=SpeedBins(n_bins=3, bin_width=2.0),
                    accel_max=6.0, decel_max=8.0, min_sep_time=0.5)
    defaults.update(kw)
    return TransitionModel(**defaults)


def oracle_cfg(model: TransitionModel, lanes):
    return {
        "spacing": model.spacing,
        "lane_width": model.lane_width,
        "n_lanes": model.n_lanes,
        "n_bins": model.bins.n_bins,
        "bin_width": model.bins.bin_width,
        "accel_max": model.accel_max,
        "decel_max": model.decel_max,
        "min_sep_time": model.min_sep_time,
        "lanes": list(lanes),
    }


def as_tuple(s: DiscreteState):
    return (s.checkpoint, s.lane, s.speed_bin, s.time)


class TestSpeedBins:
    def test_midpoint_representative(self):
        b = SpeedBins(n_bins=4, bin_width=2.0)
        assert b.rep(0) == 1.0
        assert b.rep(3) == 7.0
        assert b.window(2) == (4.0, 6.0)

    def test_binning_clamps(self):
        b = SpeedBins(n_bins=4, bin_width=2.0)
        assert b.bin_of(-3.0) == 0
        assert b.bin_of(100.0) == 3
        assert b.bin_of(5.0) == 2


class TestDiscretize:
    def test_center_pose_bins(self):
        track = make_ring_track(radius=10.0)
        bins = SpeedBins(n_bins=6, bin_width=2.0)
        s_query = 3 * track.spacing + 0.3
        pos, heading = track.from_frenet(s_query, 0.0, 0.0)
        st = VehicleState(pos[0], pos[1], heading, vx=5.0, vy=0, omega=0)
        d = discretize(st, track, bins, time=2.5)
        assert d.lane == track.center_lane
        assert d.speed_bin == 2
        assert d.checkpoint == 3
        assert d.time == 2.5
        assert d.wear_bin == 0

    def test_boundary_goes_to_higher_lane(self):
        track = make_ring_track(radius=10.0)
        e_boundary = -track.half_width + track.lane_width + 1e-6
        pos, heading = track.from_frenet(5.0, e_boundary, 0.0)
        st = VehicleState(pos[0], pos[1], heading, 1.0, 0, 0)
        assert discretize(st, track).lane == 1

    def test_off_track_raises(self):
        track = make_ring_track(radius=10.0)
        pos, heading = track.from_frenet(5.0, track.half_width + 0.2, 0.0)
        st = VehicleState(pos[0], pos[1], heading, 1.0, 0, 0)
        with pytest.raises(NoLaneError):
            discretize(st, track)

    def test_random_states_match_band_arithmetic(self):
        track = make_ring_track(radius=10.0)
        bins = SpeedBins(n_bins=6, bin_width=2.0)
        rng = np.random.default_rng(0)
        for _ in range(200):
            s = rng.uniform(0, track.center.total_length)
            e1 = rng.uniform(-track.half_width + 1e-6, track.half_width - 1e-6)
            v = rng.uniform(0, 12)
            pos, heading = track.from_frenet(s, e1, 0.0)
            st = VehicleState(pos[0], pos[1], heading, v, 0, 0)
            d = discretize(st, track, bins)
            lane_direct = min(
                max(int((e1 + track.half_width) // track.lane_width), 0),
                track.n_lanes - 1,
            )
            assert d.lane == lane_direct
            assert d.speed_bin == min(int(v // 2.0), 5)
            assert d.checkpoint == int(s // track.spacing) % track.n_checkpoints


class TestTransitions:
    def test_same_lane_same_bin_time(self):
        m = make_model()
        s = DiscreteState(4, 1, 1, 0, 10.0)
        nxt = feasible_transitions(s, m)
        match = [n for n, _ in nxt if n.lane == 1 and n.speed_bin == 1]
        assert len(match) == 1
        assert match[0].time == pytest.approx(10.0 + m.spacing / 3.0)
        assert match[0].checkpoint == 5

    def test_accel_violating_jump_absent(self):
        # 1 -> 5 m/s over 1.6 m needs 7.5 m/s^2 > 6
        m = make_model()
        nxt = feasible_transitions(DiscreteState(0, 1, 0, 0, 0.0), m)
        assert not any(n.speed_bin == 2 and n.lane == 1 for n, _ in nxt)

    def test_full_table_matches_enumeration_oracle(self):
        m = make_model(bins=SpeedBins(n_bins=4, bin_width=2.0))
        cfg = oracle_cfg(m, [1])
        from game_oracle import enumerate_moves

        for lane in range(3):
            for b in range(4):
                got = [(n.lane, n.speed_bin, round(t, 12))
                       for n, t in feasible_transitions(
                           DiscreteState(0, lane, b, 0, 0.0), m)]
                want = [(l2, b2, round(dt, 12))
                        for l2, b2, dt in enumerate_moves(cfg, lane, b)]
                assert got == want


class TestCollisionExcluded:
    def test_same_cell_zero_gap(self):
        a = DiscreteState(3, 1, 0, 0, 5.0)
        b = DiscreteState(3, 1, 2, 0, 5.0)
        assert collision_excluded(a, b, 0.5)

    def test_different_lane_not_excluded(self):
        a = DiscreteState(3, 1, 0, 0, 5.0)
        b = DiscreteState(3, 2, 0, 0, 5.0)
        assert not collision_excluded(a, b, 0.5)

    def test_boundary_gap_allowed(self):
        a = DiscreteState(3, 1, 0, 0, 5.0)
        b = DiscreteState(3, 1, 0, 0, 5.5)
        assert not collision_excluded(a, b, 0.5)


class TestPlanCost:
    def test_exact_match_zero(self):
        states = [DiscreteState(i, 1, 0, 0, 0) for i in range(1, 5)]
        assert plan_cost(states, [1, 1, 1, 1, 1]) == 0.0

    def test_one_off_lane(self):
        states = [DiscreteState(1, 0, 0, 0, 0)]
        assert plan_cost(states, [1, 1]) == 1.0

    def test_random_matches_direct_sum(self):
        rng = np.random.default_rng(5)
        lanes = list(rng.integers(0, 3, size=10))
        states = [DiscreteState(i, int(rng.integers(0, 3)), 0, 0, 0)
                  for i in range(1, 30)]
        want = sum((lanes[s.checkpoint % 10] - s.lane) ** 2 for s in states)
        assert plan_cost(states, lanes) == want


def far_opponent(cp=0, lane=0, sbin=1):
    # arrival far in the future: never inside any exclusion window
    return DiscreteState(cp, lane, sbin, 0, 1e5)


class TestPlan:
    def test_straight_center_stays_center(self):
        m = make_model(bins=SpeedBins(n_bins=1, bin_width=2.0))
        lanes = [1] * 8
        root = GameNode(DiscreteState(0, 1, 0, 0, 0.0), far_opponent(sbin=0))
        res = plan(root, lanes, m, budget=500000, rng_seed=1, horizon=5)
        assert res.cost == 0.0
        assert all(s.lane == 1 for s in res.my_plan)
        assert res.solved and not res.degraded
        oracle_val = oracle_solve(oracle_cfg(m, lanes), as_tuple(root.my_state),
                                  as_tuple(root.opp_state), 5, "raceline")
        assert res.cost == oracle_val[0]

    def test_blocked_checkpoint_deviates_one_lane(self):
        m = make_model(bins=SpeedBins(n_bins=2, bin_width=2.0),
                       min_sep_time=0.25)
        lanes = [1] * 8
        # opponent holds the raceline lane at cp 1 at t=0.6: both speed-bin
        # arrivals from the root (0.533 and 0.8) land inside the window
        me = DiscreteState(0, 1, 1, 0, 0.0)
        opp = DiscreteState(1, 1, 1, 0, 0.6)
        res = plan(GameNode(me, opp), lanes, m, budget=500000, rng_seed=3,
                   horizon=3)
        assert res.solved
        assert res.cost == 1.0
        deviations = [s for s in res.my_plan if s.lane != 1]
        assert len(deviations) == 1
        assert deviations[0].checkpoint == 1
        oracle_val = oracle_solve(oracle_cfg(m, lanes), as_tuple(me),
                                  as_tuple(opp), 3, "raceline")
        assert oracle_val[0] == res.cost

    # horizon/bin combos sized so exhaustive enumeration stays tractable
    SMALL_INSTANCES = [(2, 2), (2, 3), (3, 1), (3, 2), (4, 1), (5, 1)]

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_exhaustive_minimax(self, seed):
        rng = np.random.default_rng(seed)
        horizon, n_bins = self.SMALL_INSTANCES[
            int(rng.integers(0, len(self.SMALL_INSTANCES)))
        ]
        m = make_model(bins=SpeedBins(n_bins=n_bins, bin_width=2.0),
                       min_sep_time=float(rng.uniform(0.1, 0.6)))
        lanes = [int(v) for v in rng.integers(0, 3, size=8)]
        mode = CostMode.RACELINE_DISTANCE if rng.random() < 0.5 else CostMode.MIN_TIME
        me = DiscreteState(0, int(rng.integers(0, 3)),
                           int(rng.integers(0, n_bins)), 0, 0.0)
        opp = DiscreteState(int(rng.integers(0, 2)), int(rng.integers(0, 3)),
                            int(rng.integers(0, n_bins)), 0,
                            float(rng.uniform(0, 0.8)))
        res = plan(GameNode(me, opp), lanes, m, budget=2_000_000,
                   cost_mode=mode, rng_seed=seed, horizon=horizon)
        assert res.solved, "budget must fully solve these instance sizes"
        c = oracle_solve(
            oracle_cfg(m, lanes), as_tuple(me), as_tuple(opp), horizon,
            "raceline" if mode is CostMode.RACELINE_DISTANCE else "mintime",
        )
        assert res.my_plan[0].checkpoint == me.checkpoint + 1
        if mode is CostMode.MIN_TIME:
            # result cost is the absolute final-time gap; the oracle sums
            # future segment times only
            expect = c[0] + (me.time - opp.time)
        else:
            expect = c[0]
        assert res.cost == pytest.approx(expect, abs=1e-9)

    def test_emitted_plans_obey_invariants(self):
        m = make_model()
        lanes = [1, 2, 2, 1, 0, 0, 1, 1]
        me = DiscreteState(0, 1, 1, 0, 0.0)
        opp = DiscreteState(0, 2, 1, 0, 0.05)
        res = plan(GameNode(me, opp), lanes, m, budget=100000, rng_seed=7,
                   horizon=5)
        for plan_states, start in ((res.my_plan, me), (res.opp_plan, opp)):
            cps = [start.checkpoint] + [s.checkpoint for s in plan_states]
            assert all(b - a == 1 for a, b in zip(cps, cps[1:]))
            times = [start.time] + [s.time for s in plan_states]
            assert all(b >= a for a, b in zip(times, times[1:]))
        by_cp = {s.checkpoint: s for s in res.my_plan}
        for s in res.opp_plan:
            mine = by_cp.get(s.checkpoint)
            if mine is not None:
                assert not collision_excluded(mine, s, m.min_sep_time)

    def test_deterministic_per_seed(self):
        m = make_model()
        lanes = [1, 0, 2, 1, 1, 2, 0, 1]
        me = DiscreteState(0, 1, 1, 0, 0.0)
        opp = DiscreteState(0, 0, 1, 0, 0.1)
        a = plan(GameNode(me, opp), lanes, m, budget=500, rng_seed=11, horizon=4)
        b = plan(GameNode(me, opp), lanes, m, budget=500, rng_seed=11, horizon=4)
        assert a.to_dict() == b.to_dict()

    def test_min_time_vs_raceline_tradeoff(self):
        # single-bend track: the raceline swings; raceline mode tracks it,
        # min-time mode stays put and arrives no later
        track = make_single_bend_track()
        rl = compute_raceline(track)
        lanes = rl.optimal_lanes
        # find a horizon window where the lane table moves around
        horizon = 6
        start = next(
            i for i in range(track.n_checkpoints)
            if len({lanes[(i + j) % len(lanes)] for j in range(1, horizon + 1)}) > 1
        )
        root_lane = lanes[(start + 1) % len(lanes)]
        m = TransitionModel.from_track(track, bins=SpeedBins(3, 2.0))
        me = DiscreteState(start, root_lane, 1, 0, 0.0)
        node = GameNode(me, far_opponent(start))
        res_rl = plan(node, lanes, m, budget=20000, rng_seed=0,
                      cost_mode=CostMode.RACELINE_DISTANCE, horizon=horizon)
        res_mt = plan(node, lanes, m, budget=20000, rng_seed=0,
                      cost_mode=CostMode.MIN_TIME, horizon=horizon)
        cost_rl = plan_cost(res_rl.my_plan, lanes)
        cost_mt = plan_cost(res_mt.my_plan, lanes)
        assert cost_rl < cost_mt
        assert res_mt.my_plan[-1].time <= res_rl.my_plan[-1].time

    def test_budget_validation(self):
        m = make_model()
        with pytest.raises(ValueError):
            plan(GameNode(DiscreteState(0, 1, 1, 0, 0.0), far_opponent()),
                 [1] * 8, m, budget=0)


class TestPlanExport:
    def test_json_payload_schema(self):
        m = make_model(bins=SpeedBins(n_bins=2, bin_width=2.0))
        lanes = [1] * 8
        res = plan(GameNode(DiscreteState(0, 1, 1, 0, 0.0), far_opponent()),
                   lanes, m, budget=2000, rng_seed=0, horizon=3)
        import json

        payload = json.loads(res.to_json())
        assert set(payload) == {"my_plan", "opp_plan", "cost", "degraded",
                                "solved"}
        for entry in payload["my_plan"]:
            assert set(entry) == {"checkpoint", "lane", "speed_bin", "time"}
        assert [e["checkpoint"] for e in payload["my_plan"]] == [1, 2, 3]


class TestFallbackPlan:
    def test_no_feasible_move_degrades_to_stay_in_lane(self):
        # negative accel window rules out every transition, even zero accel
        m = make_model(bins=SpeedBins(n_bins=2, bin_width=2.0),
                       accel_max=-0.1, decel_max=-0.1)
        me = DiscreteState(0, 1, 1, 0, 0.0)
        res = plan(GameNode(me, far_opponent()), [1] * 8, m, budget=100,
                   rng_seed=0, horizon=4)
        assert res.degraded
        assert len(res.my_plan) == 4
        assert all(s.lane == 1 and s.speed_bin == 1 for s in res.my_plan)
        cps = [s.checkpoint for s in res.my_plan]
        assert cps == [1, 2, 3, 4]
