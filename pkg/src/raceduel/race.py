"""Head-to-head race environment: shielded dynamics stepping for both cars,
checkpoint/lap bookkeeping, collision events with from-behind attribution,
and the race/match harness with its metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .agents.lqr import LqrTracker
from .agents.observation import build_observation
from .agents.policy import PolicyNet
from .agents.rewards import (
    CheckpointCrossing,
    RewardConfig,
    RewardContext,
    compute_reward,
)
from .agents.scripted import ScriptedDriver
from .cbf import CbfConfig, filter_control
from .curriculum import EnvPhysicsConfig
from .dynamics import Control, VehicleParams, VehicleState, slip_angles, step
from .planner import (
    CostMode,
    DiscreteState,
    GameNode,
    NoLaneError,
    SpeedBins,
    TransitionModel,
    plan,
)
from .sensing import CollisionBody, LidarConfig, cast_lidar
from .track import Raceline, TrackModel


@dataclass(frozen=True)
class RaceConfig:
    dt: float = 0.02
    laps: int = 3
    max_sim_time: float = 240.0
    planner_budget: int = 128
    planner_horizon: int = 5
    planner_cost_mode: CostMode = CostMode.RACELINE_DISTANCE
    shield: bool = True
    default_target_speed: float = 4.5
    bins: SpeedBins = SpeedBins()
    lidar: LidarConfig = LidarConfig()
    reward: RewardConfig = RewardConfig()
    cbf: CbfConfig = CbfConfig()
    straight_curvature_limit: float = 0.02


@dataclass
class AgentBook:
    """Per-agent env bookkeeping and metric accumulators."""

    vehicle: VehicleState
    s: float
    progress: float = 0.0
    last_cp: int = 0
    gamma: list = field(default_factory=list)  # arrival time per crossing
    lap_times: list = field(default_factory=list)
    lap_start: float = 0.0
    target: DiscreteState | None = None
    prev_cross_time: float = 0.0
    prev_lane: int | None = None
    lateral_abs_sum: float = 0.0
    lateral_samples: int = 0
    wall_collisions: int = 0
    from_behind_collisions: int = 0
    in_wall_contact: bool = False
    in_opp_contact: bool = False
    dnf: bool = False
    finish_time: float | None = None


@dataclass
class AgentStepEvents:
    crossings: list
    wall_contact: bool
    opponent_contact: bool
    from_behind: bool
    residuals: tuple
    control_pre: Control
    control_post: Control
    scan: object
    vx: float
    throttle: float
    alpha_f: float
    alpha_r: float
    target_window_low: float


@dataclass
class StepEvents:
    agents: tuple


@dataclass
class RaceResult:
    winner: int | None
    lap_times: tuple
    avg_lateral_error: tuple
    wall_collisions: tuple
    from_behind_collisions: tuple
    dnf: tuple
    finish_times: tuple
    sim_time: float

    def to_dict(self) -> dict:
        return {
            "winner": self.winner,
            "lap_times": [list(v) for v in self.lap_times],
            "avg_lateral_error": list(self.avg_lateral_error),
            "wall_collisions": list(self.wall_collisions),
            "from_behind_collisions": list(self.from_behind_collisions),
            "dnf": list(self.dnf),
            "finish_times": [
                None if v is None else v for v in self.finish_times
            ],
            "sim_time": self.sim_time,
        }


class RaceEnv:
    """Two cars on one track; owns all per-race mutable state."""

    def __init__(
        self,
        track: TrackModel,
        raceline: Raceline,
        params: VehicleParams,
        config: RaceConfig = RaceConfig(),
        physics: EnvPhysicsConfig | None = None,
        solo: bool = False,
    ):
        if track.half_width <= params.width:
            raise ValueError("track half-width must exceed the vehicle width")
        self.track = track
        self.raceline = raceline
        self.params = params
        self.config = config
        self.solo = solo
        self.physics = physics or EnvPhysicsConfig(
            front=params.front_tire(), rear=params.rear_tire(),
            lambda1=0.0, lambda2=0.0, t_s=1.0,
        )
        self.time = 0.0
        self.books: list[AgentBook] = []

    # -- lifecycle ----------------------------------------------------------
    def reset(self, rng: np.random.Generator) -> None:
        """Both cars at the start line in the left/right lanes; the side
        assignment is a fair coin flip from rng; zero velocities."""
        left_lane = self.track.n_lanes - 1
        right_lane = 0
        lanes = (left_lane, right_lane) if rng.random() < 0.5 else (
            right_lane, left_lane
        )
        if self.solo:
            lanes = lanes[:1]
        self.books = []
        self.time = 0.0
        for lane in lanes:
            e1 = self.track.lane_center(lane)
            pos, heading = self.track.from_frenet(0.0, e1, 0.0)
            v = VehicleState(pos[0], pos[1], heading, 0.0, 0.0, 0.0)
            book = AgentBook(vehicle=v, s=0.0)
            book.prev_lane = lane
            self.books.append(book)

    def set_physics(self, physics: EnvPhysicsConfig) -> None:
        self.physics = physics

    def body(self, i: int) -> CollisionBody:
        return CollisionBody.from_state(
            self.books[i].vehicle, self.params.length, self.params.width
        )

    # -- stepping -------------------------------------------------------------
    def _wall_resolve(self, state: VehicleState):
        """Sticky wall: clamp the body inside the boundary and zero the
        outward velocity component. Returns (state, contact_flag)."""
        track = self.track
        pos = np.array([state.x, state.y])
        f = track.frenet(pos, state.phi)
        extent = (self.params.length / 2) * abs(math.sin(f.e2)) + (
            self.params.width / 2
        ) * abs(math.cos(f.e2))
        limit = track.half_width - extent
        if abs(f.e1) <= limit:
            return state, False
        e1c = math.copysign(limit, f.e1)
        new_pos, _ = track.from_frenet(f.s, e1c, 0.0)
        nrm = track.center.normal_at(f.s)
        c, s_ = math.cos(state.phi), math.sin(state.phi)
        v_glob = np.array(
            [c * state.vx - s_ * state.vy, s_ * state.vx + c * state.vy]
        )
        v_n = float(v_glob @ nrm)
        if v_n * f.e1 > 0:  # still moving outward
            v_glob = v_glob - v_n * nrm
        vx_b = c * v_glob[0] + s_ * v_glob[1]
        vy_b = -s_ * v_glob[0] + c * v_glob[1]
        return (
            VehicleState(new_pos[0], new_pos[1], state.phi, vx_b, vy_b,
                         state.omega),
            True,
        )

    def _resolve_car_contact(self):
        """Positional separation along the center line between the cars, with
        closing velocity removed. Returns (contact, rear_index) or
        (False, None)."""
        from .sensing import body_separation

        a, b = self.books
        sep = body_separation(self.body(0), self.body(1))
        if sep > 0:
            return False, None
        pa = np.array([a.vehicle.x, a.vehicle.y])
        pb = np.array([b.vehicle.x, b.vehicle.y])
        d = pb - pa
        norm = float(np.hypot(*d))
        n = d / norm if norm > 1e-9 else np.array([1.0, 0.0])
        push = (-sep) / 2 + 1e-4
        for book, direction in ((a, -n), (b, n)):
            st = book.vehicle
            book.vehicle = VehicleState(
                st.x + push * direction[0], st.y + push * direction[1],
                st.phi, st.vx, st.vy, st.omega,
            )
        for book, outward in ((a, n), (b, -n)):
            st = book.vehicle
            c, s_ = math.cos(st.phi), math.sin(st.phi)
            v_glob = np.array([c * st.vx - s_ * st.vy, s_ * st.vx + c * st.vy])
            v_n = float(v_glob @ outward)
            if v_n > 0:  # closing on the other car
                v_glob = v_glob - v_n * outward
                book.vehicle = VehicleState(
                    st.x, st.y, st.phi,
                    c * v_glob[0] + s_ * v_glob[1],
                    -s_ * v_glob[0] + c * v_glob[1],
                    st.omega,
                )
        # rear car: smaller unwrapped progress
        rear = 0 if a.progress <= b.progress else 1
        return True, rear

    def step(self, controls, shield: bool | None = None):
        """Advance both cars one control period.

        Returns (StepEvents, rewards). Controls are filtered by the shield
        (when enabled and gains are nonzero), integrated, and wall / car-car
        contacts resolved sticky-style.
        """
        cfg = self.config
        if shield is None:
            shield = cfg.shield
        lam1, lam2 = self.physics.lambda1, self.physics.lambda2
        track = self.track
        per_agent = []

        for i, (book, u_pre) in enumerate(zip(self.books, controls)):
            if shield and (lam1 > 0 or lam2 > 0):
                u_post, residuals = filter_control(
                    u_pre, book.vehicle, track, lam1, lam2, cfg.cbf,
                    self.params, self.physics.front, self.physics.rear,
                )
            else:
                u_post, residuals = u_pre, (0.0, 0.0)
            a_f, a_r = slip_angles(book.vehicle, u_post.steer, self.params)
            new_state = step(
                book.vehicle, u_post, self.params, self.physics.front,
                self.physics.rear, dt=cfg.dt,
            )
            new_state, wall_hit = self._wall_resolve(new_state)
            book.vehicle = new_state
            if wall_hit and not book.in_wall_contact:
                book.wall_collisions += 1
            book.in_wall_contact = wall_hit
            per_agent.append(
                {"pre": u_pre, "post": u_post, "residuals": residuals,
                 "alpha": (a_f, a_r), "wall": wall_hit}
            )

        if len(self.books) == 2:
            contact, rear = self._resolve_car_contact()
            if contact and not (self.books[0].in_opp_contact
                                or self.books[1].in_opp_contact):
                self.books[rear].from_behind_collisions += 1
            for book in self.books:
                book.in_opp_contact = contact
        else:
            contact, rear = False, None

        self.time += cfg.dt
        events = []
        rewards = []
        for i, book in enumerate(self.books):
            crossings = self._advance_progress(i)
            opp_body = self.body(1 - i) if len(self.books) == 2 else None
            scan = cast_lidar(book.vehicle, track, opp_body, cfg.lidar)
            info = per_agent[i]
            window_low = (
                cfg.bins.window(book.target.speed_bin)[0]
                if book.target is not None else 0.0
            )
            ev = AgentStepEvents(
                crossings=crossings,
                wall_contact=info["wall"],
                opponent_contact=contact,
                from_behind=contact and rear == i,
                residuals=info["residuals"],
                control_pre=info["pre"],
                control_post=info["post"],
                scan=scan,
                vx=book.vehicle.vx,
                throttle=info["post"].throttle,
                alpha_f=info["alpha"][0],
                alpha_r=info["alpha"][1],
                target_window_low=window_low,
            )
            events.append(ev)
            rewards.append(self._reward_from_events(ev))
        return StepEvents(agents=tuple(events)), tuple(rewards)

    def _reward_from_events(self, ev: AgentStepEvents) -> float:
        ctx = RewardContext(
            vx=ev.vx, throttle=ev.throttle, alpha_f=ev.alpha_f,
            alpha_r=ev.alpha_r, scan=ev.scan, residuals=ev.residuals,
            crossing=ev.crossings[-1] if ev.crossings else None,
            target_window_low=ev.target_window_low,
        )
        return compute_reward(ctx, self.config.reward)

    def _advance_progress(self, i: int) -> list:
        """Unwrap arc-length progress and emit checkpoint crossings."""
        book = self.books[i]
        track = self.track
        cfg = self.config
        pos = np.array([book.vehicle.x, book.vehicle.y])
        f = track.frenet(pos, book.vehicle.phi)
        total = track.center.total_length
        ds = (f.s - book.s) % total
        if ds > total / 2:
            ds -= total
        book.progress += ds
        book.s = f.s
        book.lateral_abs_sum += abs(
            self.raceline.frenet(pos, book.vehicle.phi,
                                 2 * track.half_width).e1
        )
        book.lateral_samples += 1

        crossings = []
        while book.progress >= (book.last_cp + 1) * track.spacing:
            book.last_cp += 1
            cp = book.last_cp % track.n_checkpoints
            book.gamma.append(self.time)
            lane_now = track.lane_of(f.e1)
            target = book.target
            if target is not None and (
                target.checkpoint % track.n_checkpoints
            ) == cp:
                lane_pt = track.checkpoint_pts[cp] + track.lane_center(
                    target.lane
                ) * track.checkpoint_nrm[cp]
                d_tc = float(np.hypot(*(pos - lane_pt)))
                lo, hi = cfg.bins.window(target.speed_bin)
                in_window = lo <= book.vehicle.vx < hi
            else:
                d_tc = abs(f.e1)  # no explicit target: centerline station
                in_window = False
            crossings.append(
                CheckpointCrossing(
                    distance_to_target=d_tc,
                    in_speed_window=in_window,
                    dt_since_last=self.time - book.prev_cross_time,
                    lane_changed=(book.prev_lane is not None
                                  and lane_now != book.prev_lane),
                    on_straight=track.is_straight_checkpoint(
                        cp, cfg.straight_curvature_limit
                    ),
                )
            )
            book.prev_cross_time = self.time
            book.prev_lane = lane_now
            if book.last_cp % track.n_checkpoints == 0:
                book.lap_times.append(self.time - book.lap_start)
                book.lap_start = self.time
        return crossings


# ---------------------------------------------------------------------------
# agents and race orchestration


@dataclass
class AgentView:
    """What a controller sees each step."""

    state: VehicleState
    opp_state: VehicleState
    track: TrackModel
    raceline: Raceline
    target: DiscreteState | None
    scan: object
    time: float


class ScriptedAgent:
    uses_planner = False

    def __init__(self, driver: ScriptedDriver):
        self.driver = driver

    def control(self, view: AgentView) -> Control:
        return self.driver.act(view.state, view.track)


class LqrAgent:
    """Raceline tracking; with use_planner the speed target comes from the
    game planner (the MCTS + LQR baseline)."""

    def __init__(self, tracker: LqrTracker, use_planner: bool = True):
        self.tracker = tracker
        self.uses_planner = use_planner

    def control(self, view: AgentView) -> Control:
        return self.tracker.act(view.state, view.track, view.raceline,
                                view.target)


class PolicyAgent:
    """Network controller; hierarchical (planner targets) or end-to-end
    (raceline-lane default targets)."""

    def __init__(self, net: PolicyNet, params: VehicleParams,
                 bins: SpeedBins = SpeedBins(), use_planner: bool = True):
        self.net = net
        self.params = params
        self.bins = bins
        self.uses_planner = use_planner

    def control(self, view: AgentView) -> Control:
        target = view.target
        if target is None:
            target = DiscreteState(0, view.track.center_lane, 0, 0, 0.0)
        obs = build_observation(view.state, view.opp_state, view.track,
                                view.raceline, target, view.scan, self.bins)
        throttle, steer = self.net.act(obs)
        return self.params.control(throttle, steer)


def _default_target(track: TrackModel, raceline: Raceline, next_cp: int,
                    config: RaceConfig) -> DiscreteState:
    lanes = raceline.optimal_lanes
    return DiscreteState(
        checkpoint=next_cp,
        lane=lanes[next_cp % track.n_checkpoints],
        speed_bin=config.bins.bin_of(config.default_target_speed),
        wear_bin=0,
        time=0.0,
    )


def _planned_target(env: RaceEnv, i: int, model: TransitionModel,
                    config: RaceConfig, plan_seed: int) -> DiscreteState:
    book = env.books[i]
    opp = env.books[1 - i]
    track = env.track

    def node_state(b: AgentBook) -> DiscreteState:
        f = track.frenet(np.array([b.vehicle.x, b.vehicle.y]), b.vehicle.phi)
        lane = track.lane_of(f.e1)
        return DiscreteState(
            checkpoint=b.last_cp, lane=lane,
            speed_bin=config.bins.bin_of(b.vehicle.vx), wear_bin=0,
            time=b.gamma[-1] if b.gamma else 0.0,
        )

    horizon = min(config.planner_horizon, track.n_checkpoints)
    result = plan(
        GameNode(node_state(book), node_state(opp)),
        env.raceline.optimal_lanes, model,
        budget=config.planner_budget, cost_mode=config.planner_cost_mode,
        rng_seed=plan_seed, horizon=horizon,
    )
    return result.my_plan[0]


def run_race(
    agent_a,
    agent_b,
    track: TrackModel,
    raceline: Raceline,
    params: VehicleParams,
    seed: int = 0,
    config: RaceConfig = RaceConfig(),
    physics: EnvPhysicsConfig | None = None,
    trace: list | None = None,
) -> RaceResult:
    """One seeded race; the high-level planner is re-invoked at every own
    checkpoint crossing. Ends when the first car completes the lap count or
    the sim-time cap flags the rest DNF."""
    env = RaceEnv(track, raceline, params, config, physics)
    rng = np.random.default_rng(seed)
    env.reset(rng)
    agents = (agent_a, agent_b)
    model = TransitionModel.from_track(track, bins=config.bins)
    finish_cp = config.laps * track.n_checkpoints
    plan_counter = 0

    def refresh_target(i: int):
        nonlocal plan_counter
        next_cp = env.books[i].last_cp + 1
        if agents[i].uses_planner:
            plan_counter += 1
            try:
                env.books[i].target = _planned_target(
                    env, i, model, config, seed * 7919 + plan_counter
                )
                return
            except NoLaneError:
                pass
        env.books[i].target = _default_target(track, raceline, next_cp, config)

    for i in (0, 1):
        refresh_target(i)
    scans = [
        cast_lidar(env.books[i].vehicle, track, env.body(1 - i), config.lidar)
        for i in (0, 1)
    ]

    while env.time < config.max_sim_time:
        controls = []
        for i in (0, 1):
            view = AgentView(
                state=env.books[i].vehicle,
                opp_state=env.books[1 - i].vehicle,
                track=track, raceline=raceline,
                target=env.books[i].target, scan=scans[i], time=env.time,
            )
            controls.append(agents[i].control(view))
        events, rewards = env.step(tuple(controls))
        if trace is not None:
            trace.append(_trace_row(env, events))
        scans = [events.agents[i].scan for i in (0, 1)]
        finished = False
        for i in (0, 1):
            if events.agents[i].crossings:
                if env.books[i].last_cp >= finish_cp:
                    env.books[i].finish_time = env.books[i].gamma[
                        finish_cp - 1
                    ]
                    finished = True
                else:
                    refresh_target(i)
        if finished:
            break

    for book in env.books:
        if book.finish_time is None:
            book.dnf = True

    times = [b.finish_time for b in env.books]
    if times[0] is not None and (times[1] is None or times[0] < times[1]):
        winner = 0
    elif times[1] is not None and (times[0] is None or times[1] < times[0]):
        winner = 1
    else:
        winner = None

    return RaceResult(
        winner=winner,
        lap_times=tuple(tuple(b.lap_times) for b in env.books),
        avg_lateral_error=tuple(
            b.lateral_abs_sum / max(b.lateral_samples, 1) for b in env.books
        ),
        wall_collisions=tuple(b.wall_collisions for b in env.books),
        from_behind_collisions=tuple(
            b.from_behind_collisions for b in env.books
        ),
        dnf=tuple(b.dnf for b in env.books),
        finish_times=tuple(times),
        sim_time=env.time,
    )


def _trace_row(env: RaceEnv, events: StepEvents) -> dict:
    row = {"t": round(env.time, 9)}
    for i, (book, ev) in enumerate(zip(env.books, events.agents)):
        v = book.vehicle
        row.update(
            {
                f"a{i}_x": v.x, f"a{i}_y": v.y, f"a{i}_phi": v.phi,
                f"a{i}_vx": v.vx, f"a{i}_vy": v.vy, f"a{i}_omega": v.omega,
                f"a{i}_throttle_pre": ev.control_pre.throttle,
                f"a{i}_steer_pre": ev.control_pre.steer,
                f"a{i}_throttle_post": ev.control_post.throttle,
                f"a{i}_steer_post": ev.control_post.steer,
                f"a{i}_wall": int(ev.wall_contact),
                f"a{i}_opp_contact": int(ev.opponent_contact),
                f"a{i}_crossings": len(ev.crossings),
                f"a{i}_c_left": ev.residuals[0],
                f"a{i}_c_right": ev.residuals[1],
            }
        )
    return row


@dataclass
class MatchReport:
    n_races: int
    wins: tuple  # (wins_a, wins_b, no_winner)
    avg_lap_time: tuple
    avg_lateral_error: tuple
    wall_collisions: tuple
    from_behind_collisions: tuple
    results: list

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "n_races": self.n_races,
            "wins_a": self.wins[0],
            "wins_b": self.wins[1],
            "no_winner": self.wins[2],
            "avg_lap_time": list(self.avg_lap_time),
            "avg_lateral_error": list(self.avg_lateral_error),
            "wall_collisions": list(self.wall_collisions),
            "from_behind_collisions": list(self.from_behind_collisions),
            "races": [r.to_dict() for r in self.results],
        }


def run_match(
    agent_factory_a,
    agent_factory_b,
    track: TrackModel,
    raceline: Raceline,
    params: VehicleParams,
    n_races: int = 20,
    seed: int = 0,
    config: RaceConfig = RaceConfig(),
    physics: EnvPhysicsConfig | None = None,
    traces: list | None = None,
) -> MatchReport:
    """n seeded races; fresh agents per race via the factories (they may hold
    rng state). Start sides are drawn inside each race's reset."""
    if n_races < 1:
        raise ValueError("need at least one race")
    seeds = np.random.SeedSequence(seed).generate_state(n_races)
    results = []
    for k in range(n_races):
        race_seed = int(seeds[k])
        trace = [] if traces is not None else None
        result = run_race(
            agent_factory_a(race_seed), agent_factory_b(race_seed + 1),
            track, raceline, params, seed=race_seed, config=config,
            physics=physics, trace=trace,
        )
        results.append(result)
        if traces is not None:
            traces.append(trace)

    wins = [0, 0, 0]
    for r in results:
        if r.winner is None:
            wins[2] += 1
        else:
            wins[r.winner] += 1

    def agent_mean(values):
        flat = [v for vs in values for v in vs]
        return sum(flat) / len(flat) if flat else None

    avg_lap = tuple(
        agent_mean([r.lap_times[i] for r in results]) for i in (0, 1)
    )
    avg_lat = tuple(
        sum(r.avg_lateral_error[i] for r in results) / len(results)
        for i in (0, 1)
    )
    walls = tuple(sum(r.wall_collisions[i] for r in results) for i in (0, 1))
    behind = tuple(
        sum(r.from_behind_collisions[i] for r in results) for i in (0, 1)
    )
    return MatchReport(
        n_races=n_races,
        wins=tuple(wins),
        avg_lap_time=avg_lap,
        avg_lateral_error=avg_lat,
        wall_collisions=walls,
        from_behind_collisions=behind,
        results=results,
    )
