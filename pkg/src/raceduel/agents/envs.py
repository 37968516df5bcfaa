"""Training environments with a small gym-like protocol:
reset(seed) -> obs, step(action) -> (obs, reward, done, info), plus
apply_physics(EnvPhysicsConfig) where curriculum morphing applies."""

from __future__ import annotations

import numpy as np

from ..curriculum import EnvPhysicsConfig
from ..dynamics import VehicleParams, VehicleState, step as dyn_step
from ..race import RaceConfig, RaceEnv, _default_target
from ..track import Raceline, TrackModel
from .observation import OBS_SIZE, build_observation


class CorridorEnv:
    """Trivial progress task on an open straight: reward is the per-step
    forward displacement. Used for learning smoke tests."""

    obs_size = 5

    def __init__(self, params: VehicleParams | None = None,
                 episode_len: int = 80, dt: float = 0.02):
        self.params = params or VehicleParams()
        self.episode_len = episode_len
        self.dt = dt
        self.state = VehicleState(0, 0, 0, 0, 0, 0)
        self.steps = 0

    def _obs(self):
        s = self.state
        return np.array([s.vx / 5.0, s.vy, s.y, s.phi, s.omega])

    def reset(self, seed: int = 0):
        self.state = VehicleState(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        self.steps = 0
        return self._obs()

    def step(self, action):
        u = self.params.control(float(action[0]), float(action[1]))
        prev_x = self.state.x
        self.state = dyn_step(self.state, u, self.params, dt=self.dt)
        self.steps += 1
        reward = self.state.x - prev_x
        done = self.steps >= self.episode_len
        return self._obs(), reward, done, {}


class SoloRaceEnv:
    """Single car lapping a track; targets come from the raceline lane table.

    The shield and tire morphing follow the physics config injected by the
    trainer via apply_physics. Episodes end after episode_len steps or when
    the lap count is reached.
    """

    obs_size = OBS_SIZE

    def __init__(
        self,
        track: TrackModel,
        raceline: Raceline,
        params: VehicleParams | None = None,
        config: RaceConfig = RaceConfig(),
        episode_len: int = 512,
        laps: int = 1,
    ):
        self.params = params or VehicleParams()
        self.track = track
        self.raceline = raceline
        self.config = config
        self.episode_len = episode_len
        self.laps = laps
        self.env = RaceEnv(track, raceline, self.params, config, solo=True)
        self.steps = 0
        self.wall_contacts = 0
        self._scan = None

    def apply_physics(self, physics: EnvPhysicsConfig) -> None:
        self.env.set_physics(physics)

    def _refresh_target(self):
        book = self.env.books[0]
        book.target = _default_target(
            self.track, self.raceline, book.last_cp + 1, self.config
        )

    def _obs(self):
        from ..sensing import cast_lidar

        book = self.env.books[0]
        if self._scan is None:
            self._scan = cast_lidar(book.vehicle, self.track, None,
                                    self.config.lidar)
        return build_observation(
            book.vehicle, book.vehicle, self.track, self.raceline,
            book.target, self._scan, self.config.bins,
        )

    def reset(self, seed: int = 0):
        self.env.reset(np.random.default_rng(seed))
        self._refresh_target()
        self.steps = 0
        self.wall_contacts = 0
        self._scan = None
        return self._obs()

    def step(self, action):
        u = self.params.control(float(action[0]), float(action[1]))
        events, rewards = self.env.step((u,))
        ev = events.agents[0]
        self._scan = ev.scan
        if ev.wall_contact:
            self.wall_contacts += 1
        if ev.crossings:
            self._refresh_target()
        self.steps += 1
        book = self.env.books[0]
        done = (
            self.steps >= self.episode_len
            or book.last_cp >= self.laps * self.track.n_checkpoints
        )
        return self._obs(), rewards[0], done, {"wall_contact": ev.wall_contact}
