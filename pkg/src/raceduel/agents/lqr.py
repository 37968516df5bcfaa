"""LQR raceline tracker: state feedback on the linearized lateral error
dynamics plus curvature feedforward, with proportional speed control."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..dynamics import Control, TireTriple, VehicleParams, VehicleState
from ..planner import DiscreteState, SpeedBins
from ..track import Raceline, TrackModel


@dataclass(frozen=True)
class LqrConfig:
    q: tuple = (2.0, 0.05, 1.0, 0.05)
    r: float = 4.0
    dt: float = 0.02
    k_v: float = 0.8
    riccati_iters: int = 400
    target_speed: float = 4.0


def riccati_gain(a: np.ndarray, b: np.ndarray, q: np.ndarray, r: float,
                 iters: int) -> np.ndarray:
    """Iterate the discrete Riccati recursion to its fixed point; returns K."""
    p = q.copy()
    for _ in range(iters):
        btp = b.T @ p
        k = (btp @ a) / (r + (btp @ b)[0, 0])
        p_next = q + a.T @ p @ (a - b @ k)
        if np.max(np.abs(p_next - p)) < 1e-12:
            p = p_next
            break
        p = p_next
    btp = b.T @ p
    return ((btp @ a) / (r + (btp @ b)[0, 0])).ravel()


def lateral_gain(vx: float, params: VehicleParams, front: TireTriple,
                 rear: TireTriple, cfg: LqrConfig) -> np.ndarray:
    """LQR gain for the error state [e1, e1_dot, e2, e2_dot] at speed vx."""
    vx = max(vx, 1.0)
    cf = front.B * front.C * front.D  # cornering stiffness, N/rad
    cr = rear.B * rear.C * rear.D
    m, iz, lf, lr = params.m, params.Iz, params.lf, params.lr
    a = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [0.0, -(cf + cr) / (m * vx), (cf + cr) / m,
             (-cf * lf + cr * lr) / (m * vx)],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, (-cf * lf + cr * lr) / (iz * vx), (cf * lf - cr * lr) / iz,
             -(cf * lf**2 + cr * lr**2) / (iz * vx)],
        ]
    )
    b = np.array([[0.0], [cf / m], [0.0], [cf * lf / iz]])
    ad = np.eye(4) + a * cfg.dt
    bd = b * cfg.dt
    return riccati_gain(ad, bd, np.diag(cfg.q), cfg.r, cfg.riccati_iters)


class LqrTracker:
    """Steers onto the raceline; throttle tracks the high-level target speed
    (or the configured default when no target is given)."""

    def __init__(self, params: VehicleParams, cfg: LqrConfig = LqrConfig(),
                 front: TireTriple | None = None,
                 rear: TireTriple | None = None,
                 bins: SpeedBins = SpeedBins()):
        self.params = params
        self.cfg = cfg
        self.front = front or params.front_tire()
        self.rear = rear or params.rear_tire()
        self.bins = bins
        self._gain_cache: dict[float, np.ndarray] = {}

    def _gain(self, vx: float) -> np.ndarray:
        key = round(max(vx, 1.0), 1)
        k = self._gain_cache.get(key)
        if k is None:
            k = lateral_gain(key, self.params, self.front, self.rear, self.cfg)
            self._gain_cache[key] = k
        return k

    def act(
        self,
        state: VehicleState,
        track: TrackModel,
        raceline: Raceline,
        target: DiscreteState | None = None,
    ) -> Control:
        pos = np.array([state.x, state.y])
        f = raceline.frenet(pos, state.phi, 2.0 * track.half_width)
        kappa = raceline.line.curvature_at(f.s)
        # lateral reference: zero while the plan follows the raceline lane,
        # otherwise the planned lane center as an offset from the raceline
        desired = 0.0
        if target is not None:
            f_c = track.frenet(pos, state.phi)
            rl_offset = raceline.centerline_offset_at(track, f_c.s)
            if target.lane != track.lane_of(rl_offset):
                desired = track.lane_center(target.lane) - rl_offset
        e1_dot = state.vx * math.sin(f.e2) + state.vy * math.cos(f.e2)
        e2_dot = state.omega - kappa * state.vx
        x = np.array([f.e1 - desired, e1_dot, f.e2, e2_dot])
        wheelbase = self.params.lf + self.params.lr
        steer = math.atan(wheelbase * kappa) - float(self._gain(state.vx) @ x)
        v_target = (
            self.bins.rep(target.speed_bin) if target is not None
            else self.cfg.target_speed
        )
        throttle = self.cfg.k_v * (v_target - state.vx)
        return self.params.control(throttle, steer)
