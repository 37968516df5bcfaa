"""Scripted reference drivers: centerline/raceline P-tracking with optional
steering noise. Used as a race baseline and to exercise the shield."""

from __future__ import annotations

import numpy as np

from ..dynamics import Control, VehicleParams, VehicleState
from ..track import TrackModel


class ScriptedDriver:
    """Proportional tracker of a lateral reference with seeded noise.

    steer = -k_e * e1 - k_th * e2 (+ noise), throttle from proportional
    speed control. Noise is drawn from the driver's own rng, so identical
    seeds give identical control streams.
    """

    def __init__(
        self,
        params: VehicleParams,
        target_speed: float = 4.0,
        k_e: float = 0.9,
        k_th: float = 1.6,
        k_v: float = 0.8,
        noise_std: float = 0.0,
        seed: int = 0,
        target_offset: float = 0.0,
    ):
        self.params = params
        self.target_speed = target_speed
        self.k_e = k_e
        self.k_th = k_th
        self.k_v = k_v
        self.noise_std = noise_std
        self.target_offset = target_offset
        self.rng = np.random.default_rng(seed)

    def act(self, state: VehicleState, track: TrackModel) -> Control:
        f = track.frenet(np.array([state.x, state.y]), state.phi)
        steer = -self.k_e * (f.e1 - self.target_offset) - self.k_th * f.e2
        if self.noise_std > 0:
            steer += self.noise_std * self.rng.standard_normal()
        throttle = self.k_v * (self.target_speed - state.vx)
        return self.params.control(throttle, steer)
