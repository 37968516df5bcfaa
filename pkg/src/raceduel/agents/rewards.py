"""Step reward: checkpoint progress, segment time, swerve, proximity
penalties over a monitored lidar subset, braking/slip, and the barrier
violation term."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..cbf import violation_penalty
from ..sensing import HitClass, LidarScan

# 9 monitored rays out of the 32 (every 4th, last snapped to 31); the front
# set is the three most-forward rays of the 270-degree fan
MONITORED_RAYS = (0, 4, 8, 12, 16, 20, 24, 28, 31)
FRONT_RAYS = (14, 15, 16)


@dataclass(frozen=True)
class RewardConfig:
    k_target: float = 1.0
    k_time: float = 0.05
    k_swerve: float = 0.1
    k_wall_hit: float = 0.2
    k_opp1: float = 0.1
    k_opp2: float = 0.1
    k_brake: float = 0.05
    k_slip: float = 0.01
    k_constraint: float = 0.5
    lidar_proximity_threshold: float = 0.25
    monitored_rays: tuple = MONITORED_RAYS
    front_rays: tuple = FRONT_RAYS

    def __post_init__(self):
        for name in ("k_target", "k_time", "k_swerve", "k_wall_hit", "k_opp1",
                     "k_opp2", "k_brake", "k_slip", "k_constraint"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if any(not 0 <= j < 32 for j in self.monitored_rays):
            raise ValueError("monitored rays must index the 32-ray scan")
        if any(not 0 <= j < 32 for j in self.front_rays):
            raise ValueError("front rays must index the 32-ray scan")


@dataclass(frozen=True)
class CheckpointCrossing:
    """Set on steps where the car passes its target checkpoint station."""

    distance_to_target: float  # to the target lane point at the station
    in_speed_window: bool
    dt_since_last: float
    lane_changed: bool
    on_straight: bool


@dataclass
class RewardContext:
    vx: float
    throttle: float
    alpha_f: float
    alpha_r: float
    scan: LidarScan
    residuals: tuple[float, float] = (0.0, 0.0)
    crossing: CheckpointCrossing | None = None
    target_window_low: float = 0.0


def compute_reward(ctx: RewardContext, config: RewardConfig) -> float:
    r = 0.0
    if ctx.crossing is not None:
        cr = ctx.crossing
        bonus = 2.0 if cr.in_speed_window else 1.0
        r += config.k_target * math.exp(-cr.distance_to_target) * bonus
        r -= config.k_time * cr.dt_since_last
        if cr.on_straight and cr.lane_changed:
            r -= config.k_swerve

    h = config.lidar_proximity_threshold
    for j in config.monitored_rays:
        close = ctx.scan.distances[j] <= h
        if close and ctx.scan.classes[j] == HitClass.WALL:
            r -= config.k_wall_hit
        elif close and ctx.scan.classes[j] == HitClass.OPPONENT:
            r -= config.k_opp1
            if j in config.front_rays:
                r -= config.k_opp2

    if ctx.vx <= ctx.target_window_low and ctx.throttle <= 0.0:
        r -= config.k_brake
    r -= config.k_slip * (ctx.alpha_f**2 + ctx.alpha_r**2)

    r += violation_penalty(ctx.residuals, config.k_constraint)
    return r
