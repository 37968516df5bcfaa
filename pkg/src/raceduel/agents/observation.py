"""Policy observation: a fixed-layout 42-entry vector.

Layout: body velocities (3) | raceline frenet errors (2) | opponent position
in the body frame (2) | high-level target block (3) | 32 lidar distances.
Range-valued discrete targets are encoded by their window midpoints.
"""

from __future__ import annotations

import math

import numpy as np

from ..dynamics import VehicleState
from ..planner import DiscreteState, SpeedBins
from ..sensing import N_RAYS, LidarScan
from ..track import Raceline, TrackModel

OBS_SIZE = 3 + 2 + 2 + 3 + N_RAYS

OBS_LAYOUT = {
    "body_velocity": slice(0, 3),
    "raceline_error": slice(3, 5),
    "opponent_relpos": slice(5, 7),
    "target": slice(7, 10),
    "lidar": slice(10, 10 + N_RAYS),
}


def build_observation(
    self_state: VehicleState,
    opponent_state: VehicleState,
    track: TrackModel,
    raceline: Raceline,
    target: DiscreteState,
    scan: LidarScan,
    bins: SpeedBins = SpeedBins(),
) -> np.ndarray:
    obs = np.empty(OBS_SIZE)
    obs[0] = self_state.vx
    obs[1] = self_state.vy
    obs[2] = self_state.omega

    pos = np.array([self_state.x, self_state.y])
    f_race = raceline.frenet(pos, self_state.phi, 2.0 * track.half_width)
    obs[3] = f_race.e1
    obs[4] = f_race.e2

    c, s = math.cos(-self_state.phi), math.sin(-self_state.phi)
    dx = opponent_state.x - self_state.x
    dy = opponent_state.y - self_state.y
    obs[5] = c * dx - s * dy
    obs[6] = s * dx + c * dy

    f_center = track.frenet(pos, self_state.phi)
    obs[7] = track.lane_center(target.lane) - f_center.e1
    obs[8] = bins.rep(target.speed_bin)
    target_s = (target.checkpoint % track.n_checkpoints) * track.spacing
    obs[9] = (target_s - f_center.s) % track.center.total_length

    obs[10:] = scan.distances
    if not np.all(np.isfinite(obs)):
        raise ValueError("non-finite observation entry")
    return obs
