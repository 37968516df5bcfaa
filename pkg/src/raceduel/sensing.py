"""Lidar raycasting against track walls and the opponent body, plus oriented
rectangle collision queries."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .dynamics import VehicleState
from .track import TrackModel

N_RAYS = 32


class HitClass(IntEnum):
    NONE = 0
    WALL = 1
    OPPONENT = 2


@dataclass(frozen=True)
class LidarConfig:
    fan_deg: float = 270.0
    max_range: float = 4.0  # 10 vehicle lengths for the reference car

    def ray_offsets(self) -> np.ndarray:
        """Ray angles relative to heading, ordered left to right."""
        half = math.radians(self.fan_deg) / 2.0
        return np.linspace(half, -half, N_RAYS)


@dataclass
class LidarScan:
    distances: np.ndarray  # (32,)
    classes: np.ndarray  # (32,) HitClass values

    def __post_init__(self):
        self.distances = np.asarray(self.distances, dtype=float)
        self.classes = np.asarray(self.classes, dtype=np.int8)
        if self.distances.shape != (N_RAYS,) or self.classes.shape != (N_RAYS,):
            raise ValueError(f"lidar scan must have exactly {N_RAYS} readings")
        if np.any(self.distances <= 0):
            raise ValueError("lidar distances must be positive")


@dataclass(frozen=True)
class CollisionBody:
    """Oriented rectangle: center, heading, and full extents."""

    cx: float
    cy: float
    heading: float
    length: float
    width: float

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError("body extents must be positive")

    @classmethod
    def from_state(cls, s: VehicleState, length: float, width: float):
        return cls(s.x, s.y, s.phi, length, width)

    def corners(self) -> np.ndarray:
        c, s = math.cos(self.heading), math.sin(self.heading)
        hx, hy = self.length / 2.0, self.width / 2.0
        local = np.array([[hx, hy], [-hx, hy], [-hx, -hy], [hx, -hy]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.cx, self.cy])

    def axes(self) -> np.ndarray:
        c, s = math.cos(self.heading), math.sin(self.heading)
        return np.array([[c, s], [-s, c]])


def _wall_segments(track: TrackModel):
    """Wall segment starts/vectors plus max length, cached on the track."""
    cached = getattr(track, "_wall_seg_cache", None)
    if cached is None:
        starts, vecs = [], []
        for wall in (track.wall_left, track.wall_right):
            starts.append(wall.pts)
            vecs.append(np.roll(wall.pts, -1, axis=0) - wall.pts)
        seg_p = np.concatenate(starts)
        seg_v = np.concatenate(vecs)
        max_len = float(np.max(np.hypot(seg_v[:, 0], seg_v[:, 1])))
        cached = (seg_p, seg_v, max_len)
        track._wall_seg_cache = cached
    return cached


def _ray_grid_hits(origin, dirs, seg_p, seg_v) -> np.ndarray:
    """Smallest positive ray parameter per ray against a segment set.

    dirs: (R, 2) unit rays, seg_p/seg_v: (M, 2). Returns (R,) distances,
    inf where a ray misses everything.
    """
    rel = seg_p - origin  # (M, 2)
    denom = dirs[:, 0][:, None] * seg_v[:, 1][None, :] - (
        dirs[:, 1][:, None] * seg_v[:, 0][None, :]
    )  # (R, M)
    cross_rel_v = rel[:, 0] * seg_v[:, 1] - rel[:, 1] * seg_v[:, 0]  # (M,)
    cross_rel_d = (
        rel[:, 0][None, :] * dirs[:, 1][:, None]
        - rel[:, 1][None, :] * dirs[:, 0][:, None]
    )  # (R, M)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = cross_rel_v[None, :] / denom
        u = cross_rel_d / denom
    ok = (np.abs(denom) > 1e-12) & (t > 1e-9) & (u >= 0.0) & (u <= 1.0)
    t = np.where(ok, t, np.inf)
    return np.min(t, axis=1)


def cast_lidar(
    state: VehicleState,
    track: TrackModel,
    opponent: CollisionBody | None = None,
    config: LidarConfig = LidarConfig(),
) -> LidarScan:
    """32 rays fanned symmetrically about the heading; nearest hit wins."""
    origin = np.array([state.x, state.y])
    angles = state.phi + config.ray_offsets()
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)

    seg_p, seg_v, max_len = _wall_segments(track)
    # only segments that can intersect a ray of length max_range
    reach = config.max_range + max_len
    d2 = (seg_p[:, 0] - origin[0]) ** 2 + (seg_p[:, 1] - origin[1]) ** 2
    near = d2 <= reach * reach
    if np.any(near):
        t_wall = _ray_grid_hits(origin, dirs, seg_p[near], seg_v[near])
    else:
        t_wall = np.full(N_RAYS, np.inf)

    if opponent is not None:
        oc = opponent.corners()
        t_opp = _ray_grid_hits(origin, dirs, oc, np.roll(oc, -1, axis=0) - oc)
    else:
        t_opp = np.full(N_RAYS, np.inf)

    best = np.minimum(t_wall, t_opp)
    classes = np.where(
        best > config.max_range,
        HitClass.NONE,
        np.where(t_opp < t_wall, HitClass.OPPONENT, HitClass.WALL),
    )
    distances = np.minimum(best, config.max_range)
    return LidarScan(distances=distances, classes=classes)


def _project_extent(corners: np.ndarray, axis: np.ndarray) -> tuple[float, float]:
    p = corners @ axis
    return float(p.min()), float(p.max())


def _segment_distance(p1, p2, q1, q2) -> float:
    """Minimum distance between two 2-D segments."""
    d1 = p2 - p1
    d2 = q2 - q1
    r = p1 - q1
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)
    c = float(d1 @ r)
    b = float(d1 @ d2)
    denom = a * e - b * b
    if denom > 1e-12:
        s = min(max((b * f - c * e) / denom, 0.0), 1.0)
    else:
        s = 0.0
    t = (b * s + f) / e if e > 1e-12 else 0.0
    t = min(max(t, 0.0), 1.0)
    s = min(max((b * t - c) / a, 0.0), 1.0) if a > 1e-12 else 0.0
    pa = p1 + s * d1
    pb = q1 + t * d2
    return float(np.hypot(*(pa - pb)))


def body_separation(a: CollisionBody, b: CollisionBody) -> float:
    """Signed distance between rectangle boundaries: <= 0 iff overlapping
    (separating-axis test), else the minimum boundary distance."""
    ca, cb = a.corners(), b.corners()
    min_overlap = math.inf
    separated = False
    for axis in np.concatenate([a.axes(), b.axes()]):
        lo_a, hi_a = _project_extent(ca, axis)
        lo_b, hi_b = _project_extent(cb, axis)
        overlap = min(hi_a, hi_b) - max(lo_a, lo_b)
        if overlap < 0:
            separated = True
            break
        min_overlap = min(min_overlap, overlap)
    if not separated:
        return -min_overlap
    best = math.inf
    for i in range(4):
        for j in range(4):
            best = min(
                best,
                _segment_distance(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4]),
            )
    return best


def wall_contact(body: CollisionBody, track: TrackModel) -> bool:
    """True iff any rectangle corner lies beyond the track half-width."""
    for corner in body.corners():
        _, _, e1, _ = track.center.project(corner)
        if abs(e1) > track.half_width:
            return True
    return False
