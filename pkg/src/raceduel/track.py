"""Track geometry: closed centerline, checkpoint/lane lattice, Frenet queries,
procedural training-track generation, and minimum-curvature raceline smoothing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TRACK_SCHEMA_VERSION = 1
RACELINE_SCHEMA_VERSION = 1

DEFAULT_HALF_WIDTH = 0.8
DEFAULT_N_LANES = 3
DEFAULT_CHECKPOINT_SPACING = 1.6
DEFAULT_RACELINE_MARGIN = 0.15


class OffTrackError(ValueError):
    """Query point too far from the reference polyline (divergence signal)."""


class GenerationError(RuntimeError):
    """Procedural track generation failed after bounded retries."""


@dataclass(frozen=True)
class FrenetPose:
    """Arc-length progress s, signed lateral offset e1 (positive = left of the
    tangent), heading error e2 in (-pi, pi]."""

    s: float
    e1: float
    e2: float


def _wrap(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def menger_curvature(pts: np.ndarray) -> np.ndarray:
    """Signed discrete curvature at each vertex of a closed polyline."""
    prev = np.roll(pts, 1, axis=0)
    nxt = np.roll(pts, -1, axis=0)
    a = pts - prev
    b = nxt - pts
    c = nxt - prev
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    la = np.hypot(a[:, 0], a[:, 1])
    lb = np.hypot(b[:, 0], b[:, 1])
    lc = np.hypot(c[:, 0], c[:, 1])
    denom = la * lb * lc
    denom = np.where(denom < 1e-12, 1e-12, denom)
    return 2.0 * cross / denom


def is_simple_closed(pts: np.ndarray) -> bool:
    """True iff the closed polyline has no crossing between non-adjacent segments."""
    n = len(pts)
    p1 = pts
    p2 = np.roll(pts, -1, axis=0)
    d = p2 - p1
    for i in range(n):
        js = np.arange(i + 2, n if i > 0 else n - 1)
        if len(js) == 0:
            continue
        r = d[i]
        q1 = p1[js]
        s = d[js]
        denom = r[0] * s[:, 1] - r[1] * s[:, 0]
        rel = q1 - p1[i]
        t = (rel[:, 0] * s[:, 1] - rel[:, 1] * s[:, 0])
        u = (rel[:, 0] * r[1] - rel[:, 1] * r[0])
        with np.errstate(divide="ignore", invalid="ignore"):
            t = t / denom
            u = u / denom
        hit = (np.abs(denom) > 1e-12) & (t > 0) & (t < 1) & (u > 0) & (u < 1)
        if np.any(hit):
            return False
    return True


class ClosedPolyline:
    """Closed 2-D polyline with arc-length indexing and nearest-point queries.

    Vertices are stored unclosed (segment i joins vertex i to i+1 mod N).
    Immutable after construction.
    """

    def __init__(self, pts: np.ndarray):
        pts = np.asarray(pts, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 4:
            raise ValueError("polyline needs an (N,2) array with N >= 4")
        if np.allclose(pts[0], pts[-1]):
            pts = pts[:-1]
        self.pts = pts
        self.n = len(pts)
        nxt = np.roll(pts, -1, axis=0)
        self._seg_vec = nxt - pts
        self._seg_len = np.hypot(self._seg_vec[:, 0], self._seg_vec[:, 1])
        if np.any(self._seg_len < 1e-9):
            raise ValueError("degenerate (zero-length) polyline segment")
        self._cum = np.concatenate([[0.0], np.cumsum(self._seg_len)])
        self._cum_list = self._cum.tolist()
        self.total_length = float(self._cum[-1])
        self._tan = self._seg_vec / self._seg_len[:, None]
        # left normal of each segment
        self._nrm = np.stack([-self._tan[:, 1], self._tan[:, 0]], axis=1)
        # vertex (bisector) normals give a continuous lateral-offset chart
        vsum = self._nrm + np.roll(self._nrm, 1, axis=0)
        vlen = np.hypot(vsum[:, 0], vsum[:, 1])
        if np.any(vlen < 1e-9):
            raise ValueError("polyline folds back on itself (cusp vertex)")
        self._vnrm = vsum / vlen[:, None]
        self.curvature = menger_curvature(pts)
        # plain-float copies for the scalar hot path (frame_at runs inside
        # per-step secant loops; numpy scalar indexing is too slow there)
        self._px = pts[:, 0].tolist()
        self._py = pts[:, 1].tolist()
        self._tx = self._tan[:, 0].tolist()
        self._ty = self._tan[:, 1].tolist()
        self._vnx = self._vnrm[:, 0].tolist()
        self._vny = self._vnrm[:, 1].tolist()
        self._len_list = self._seg_len.tolist()

    def project(self, position) -> tuple[float, float, float, int]:
        """Nearest point on the polyline.

        Returns (distance, s, e1, segment index); e1 signed positive-left.
        """
        p = np.asarray(position, dtype=float)
        rel = p[None, :] - self.pts
        t = np.einsum("ij,ij->i", rel, self._seg_vec) / (self._seg_len**2)
        t = np.clip(t, 0.0, 1.0)
        foot = self.pts + t[:, None] * self._seg_vec
        diff = p[None, :] - foot
        dist2 = np.einsum("ij,ij->i", diff, diff)
        i = int(np.argmin(dist2))
        s = float(self._cum[i] + t[i] * self._seg_len[i])
        e1 = float(
            self._tan[i, 0] * diff[i, 1] - self._tan[i, 1] * diff[i, 0]
        )
        return math.sqrt(float(dist2[i])), s, e1, i

    def _locate(self, s: float) -> tuple[int, float]:
        s = float(s) % self.total_length
        i = int(np.searchsorted(self._cum, s, side="right") - 1)
        i = min(max(i, 0), self.n - 1)
        return i, s - self._cum_list[i]

    def frame_scalars(self, s: float):
        """(px, py, tx, ty, nx, ny) at arc length s; pure-float hot path.

        The normal blends the vertex bisector normals linearly along the
        segment, so the (s, e1) chart is continuous across vertices and
        invertible for |e1| below the local turning radius.
        """
        i, ds = self._locate(s)
        j = i + 1 if i + 1 < self.n else 0
        px = self._px[i] + self._tx[i] * ds
        py = self._py[i] + self._ty[i] * ds
        u = ds / self._len_list[i]
        nx = (1.0 - u) * self._vnx[i] + u * self._vnx[j]
        ny = (1.0 - u) * self._vny[i] + u * self._vny[j]
        inv = 1.0 / math.hypot(nx, ny)
        nx *= inv
        ny *= inv
        return px, py, ny, -nx, nx, ny

    def frame_at(self, s: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Point, unit tangent, and unit left normal at arc length s."""
        px, py, tx, ty, nx, ny = self.frame_scalars(s)
        return np.array([px, py]), np.array([tx, ty]), np.array([nx, ny])

    def point_at(self, s: float) -> np.ndarray:
        i, ds = self._locate(s)
        return self.pts[i] + self._tan[i] * ds

    def tangent_at(self, s: float) -> np.ndarray:
        return self.frame_at(s)[1]

    def normal_at(self, s: float) -> np.ndarray:
        return self.frame_at(s)[2]

    def heading_at(self, s: float) -> float:
        t = self.frame_at(s)[1]
        return math.atan2(t[1], t[0])

    def curvature_at(self, s: float) -> float:
        s = float(s) % self.total_length
        return float(
            np.interp(s, self._cum[:-1], self.curvature, period=self.total_length)
        )

    def offset_polyline(self, offset: float) -> np.ndarray:
        """Vertices displaced along the vertex bisector normals (left positive)."""
        return self.pts + offset * self._vnrm

    def signed_area(self) -> float:
        x, y = self.pts[:, 0], self.pts[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def frenet_pose(
    reference: ClosedPolyline, position, heading: float, off_limit: float
) -> FrenetPose:
    """Invert the continuous (s, e1) chart for a pose; errors beyond off_limit.

    Nearest-segment projection seeds a secant solve of
    (p - c(s)) . T(s) = 0, which makes frenet and from-frenet exact inverses
    instead of disagreeing in corner wedges of the polyline.
    """
    p0 = float(position[0])
    p1 = float(position[1])
    dist, s0, _, _ = reference.project(position)
    if dist > off_limit:
        raise OffTrackError(
            f"pose ({p0:.3f}, {p1:.3f}) is {dist:.3f} m from the reference "
            f"(limit {off_limit:.3f} m)"
        )
    total = reference.total_length

    def g(s):
        px, py, tx, ty, _, _ = reference.frame_scalars(s % total)
        return (p0 - px) * tx + (p1 - py) * ty

    a, ga = s0, g(s0)
    b = s0 + (1e-3 if ga >= 0 else -1e-3)
    gb = g(b)
    s = a
    for _ in range(40):
        if abs(ga) < 1e-12:
            s = a
            break
        if gb == ga:
            s = a
            break
        c = a - ga * (b - a) / (gb - ga)
        # keep the solve local to the seed
        c = min(max(c, s0 - 3.0), s0 + 3.0)
        a, ga, b, gb = c, g(c), a, ga
        s = a
        if abs(b - a) < 1e-10:
            break
    s = s % total
    px, py, tx, ty, nx, ny = reference.frame_scalars(s)
    e1 = (p0 - px) * nx + (p1 - py) * ny
    return FrenetPose(s=s, e1=e1, e2=_wrap(heading - math.atan2(ty, tx)))


class TrackModel:
    """Closed track: centerline polyline, constant half-width, checkpoint
    stations at uniform arc-length, and a lateral lane lattice.
    """

    def __init__(
        self,
        centerline,
        half_width: float = DEFAULT_HALF_WIDTH,
        n_lanes: int = DEFAULT_N_LANES,
        checkpoint_spacing: float = DEFAULT_CHECKPOINT_SPACING,
        meta: dict | None = None,
        validate: bool = True,
    ):
        self.center = ClosedPolyline(centerline)
        if half_width <= 0:
            raise ValueError("half_width must be positive")
        if n_lanes < 1:
            raise ValueError("n_lanes must be >= 1")
        if checkpoint_spacing <= 0:
            raise ValueError("checkpoint_spacing must be positive")
        if validate and not is_simple_closed(self.center.pts):
            raise ValueError("centerline is self-intersecting")
        self.half_width = float(half_width)
        self.n_lanes = int(n_lanes)
        self.meta = dict(meta or {})

        total = self.center.total_length
        self.n_checkpoints = max(4, int(round(total / checkpoint_spacing)))
        self.spacing = total / self.n_checkpoints
        self.checkpoint_s = np.arange(self.n_checkpoints) * self.spacing
        self.checkpoint_pts = np.array(
            [self.center.point_at(s) for s in self.checkpoint_s]
        )
        self.checkpoint_nrm = np.array(
            [self.center.normal_at(s) for s in self.checkpoint_s]
        )
        self.checkpoint_curvature = np.array(
            [self.center.curvature_at(s) for s in self.checkpoint_s]
        )
        self.direction = "CCW" if self.center.signed_area() > 0 else "CW"
        self.lane_width = 2.0 * self.half_width / self.n_lanes
        # wall polylines for raycasting; left wall at +half_width
        self.wall_left = ClosedPolyline(self.center.offset_polyline(self.half_width))
        self.wall_right = ClosedPolyline(self.center.offset_polyline(-self.half_width))

    # -- lanes -------------------------------------------------------------
    def lane_of(self, e1: float) -> int:
        """Lane index from a lateral offset; 0 = rightmost band, boundaries
        belong to the higher-index lane."""
        idx = math.floor((e1 + self.half_width) / self.lane_width)
        return min(max(idx, 0), self.n_lanes - 1)

    def lane_center(self, lane: int) -> float:
        return -self.half_width + (lane + 0.5) * self.lane_width

    @property
    def center_lane(self) -> int:
        return self.n_lanes // 2

    # -- frenet ------------------------------------------------------------
    def frenet(self, position, heading: float = 0.0) -> FrenetPose:
        return frenet_pose(self.center, position, heading, 2.0 * self.half_width)

    def from_frenet(self, s: float, e1: float, e2: float = 0.0):
        """Inverse map: returns (position (2,), heading)."""
        pos = self.center.point_at(s) + e1 * self.center.normal_at(s)
        return pos, _wrap(self.center.heading_at(s) + e2)

    def last_checkpoint(self, s: float) -> int:
        return int(math.floor((s % self.center.total_length) / self.spacing)) % (
            self.n_checkpoints
        )

    def is_straight_checkpoint(self, cp: int, curvature_limit: float = 0.02) -> bool:
        return abs(float(self.checkpoint_curvature[cp % self.n_checkpoints])) < (
            curvature_limit
        )

    # -- transforms / io ----------------------------------------------------
    def mirrored(self) -> "TrackModel":
        """Reflect across the x axis; flips CW <-> CCW."""
        pts = self.center.pts.copy()
        pts[:, 1] = -pts[:, 1]
        return TrackModel(
            pts,
            half_width=self.half_width,
            n_lanes=self.n_lanes,
            checkpoint_spacing=self.spacing,
            meta=self.meta,
        )

    def reversed(self) -> "TrackModel":
        return TrackModel(
            self.center.pts[::-1].copy(),
            half_width=self.half_width,
            n_lanes=self.n_lanes,
            checkpoint_spacing=self.spacing,
            meta=self.meta,
        )

    def to_dict(self) -> dict:
        return {
            "schema_version": TRACK_SCHEMA_VERSION,
            "centerline": self.center.pts.tolist(),
            "half_width": self.half_width,
            "n_lanes": self.n_lanes,
            "checkpoint_spacing": self.spacing,
            "direction": self.direction,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrackModel":
        track = cls(
            np.asarray(d["centerline"], dtype=float),
            half_width=float(d["half_width"]),
            n_lanes=int(d["n_lanes"]),
            checkpoint_spacing=float(d["checkpoint_spacing"]),
            meta=d.get("meta"),
        )
        declared = d.get("direction")
        if declared is not None and declared != track.direction:
            raise ValueError(
                f"direction field {declared!r} inconsistent with vertex order "
                f"({track.direction})"
            )
        return track

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "TrackModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class Raceline:
    """Smoothed minimum-curvature closed path with its per-checkpoint lane table."""

    line: ClosedPolyline
    offsets: np.ndarray  # per-checkpoint lateral offset from the centerline
    optimal_lanes: list[int]
    converged: bool
    objective_history: list[float] = field(default_factory=list)

    @property
    def curvature(self) -> np.ndarray:
        return self.line.curvature

    def frenet(self, position, heading: float, off_limit: float) -> FrenetPose:
        return frenet_pose(self.line, position, heading, off_limit)

    def centerline_offset_at(self, track: "TrackModel", s: float) -> float:
        """Lateral offset of the raceline from the centerline at arc length s
        (0 when the per-checkpoint offsets are unavailable)."""
        if len(self.offsets) != track.n_checkpoints:
            return 0.0
        return float(
            np.interp(s % track.center.total_length, track.checkpoint_s,
                      self.offsets, period=track.center.total_length)
        )

    def to_dict(self) -> dict:
        return {
            "schema_version": RACELINE_SCHEMA_VERSION,
            "points": self.line.pts.tolist(),
            "curvature": self.curvature.tolist(),
            "optimal_lanes": [int(v) for v in self.optimal_lanes],
            "offsets": self.offsets.tolist(),
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Raceline":
        return cls(
            line=ClosedPolyline(np.asarray(d["points"], float)),
            offsets=np.asarray(d.get("offsets", []), float),
            optimal_lanes=[int(v) for v in d["optimal_lanes"]],
            converged=bool(d.get("converged", True)),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Raceline":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# raceline optimization


def _periodic_spline_eval(s_knots, values, total, s_query):
    """Periodic cubic spline through (s_knots, values) evaluated at s_query.

    Dense cyclic solve for the knot second derivatives; knot counts are tens
    of checkpoints, so this is cheap. The map is linear in the values, which
    the optimizer exploits.
    """
    n = len(s_knots)
    values = np.asarray(values, float)
    h = np.diff(np.concatenate([s_knots, [total + s_knots[0]]]))
    a = np.zeros((n, n))
    rhs = np.zeros(n)
    for i in range(n):
        im1 = (i - 1) % n
        ip1 = (i + 1) % n
        a[i, im1] += h[im1]
        a[i, i] += 2.0 * (h[im1] + h[i])
        a[i, ip1] += h[i]
        rhs[i] = 6.0 * (
            (values[ip1] - values[i]) / h[i] - (values[i] - values[im1]) / h[im1]
        )
    m = np.linalg.solve(a, rhs)

    sq = (np.asarray(s_query, float) - s_knots[0]) % total
    knots0 = (s_knots - s_knots[0]) % total
    idx = np.searchsorted(knots0, sq, side="right") - 1
    idx = np.clip(idx, 0, n - 1)
    ip1 = (idx + 1) % n
    t = sq - knots0[idx]
    hi = h[idx]
    return (
        m[idx] * (hi - t) ** 3 / (6 * hi)
        + m[ip1] * t**3 / (6 * hi)
        + (values[idx] / hi - m[idx] * hi / 6) * (hi - t)
        + (values[ip1] / hi - m[ip1] * hi / 6) * t
    )


def _spline_operator(track: TrackModel) -> np.ndarray:
    """(N_dense, K) linear map from checkpoint offsets to vertex offsets."""
    k = track.n_checkpoints
    s_dense = track.center._cum[:-1]
    op = np.empty((len(s_dense), k))
    for i in range(k):
        unit = np.zeros(k)
        unit[i] = 1.0
        op[:, i] = _periodic_spline_eval(
            track.checkpoint_s, unit, track.center.total_length, s_dense
        )
    return op


def _control_points(track: TrackModel, offsets: np.ndarray) -> np.ndarray:
    return track.checkpoint_pts + offsets[:, None] * track.checkpoint_nrm


def _curvature_objective(pts: np.ndarray) -> float:
    k = menger_curvature(pts)
    return float(np.sum(k * k))




def _window_curvatures(w: np.ndarray) -> np.ndarray:
    """Menger curvature at positions 1..3 of (K, 5, 2) vertex windows."""
    a = w[:, 1:4] - w[:, 0:3]
    b = w[:, 2:5] - w[:, 1:4]
    c = w[:, 2:5] - w[:, 0:3]
    cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    la = np.hypot(a[..., 0], a[..., 1])
    lb = np.hypot(b[..., 0], b[..., 1])
    lc = np.hypot(c[..., 0], c[..., 1])
    denom = np.maximum(la * lb * lc, 1e-12)
    return 2.0 * cross / denom


def compute_raceline(
    track: TrackModel,
    iterations: int = 60,
    step: float = 1.0,
    margin: float = DEFAULT_RACELINE_MARGIN,
) -> Raceline:
    """Iterative minimization of the summed squared discrete curvature of the
    densified path over per-checkpoint lateral offsets.

    The dense path is a periodic cubic spline of the offsets (a linear map),
    so each iteration solves a curvature-linearized least squares with a soft
    penalty on boundary overshoot; a few unconditional seeding sweeps escape
    the all-outside local minimum before a monotone backtracking phase
    polishes. Knot offsets stay clamped to +-(half_width - margin); the dense
    path is clipped to the same band at the end (penalty keeps the clip at
    sub-millimeter scale). With iterations=0 the raceline equals the
    centerline; objective_history records the penalized objective and is
    non-increasing over the monotone phase.
    """
    bound = track.half_width - margin
    if bound <= 0:
        raise ValueError("margin leaves no lateral freedom")
    k = track.n_checkpoints
    offsets = np.zeros(k)
    normals = track.center._vnrm
    base = track.center.pts
    n_dense = len(base)
    spline_op = _spline_operator(track)
    w_pen = 50.0  # meters of overshoot vs 1/m of curvature

    def dense_points(off, clip=False):
        alpha = spline_op @ off
        if clip:
            alpha = np.clip(alpha, -bound, bound)
        return base + alpha[:, None] * normals

    def objective(off):
        alpha = spline_op @ off
        pts = base + alpha[:, None] * normals
        kk = menger_curvature(pts)
        over = np.maximum(np.abs(alpha) - bound, 0.0)
        return float(np.sum(kk * kk) + w_pen * w_pen * np.sum(over * over))

    window_idx = (np.arange(n_dense)[:, None] + np.arange(-2, 3)[None, :]) % n_dense
    fd_h = 1e-5

    def residual_jacobian(off):
        alpha = spline_op @ off
        pts = base + alpha[:, None] * normals
        kk = menger_curvature(pts)
        over = np.maximum(np.abs(alpha) - bound, 0.0)
        resid = np.concatenate([kk, w_pen * over])
        # curvature at dense vertex j moves with alpha at j-1, j, j+1; chain
        # the banded derivatives through the (linear) spline operator
        windows = pts[window_idx]
        w_plus = windows.copy()
        w_plus[:, 2, :] = base + (alpha + fd_h)[:, None] * normals
        w_minus = windows.copy()
        w_minus[:, 2, :] = base + (alpha - fd_h)[:, None] * normals
        bands = (
            _window_curvatures(w_plus) - _window_curvatures(w_minus)
        ) / (2 * fd_h)
        jac_k = (
            np.roll(bands[:, 2], 1)[:, None] * np.roll(spline_op, 1, axis=0)
            + bands[:, 1][:, None] * spline_op
            + np.roll(bands[:, 0], -1)[:, None] * np.roll(spline_op, -1, axis=0)
        )
        jac_p = (w_pen * np.sign(alpha) * (over > 0))[:, None] * spline_op
        return resid, np.concatenate([jac_k, jac_p], axis=0)

    def solve_gn(resid, jac):
        jtj = jac.T @ jac
        mu = 1e-8 * float(np.max(np.diag(jtj))) + 1e-12
        try:
            return np.linalg.solve(jtj + mu * np.eye(jtj.shape[0]),
                                    -jac.T @ resid)
        except np.linalg.LinAlgError:
            return None

    # Seeding sweeps: unconditional curvature-linearized solves. Monotone
    # descent from the centerline slides into the all-outside local minimum;
    # the linearized global step finds coordinated wide-apex-wide swings.
    obj = objective(offsets)
    if iterations > 0:
        cur = offsets.copy()
        for _ in range(6):
            resid, jac = residual_jacobian(cur)
            delta = solve_gn(resid, jac)
            if delta is None:
                break
            cur = np.clip(cur + delta, -bound, bound)
            cur_obj = objective(cur)
            if cur_obj < obj:
                offsets, obj = cur.copy(), cur_obj

    history = [obj]
    converged = iterations == 0

    for _ in range(iterations):
        resid, jac = residual_jacobian(offsets)
        grad = jac.T @ resid
        # freeze knots pinned at a bound whose gradient pushes outward,
        # otherwise they poison the Gauss-Newton direction for the free set
        pinned = ((offsets <= -bound + 1e-12) & (grad > 0)) | (
            (offsets >= bound - 1e-12) & (grad < 0)
        )
        free = np.flatnonzero(~pinned)
        if len(free) == 0:
            converged = True
            break
        delta_f = solve_gn(resid, jac[:, free])
        if delta_f is None:
            break
        delta = np.zeros(k)
        delta[free] = delta_f
        tau = step
        accepted = False
        for _ in range(30):
            cand = np.clip(offsets + tau * delta, -bound, bound)
            cand_obj = objective(cand)
            if cand_obj <= obj:
                moved = float(np.max(np.abs(cand - offsets)))
                offsets, obj = cand, cand_obj
                accepted = True
                break
            tau *= 0.5
        history.append(obj)
        if not accepted or moved < 1e-10:
            converged = True
            break
    else:
        # iteration cap reached; flag best-so-far unless the last steps stalled
        converged = converged or (
            len(history) > 2 and abs(history[-2] - history[-1]) < 1e-12
        )

    line = ClosedPolyline(dense_points(offsets, clip=True))
    lanes = [track.lane_of(float(o)) for o in offsets]
    return Raceline(
        line=line,
        offsets=offsets,
        optimal_lanes=lanes,
        converged=converged,
        objective_history=history,
    )


def optimal_lane_table(raceline: Raceline, track: TrackModel) -> list[int]:
    """Per-checkpoint lane whose lateral band contains the raceline crossing.

    Works on any raceline polyline (including loaded ones): every raceline
    vertex is projected onto the centerline and the lateral offset at each
    checkpoint station is interpolated in arc length.
    """
    s_vals = np.empty(raceline.line.n)
    e_vals = np.empty(raceline.line.n)
    for j, p in enumerate(raceline.line.pts):
        _, s, e1, _ = track.center.project(p)
        s_vals[j] = s
        e_vals[j] = e1
    order = np.argsort(s_vals)
    s_sorted = s_vals[order]
    e_sorted = e_vals[order]
    e_at = np.interp(
        track.checkpoint_s, s_sorted, e_sorted, period=track.center.total_length
    )
    return [track.lane_of(float(e)) for e in e_at]


# ---------------------------------------------------------------------------
# constructors and procedural generation


def make_ring_track(
    radius: float = 10.0,
    n_points: int = 256,
    half_width: float = DEFAULT_HALF_WIDTH,
    n_lanes: int = DEFAULT_N_LANES,
    checkpoint_spacing: float = DEFAULT_CHECKPOINT_SPACING,
) -> TrackModel:
    th = np.linspace(0, 2 * math.pi, n_points, endpoint=False)
    pts = np.stack([radius * np.cos(th), radius * np.sin(th)], axis=1)
    return TrackModel(pts, half_width, n_lanes, checkpoint_spacing,
                      meta={"kind": "ring", "radius": radius})


def make_rounded_rect_track(
    length: float = 18.0,
    width: float = 10.0,
    corner_radius: float = 2.5,
    point_spacing: float = 0.25,
    half_width: float = DEFAULT_HALF_WIDTH,
    n_lanes: int = DEFAULT_N_LANES,
    checkpoint_spacing: float = DEFAULT_CHECKPOINT_SPACING,
) -> TrackModel:
    """Rectangle with rounded corners, traversed CCW."""
    rc = corner_radius
    hx, hy = length / 2.0 - rc, width / 2.0 - rc
    if hx <= 0 or hy <= 0:
        raise ValueError("corner radius too large for the rectangle")
    pieces = []

    def arc(cx, cy, a0, a1):
        n = max(3, int(round(rc * abs(a1 - a0) / point_spacing)))
        t = np.linspace(a0, a1, n, endpoint=False)
        pieces.append(np.stack([cx + rc * np.cos(t), cy + rc * np.sin(t)], axis=1))

    def straight(p0, p1):
        p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
        n = max(2, int(round(np.linalg.norm(p1 - p0) / point_spacing)))
        t = np.linspace(0, 1, n, endpoint=False)
        pieces.append(p0 + t[:, None] * (p1 - p0))

    straight((-hx, -hy - rc), (hx, -hy - rc))
    arc(hx, -hy, -math.pi / 2, 0.0)
    straight((hx + rc, -hy), (hx + rc, hy))
    arc(hx, hy, 0.0, math.pi / 2)
    straight((hx, hy + rc), (-hx, hy + rc))
    arc(-hx, hy, math.pi / 2, math.pi)
    straight((-hx - rc, hy), (-hx - rc, -hy))
    arc(-hx, -hy, math.pi, 1.5 * math.pi)
    pts = np.concatenate(pieces, axis=0)
    return TrackModel(pts, half_width, n_lanes, checkpoint_spacing,
                      meta={"kind": "rounded_rect"})


def make_single_bend_track(
    base_radius: float = 8.0,
    bend_depth: float = 0.5,
    bend_sharpness: float = 3.0,
    n_points: int = 420,
    half_width: float = DEFAULT_HALF_WIDTH,
    n_lanes: int = DEFAULT_N_LANES,
    checkpoint_spacing: float = DEFAULT_CHECKPOINT_SPACING,
) -> TrackModel:
    """Loop with a single concave dent at theta = 0.

    Through the dent the minimum-curvature line swings to the opposite side
    of the track, so the optimal-lane table moves across all lanes there and
    is constant elsewhere.
    """
    th = np.linspace(0, 2 * math.pi, n_points, endpoint=False)
    r = base_radius * (
        1.0 - bend_depth * np.exp(bend_sharpness * (np.cos(th) - 1.0))
    )
    pts = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
    pts = _resample_closed(pts, 0.3)
    return TrackModel(pts, half_width, n_lanes, checkpoint_spacing,
                      meta={"kind": "single_bend"})


def _resample_closed(pts: np.ndarray, spacing: float) -> np.ndarray:
    closed = np.vstack([pts, pts[:1]])
    seg = np.diff(closed, axis=0)
    cum = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])
    total = cum[-1]
    n = max(16, int(round(total / spacing)))
    s_new = np.linspace(0, total, n, endpoint=False)
    x = np.interp(s_new, cum, closed[:, 0])
    y = np.interp(s_new, cum, closed[:, 1])
    return np.stack([x, y], axis=1)


def _radial_track_points(rng, base_radius, amp, harmonics=(2, 3, 4, 5), n_theta=512):
    th = np.linspace(0, 2 * math.pi, n_theta, endpoint=False)
    r = np.ones_like(th)
    for k in harmonics:
        a_k = amp * rng.uniform(0.4, 1.0) / k
        ph = rng.uniform(0, 2 * math.pi)
        r += a_k * np.cos(k * th + ph)
    r = base_radius * r
    if np.min(r) < 0.3 * base_radius:
        return None
    pts = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
    return _resample_closed(pts, 0.3)


# max-|curvature| bands used to split steep vs moderate training tracks
STEEP_BAND = (0.30, 0.42)
MODERATE_BAND = (0.10, 0.20)


def _generate_banded_track(rng, band, half_width, n_lanes, spacing, retries=60):
    lo, hi = band
    base_radius = rng.uniform(8.0, 11.0)
    amp = 0.5 * (lo + hi) * base_radius * 0.08
    for _ in range(retries):
        pts = _radial_track_points(rng, base_radius, amp)
        if pts is None:
            amp *= 0.8
            continue
        kmax = float(np.max(np.abs(menger_curvature(pts))))
        if lo <= kmax <= hi and is_simple_closed(pts):
            return pts
        # rescale toward the band midpoint and retry
        target = 0.5 * (lo + hi)
        amp *= min(2.0, max(0.5, target / max(kmax, 1e-6)))
    raise GenerationError(f"could not generate a track with max curvature in {band}")


def generate_training_tracks(
    seed: int,
    half_width: float = DEFAULT_HALF_WIDTH,
    n_lanes: int = DEFAULT_N_LANES,
    checkpoint_spacing: float = DEFAULT_CHECKPOINT_SPACING,
) -> list[TrackModel]:
    """16 deterministic tracks: 8 CW + 8 CCW; within each orientation 4 with
    steep turns and 4 with moderate turns."""
    rng = np.random.default_rng(seed)
    tracks = []
    for direction in ("CCW", "CW"):
        for style, band in (("steep", STEEP_BAND), ("moderate", MODERATE_BAND)):
            for i in range(4):
                pts = _generate_banded_track(
                    rng, band, half_width, n_lanes, checkpoint_spacing
                )
                if direction == "CW":
                    pts = pts[::-1].copy()
                tracks.append(
                    TrackModel(
                        pts,
                        half_width=half_width,
                        n_lanes=n_lanes,
                        checkpoint_spacing=checkpoint_spacing,
                        meta={
                            "style": style,
                            "direction": direction,
                            "index": len(tracks),
                            "seed": int(seed),
                        },
                    )
                )
    return tracks
