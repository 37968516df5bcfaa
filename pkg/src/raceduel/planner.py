"""Discrete two-player racing game: lattice discretization, 1-D transition
model, and MCTS planning against a raceline lane table.

Players alternate by arrival time (the earlier player at its frontier
checkpoint chooses next). Leaf cost is either the summed squared lane
distance to the optimal-lane table, or the arrival-time difference. Small
games solve exactly: nodes whose children are all solved propagate exact
minimax values, so with enough budget the search equals exhaustive minimax.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .dynamics import VehicleState
from .track import TrackModel


class NoLaneError(ValueError):
    """State is off the lattice (outside the track lanes)."""


class CostMode(Enum):
    RACELINE_DISTANCE = "raceline_distance"
    MIN_TIME = "min_time"


@dataclass(frozen=True)
class SpeedBins:
    """Fixed-width velocity windows; representative value = window midpoint."""

    n_bins: int = 6
    bin_width: float = 2.0

    def bin_of(self, v: float) -> int:
        return min(max(int(math.floor(max(v, 0.0) / self.bin_width)), 0),
                   self.n_bins - 1)

    def rep(self, b: int) -> float:
        return (b + 0.5) * self.bin_width

    def window(self, b: int) -> tuple[float, float]:
        return b * self.bin_width, (b + 1) * self.bin_width


@dataclass(frozen=True)
class DiscreteState:
    """Lattice node: absolute checkpoint index, lane, speed bin, frozen wear
    bin, and continuous arrival time at the checkpoint."""

    checkpoint: int
    lane: int
    speed_bin: int
    wear_bin: int = 0
    time: float = 0.0


@dataclass(frozen=True)
class GameNode:
    my_state: DiscreteState
    opp_state: DiscreteState

    @property
    def to_move(self) -> int:
        # earlier arrival chooses; ties go to player 0
        return 0 if self.my_state.time <= self.opp_state.time else 1


@dataclass(frozen=True)
class TransitionModel:
    """1-D motion over the checkpoint lattice.

    Segment time = length / mean of the bin representative speeds; the
    length picks up the lateral lane-change extension. Transitions breaking
    the longitudinal accel window or jumping more than one lane are dropped.
    """

    spacing: float
    lane_width: float
    n_lanes: int
    bins: SpeedBins = SpeedBins()
    accel_max: float = 6.0
    decel_max: float = 8.0
    min_sep_time: float = 0.5

    @classmethod
    def from_track(cls, track: TrackModel, **kw) -> "TransitionModel":
        return cls(spacing=track.spacing, lane_width=track.lane_width,
                   n_lanes=track.n_lanes, **kw)

    @lru_cache(maxsize=None)
    def moves(self, lane: int, speed_bin: int) -> tuple[tuple[int, int, float], ...]:
        """Feasible (lane', bin', dt) triples in canonical order.

        Lane ascending, speed bin descending: ties on cost resolve to the
        fastest bin, so lane-cost planning does not slow the car down.
        """
        out = []
        for lane2 in range(max(0, lane - 1), min(self.n_lanes, lane + 2)):
            dl = abs(lane2 - lane)
            length = math.hypot(self.spacing, dl * self.lane_width)
            for bin2 in range(self.bins.n_bins - 1, -1, -1):
                v0 = self.bins.rep(speed_bin)
                v1 = self.bins.rep(bin2)
                accel = (v1 * v1 - v0 * v0) / (2.0 * length)
                if accel > self.accel_max or accel < -self.decel_max:
                    continue
                out.append((lane2, bin2, length / (0.5 * (v0 + v1))))
        return tuple(out)


def discretize(
    state: VehicleState,
    track: TrackModel,
    bins: SpeedBins = SpeedBins(),
    time: float = 0.0,
    lap: int = 0,
) -> DiscreteState:
    """Continuous state to lattice node; raises NoLaneError off the lattice."""
    f = track.frenet(np.array([state.x, state.y]), state.phi)
    if abs(f.e1) > track.half_width:
        raise NoLaneError(f"lateral offset {f.e1:.3f} outside half width")
    return DiscreteState(
        checkpoint=track.last_checkpoint(f.s) + lap * track.n_checkpoints,
        lane=track.lane_of(f.e1),
        speed_bin=bins.bin_of(state.vx),
        wear_bin=0,
        time=time,
    )


def feasible_transitions(
    state: DiscreteState, model: TransitionModel
) -> list[tuple[DiscreteState, float]]:
    """Candidate successors at checkpoint+1 with their arrival times."""
    out = []
    for lane2, bin2, dt in model.moves(state.lane, state.speed_bin):
        arrival = state.time + dt
        out.append(
            (
                DiscreteState(state.checkpoint + 1, lane2, bin2,
                              state.wear_bin, arrival),
                arrival,
            )
        )
    return out


def collision_excluded(a: DiscreteState, b: DiscreteState,
                       min_sep_time: float) -> bool:
    """Same checkpoint + same lane + arrival gap strictly inside the window."""
    return (
        a.checkpoint == b.checkpoint
        and a.lane == b.lane
        and abs(a.time - b.time) < min_sep_time
    )


def plan_cost(plan: list[DiscreteState], optimal_lanes) -> float:
    """Sum of squared lane distances to the optimal-lane table."""
    if len(optimal_lanes) == 0:
        raise ValueError("empty optimal-lane table")
    k = len(optimal_lanes)
    return float(
        sum((optimal_lanes[s.checkpoint % k] - s.lane) ** 2 for s in plan)
    )


@dataclass
class PlanResult:
    my_plan: list[DiscreteState]
    opp_plan: list[DiscreteState]
    cost: float  # root player's cost in the requested mode
    degraded: bool
    solved: bool
    rollouts: int

    def to_dict(self) -> dict:
        def enc(states):
            return [
                {"checkpoint": s.checkpoint, "lane": s.lane,
                 "speed_bin": s.speed_bin, "time": s.time}
                for s in states
            ]

        return {"my_plan": enc(self.my_plan), "opp_plan": enc(self.opp_plan),
                "cost": self.cost, "degraded": self.degraded,
                "solved": self.solved}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


class _Node:
    __slots__ = ("mover", "moves", "edges", "children", "visits", "backed",
                 "n_expanded", "solved", "exact", "best")

    def __init__(self, mover, moves):
        self.mover = mover
        self.moves = moves  # tuple of (lane, bin, dt)
        self.edges = ()  # per-move 4-vector cost increments
        self.children = [None] * len(moves)
        self.visits = 0
        # min-backup value: lex-best cost-to-go over the sampled subtree
        # (plain visit means average in UCT exploration of bad moves and
        # systematically favor the most-visited child)
        self.backed = None
        self.n_expanded = 0
        self.solved = False
        self.exact = None  # 4-vector cost to go
        self.best = None  # move index once solved


class _Game:
    """Search-time game state: both traces plus cost bookkeeping."""

    def __init__(self, root: GameNode, model: TransitionModel, optimal_lanes,
                 mode: CostMode, horizon: int):
        self.model = model
        self.lanes = list(optimal_lanes)
        self.k = len(self.lanes)
        self.mode = mode
        self.horizon = horizon
        self.traces = ([root.my_state], [root.opp_state])

    def done(self, p: int) -> bool:
        return len(self.traces[p]) > self.horizon

    def terminal(self) -> bool:
        return self.done(0) and self.done(1)

    def mover(self) -> int:
        if self.done(0):
            return 1
        if self.done(1):
            return 0
        return 0 if self.traces[0][-1].time <= self.traces[1][-1].time else 1

    def legal_moves(self, p: int) -> tuple:
        cur = self.traces[p][-1]
        opp_trace = self.traces[1 - p]
        opp_root_cp = opp_trace[0].checkpoint
        target_cp = cur.checkpoint + 1
        idx = target_cp - opp_root_cp
        opp_at = opp_trace[idx] if 0 <= idx < len(opp_trace) else None
        out = []
        for lane2, bin2, dt in self.model.moves(cur.lane, cur.speed_bin):
            if opp_at is not None and opp_at.lane == lane2 and (
                abs(cur.time + dt - opp_at.time) < self.model.min_sep_time
            ):
                continue
            out.append((lane2, bin2, dt))
        return tuple(out)

    def move_cost(self, p: int, move):
        """(primary0, primary1, secondary0, secondary1) cost increments.

        Primary is the mode cost (lane distance or signed time difference);
        secondary is the mover's own segment time, used only as a
        lexicographic tie-break so lane-equivalent plans never favor
        crawling.
        """
        lane2, _, dt = move
        vec = [0.0, 0.0, 0.0, 0.0]
        if self.mode is CostMode.RACELINE_DISTANCE:
            cp = self.traces[p][-1].checkpoint + 1
            vec[p] = (self.lanes[cp % self.k] - lane2) ** 2
        else:
            vec[p] = dt
            vec[1 - p] = -dt
        vec[2 + p] = dt
        return tuple(vec)

    def apply(self, p: int, move):
        cur = self.traces[p][-1]
        lane2, bin2, dt = move
        self.traces[p].append(
            DiscreteState(cur.checkpoint + 1, lane2, bin2, cur.wear_bin,
                          cur.time + dt)
        )

    def undo(self, p: int):
        self.traces[p].pop()

    def rollout(self, rng):
        """Greedy playout to terminal; returns the accumulated 4-vector."""
        applied = []
        acc = [0.0, 0.0, 0.0, 0.0]
        while not self.terminal():
            p = self.mover()
            moves = self.legal_moves(p)
            if not moves:
                acc[p] += _STUCK_COST
                break
            scores = [self._greedy_score(p, m) for m in moves]
            best = min(scores)
            idx_best = [i for i, sc in enumerate(scores) if sc == best]
            i = idx_best[0] if len(idx_best) == 1 else rng.choice(idx_best)
            edge = self.move_cost(p, moves[i])
            for j in range(4):
                acc[j] += edge[j]
            self.apply(p, moves[i])
            applied.append(p)
        for p in reversed(applied):
            self.undo(p)
        return tuple(acc)

    def _greedy_score(self, p, move):
        lane2, bin2, dt = move
        if self.mode is CostMode.RACELINE_DISTANCE:
            cp = self.traces[p][-1].checkpoint + 1
            return ((self.lanes[cp % self.k] - lane2) ** 2, dt)
        return (dt, -bin2)


_STUCK_COST = 1e6


def plan(
    root: GameNode,
    optimal_lanes,
    model: TransitionModel,
    budget: int = 2000,
    cost_mode: CostMode = CostMode.RACELINE_DISTANCE,
    rng_seed: int = 0,
    horizon: int = 6,
    uct_c: float = math.sqrt(2.0),
) -> PlanResult:
    """UCT search over the alternating-move game; deterministic per seed.

    Values are 4-vectors (mode cost per player, own segment time per player)
    compared lexicographically for the mover. Nodes back up the lex-best
    sampled value (min-backup); subtrees whose children are all solved
    propagate exact values, so a budget above the game-tree size yields the
    exhaustive minimax plan with canonical tie-breaking.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if horizon > len(optimal_lanes):
        raise ValueError("horizon cannot exceed the lane-table length")
    game = _Game(root, model, optimal_lanes, cost_mode, horizon)
    rng = np.random.default_rng(rng_seed)

    def make_node() -> _Node:
        """Node for the current game position; caches legal moves and their
        (position-dependent) edge costs."""
        if game.terminal():
            node = _Node(0, ())
            node.solved = True
            node.exact = (0.0, 0.0, 0.0, 0.0)
            node.backed = node.exact
            return node
        q = game.mover()
        moves = game.legal_moves(q)
        node = _Node(q, moves)
        node.edges = tuple(game.move_cost(q, m) for m in moves)
        if not moves:
            node.solved = True
            ex = [0.0, 0.0, 0.0, 0.0]
            ex[q] = _STUCK_COST
            node.exact = tuple(ex)
            node.backed = node.exact
        return node

    root_node = make_node()
    if root_node.solved and not root_node.moves:
        return _fallback_plan(game)

    rollouts = 0
    for _ in range(budget):
        if root_node.solved:
            break
        rollouts += 1
        node = root_node
        path = [node]
        prefix = [(0.0, 0.0, 0.0, 0.0)]  # edge costs above each path node
        applied = []
        costs = [0.0, 0.0, 0.0, 0.0]

        while True:
            if node.solved:
                for j in range(4):
                    costs[j] += node.exact[j]
                break
            p = node.mover
            if node.n_expanded < len(node.moves):
                i = node.n_expanded
                node.n_expanded += 1
                edge = node.edges[i]
                for j in range(4):
                    costs[j] += edge[j]
                game.apply(p, node.moves[i])
                applied.append(p)
                child = make_node()
                node.children[i] = child
                path.append(child)
                prefix.append(tuple(costs))
                if child.solved:
                    for j in range(4):
                        costs[j] += child.exact[j]
                else:
                    tail = game.rollout(rng)
                    for j in range(4):
                        costs[j] += tail[j]
                break
            # all children expanded: solve the node or select by UCT
            unsolved = [i for i, ch in enumerate(node.children)
                        if not ch.solved]
            if not unsolved:
                best_i, best_val = None, None
                for i, ch in enumerate(node.children):
                    edge = node.edges[i]
                    val = tuple(ch.exact[j] + edge[j] for j in range(4))
                    if best_val is None or (val[p], val[2 + p]) < (
                        best_val[p], best_val[2 + p]
                    ):
                        best_i, best_val = i, val
                node.solved = True
                node.exact = best_val
                node.backed = best_val
                node.best = best_i
                for j in range(4):
                    costs[j] += best_val[j]
                break
            log_n = math.log(max(node.visits, 1))
            best_i, best_score = None, math.inf
            for i in unsolved:
                ch = node.children[i]
                edge = node.edges[i]
                value = (ch.backed[p] + edge[p]) + 1e-6 * (
                    ch.backed[2 + p] + edge[2 + p]
                )
                score = value - uct_c * math.sqrt(log_n / ch.visits)
                if score < best_score:
                    best_i, best_score = i, score
            edge = node.edges[best_i]
            for j in range(4):
                costs[j] += edge[j]
            game.apply(p, node.moves[best_i])
            applied.append(p)
            node = node.children[best_i]
            path.append(node)
            prefix.append(tuple(costs))

        # min-backup from the frontier to the root
        for depth in range(len(path) - 1, -1, -1):
            nd = path[depth]
            nd.visits += 1
            if nd.solved:
                nd.backed = nd.exact
                continue
            q = nd.mover
            if nd.n_expanded == 0:
                tail = tuple(costs[j] - prefix[depth][j] for j in range(4))
                if nd.backed is None or (tail[q], tail[2 + q]) < (
                    nd.backed[q], nd.backed[2 + q]
                ):
                    nd.backed = tail
                continue
            best = None
            for i in range(nd.n_expanded):
                ch = nd.children[i]
                if ch.backed is None:
                    continue
                edge = nd.edges[i]
                val = tuple(ch.backed[j] + edge[j] for j in range(4))
                if best is None or (val[q], val[2 + q]) < (
                    best[q], best[2 + q]
                ):
                    best = val
            if best is not None:
                nd.backed = best
        for p in reversed(applied):
            game.undo(p)

    return _extract_plan(root_node, game, cost_mode, rollouts)


def _fallback_plan(game: _Game) -> PlanResult:
    """Stay-in-lane plan when the root has no feasible move."""
    for p in (0, 1):
        for _ in range(game.horizon):
            cur = game.traces[p][-1]
            dt = game.model.spacing / game.model.bins.rep(cur.speed_bin)
            game.traces[p].append(
                DiscreteState(cur.checkpoint + 1, cur.lane, cur.speed_bin,
                              cur.wear_bin, cur.time + dt)
            )
    my_plan = game.traces[0][1:]
    opp_plan = game.traces[1][1:]
    cost = plan_cost(my_plan, game.lanes)
    return PlanResult(my_plan, opp_plan, cost, degraded=True, solved=False,
                      rollouts=0)


def _extract_plan(root_node: _Node, game: _Game, cost_mode: CostMode,
                  rollouts: int) -> PlanResult:
    """Walk the tree along lex-best children, completing greedily past it."""
    node = root_node
    degraded = False
    while not game.terminal():
        p = game.mover()
        if node is None or not node.moves:
            moves = game.legal_moves(p)
            if not moves:
                degraded = True
                cur = game.traces[p][-1]
                dt = game.model.spacing / game.model.bins.rep(cur.speed_bin)
                game.traces[p].append(
                    DiscreteState(cur.checkpoint + 1, cur.lane, cur.speed_bin,
                                  cur.wear_bin, cur.time + dt)
                )
                node = None
                continue
            scores = [game._greedy_score(p, m) for m in moves]
            i = scores.index(min(scores))
            game.apply(p, moves[i])
            node = None
            continue
        if node.solved and node.best is not None:
            i = node.best
        else:
            best_i, best_key = None, None
            for i, ch in enumerate(node.children):
                if ch is None or ch.backed is None:
                    continue
                edge = node.edges[i]
                key = (ch.backed[p] + edge[p], ch.backed[2 + p] + edge[2 + p])
                if best_key is None or key < best_key:
                    best_i, best_key = i, key
            if best_i is None:
                node = None  # unexplored: finish greedily
                continue
            i = best_i
        game.apply(p, node.moves[i])
        node = node.children[i]

    my_plan = list(game.traces[0][1:])
    opp_plan = list(game.traces[1][1:])
    if cost_mode is CostMode.RACELINE_DISTANCE:
        cost = plan_cost(my_plan, game.lanes)
    else:
        cost = (game.traces[0][-1].time - game.traces[1][-1].time)
    return PlanResult(my_plan, opp_plan, cost, degraded=degraded,
                      solved=root_node.solved, rollouts=rollouts)
