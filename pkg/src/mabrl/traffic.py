"""Discrete-time (1 s tick) point-queue traffic simulator on a grid.

Each intersection has four approaches (N, E, S, W = side the vehicle comes
from) with a left, straight and right lane each, indexed
``lane = approach * 3 + movement``. Four protected phases gate the left and
straight lanes; right turns are always allowed. Vehicles queue at the stop
line, discharge at the saturation flow while their lane is green, spend a
fixed link travel time on the way to the next intersection, and leave the
network at the boundary.

Tick ``t`` covers ``[t, t+1)`` and runs, in order: discharge, link arrivals
joining queues, new spawns joining queues, yellow countdown, window
accumulation at ``now = t + 1``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .dscim import AgentPosition

N, E, S, W = range(4)
SIDES = "NESW"
LEFT, STRAIGHT, RIGHT = range(3)
LANES = 12
GROUPS = 4  # observation groups, one per phase
_DROW = (-1, 0, 1, 0)  # row delta when heading N, E, S, W
_DCOL = (0, 1, 0, -1)


class Phase(IntEnum):
    EW_STRAIGHT = 0
    EW_LEFT = 1
    NS_STRAIGHT = 2
    NS_LEFT = 3
    YELLOW = 4


SIGNAL_PHASES = (Phase.EW_STRAIGHT, Phase.EW_LEFT, Phase.NS_STRAIGHT, Phase.NS_LEFT)


def lane_index(approach: int, movement: int) -> int:
    return approach * 3 + movement


PHASE_LANES = {
    Phase.EW_STRAIGHT: (lane_index(E, STRAIGHT), lane_index(W, STRAIGHT)),
    Phase.EW_LEFT: (lane_index(E, LEFT), lane_index(W, LEFT)),
    Phase.NS_STRAIGHT: (lane_index(N, STRAIGHT), lane_index(S, STRAIGHT)),
    Phase.NS_LEFT: (lane_index(N, LEFT), lane_index(S, LEFT)),
}
RIGHT_LANES = tuple(lane_index(a, RIGHT) for a in range(4))

# allowed[phase] -> which of the 12 lanes may discharge
_ALLOWED = np.zeros((5, LANES), dtype=bool)
for _p, _lanes in PHASE_LANES.items():
    _ALLOWED[_p, list(_lanes)] = True
_ALLOWED[:, list(RIGHT_LANES)] = True

# lanes -> observation groups (right-turn lanes are not observed)
GROUP_MATRIX = np.zeros((LANES, GROUPS))
for _p, _lanes in PHASE_LANES.items():
    GROUP_MATRIX[list(_lanes), int(_p)] = 1.0

OBS_DIM = 3 * GROUPS


def turn_heading(heading: int, movement: int) -> int:
    if movement == STRAIGHT:
        return heading
    return (heading + 1) % 4 if movement == RIGHT else (heading - 1) % 4


@dataclass
class Scenario:
    rows: int = 3
    cols: int = 3
    block_length: float = 300.0  # metres; only used for agent positions
    lanes_per_movement: int = 1  # multiplies the saturation flow
    arrival_rate: float = 0.1  # vehicles/s per entry point
    side_rates: dict[str, float] = field(default_factory=dict)  # per-side override, e.g. {"W": 0.2}
    turn_ratios: tuple[float, float, float] = (0.1, 0.6, 0.3)  # left, straight, right
    saturation_flow: float = 1.0  # vehicles/s per lane on green
    decision_interval: int = 10  # seconds per agent decision
    yellow_duration: int = 3
    link_travel_time: int = 20
    episode_seconds: int = 3600
    queue_weight: float | None = None  # reward weight; None -> -1 / decision_interval
    max_route_hops: int | None = None  # after this many turns vehicles go straight; None -> rows + cols
    seed: int = 0
    vehicles: list[dict] | None = None  # explicit demand, replaces Poisson arrivals

    def __post_init__(self):
        self.turn_ratios = tuple(float(x) for x in self.turn_ratios)
        self.side_rates = {str(k).upper(): float(v) for k, v in dict(self.side_rates).items()}
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid must have at least one row and one column")
        if len(self.turn_ratios) != 3 or min(self.turn_ratios) < 0 or not math.isclose(sum(self.turn_ratios), 1.0, abs_tol=1e-9):
            raise ValueError(f"turn_ratios must be three non-negative numbers summing to 1, got {self.turn_ratios}")
        if self.arrival_rate < 0 or any(v < 0 for v in self.side_rates.values()):
            raise ValueError("arrival rates must be >= 0")
        if set(self.side_rates) - set(SIDES):
            raise ValueError(f"side_rates keys must be among {list(SIDES)}")
        if self.saturation_flow <= 0 or self.lanes_per_movement < 1:
            raise ValueError("saturation_flow and lanes_per_movement must be positive")
        if self.decision_interval < 1 or self.yellow_duration < 0 or self.link_travel_time < 1:
            raise ValueError("decision_interval >= 1, yellow_duration >= 0, link_travel_time >= 1 required")
        if self.episode_seconds < self.decision_interval:
            raise ValueError("episode_seconds must cover at least one decision interval")
        if self.block_length <= 0:
            raise ValueError("block_length must be positive")

    @property
    def n_intersections(self) -> int:
        return self.rows * self.cols

    @property
    def reward_weight(self) -> float:
        return -1.0 / self.decision_interval if self.queue_weight is None else float(self.queue_weight)

    @property
    def decision_steps(self) -> int:
        return self.episode_seconds // self.decision_interval

    def node(self, row: int, col: int) -> int:
        return row * self.cols + col

    def positions(self) -> list[AgentPosition]:
        return [AgentPosition(c * self.block_length, r * self.block_length)
                for r in range(self.rows) for c in range(self.cols)]

    def entries(self) -> list[tuple[str, int, int]]:
        """(side, node, heading) for every boundary entry point, ordered N, E, S, W."""
        out = []
        out += [("N", self.node(0, c), S) for c in range(self.cols)]
        out += [("E", self.node(r, self.cols - 1), W) for r in range(self.rows)]
        out += [("S", self.node(self.rows - 1, c), N) for c in range(self.cols)]
        out += [("W", self.node(r, 0), E) for r in range(self.rows)]
        return out

    def entry_rate(self, side: str) -> float:
        return self.side_rates.get(side, self.arrival_rate)


@dataclass(slots=True)
class Vehicle:
    id: int
    route: list[int]  # intersection ids, in order
    lanes: list[int]  # lane used at each route intersection
    spawn_time: int
    hop: int = 0  # index into route of the intersection currently queued at / heading to
    wait: int = 0  # completed waiting seconds (excludes the current queue spell)
    entry: int = -1  # time stamp the current queue spell began; -1 when not queued
    due: int = -1  # time stamp the vehicle reaches its next queue; -1 when not in transit
    exit_time: int = -1


def sample_route(scn: Scenario, node: int, heading: int, rng: np.random.Generator) -> tuple[list[int], list[int]]:
    max_hops = scn.rows + scn.cols if scn.max_route_hops is None else scn.max_route_hops
    p_left = scn.turn_ratios[0]
    p_left_straight = p_left + scn.turn_ratios[1]
    route, lanes = [], []
    row, col = divmod(node, scn.cols)
    while True:
        if len(route) >= max_hops:
            movement = STRAIGHT
        else:
            x = rng.random()
            movement = LEFT if x < p_left else STRAIGHT if x < p_left_straight else RIGHT
        route.append(scn.node(row, col))
        lanes.append(lane_index((heading + 2) % 4, movement))
        heading = turn_heading(heading, movement)
        row, col = row + _DROW[heading], col + _DCOL[heading]
        if not (0 <= row < scn.rows and 0 <= col < scn.cols):
            return route, lanes


def route_from_nodes(scn: Scenario, route: list[int], enter_from: str, exit_to: str) -> list[int]:
    """Lane sequence for an explicit route given as adjacent intersection ids."""
    if not route:
        raise ValueError("route must not be empty")
    for nid in route:
        if not 0 <= nid < scn.n_intersections:
            raise ValueError(f"intersection {nid} is outside the {scn.rows}x{scn.cols} grid")
    approach = SIDES.index(enter_from.upper())
    r0, c0 = divmod(route[0], scn.cols)
    # entering from side X means the neighbour on side X is off-grid
    if 0 <= r0 + _DROW[approach] < scn.rows and 0 <= c0 + _DCOL[approach] < scn.cols:
        raise ValueError(f"vehicle cannot enter intersection {route[0]} from side {enter_from}")
    lanes = []
    for k, nid in enumerate(route):
        heading = (approach + 2) % 4
        row, col = divmod(nid, scn.cols)
        if k + 1 < len(route):
            nr, nc = divmod(route[k + 1], scn.cols)
            steps = [h for h in range(4) if (row + _DROW[h], col + _DCOL[h]) == (nr, nc)]
            if not steps:
                raise ValueError(f"intersections {nid} and {route[k + 1]} are not adjacent")
            out = steps[0]
        else:
            out = SIDES.index(exit_to.upper())
            if 0 <= row + _DROW[out] < scn.rows and 0 <= col + _DCOL[out] < scn.cols:
                raise ValueError(f"vehicle cannot exit intersection {nid} towards {exit_to}")
        turn = (out - heading) % 4
        if turn == 2:
            raise ValueError(f"U-turn at intersection {nid} is not allowed")
        lanes.append(lane_index(approach, {0: STRAIGHT, 1: RIGHT, 3: LEFT}[turn]))
        approach = (out + 2) % 4
    return lanes


class TrafficWorld:
    """Mutable simulation state for one scenario; call :meth:`reset` per episode."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.n = scenario.n_intersections
        self.positions = scenario.positions()
        self.freeze_red = False  # test hook: nothing discharges, right turns included
        self.reset(scenario.seed)

    # -- setup -----------------------------------------------------------
    def reset(self, seed: int | None = None) -> None:
        scn = self.scenario
        self.time = 0
        self.queues = [[deque() for _ in range(LANES)] for _ in range(self.n)]
        self.qlen = np.zeros((self.n, LANES), dtype=np.int64)
        self.entry_sum = np.zeros((self.n, LANES), dtype=np.int64)
        self.inbound = np.zeros((self.n, LANES), dtype=np.int64)
        self.credit = np.zeros((self.n, LANES))
        self.phase = np.full(self.n, int(Phase.EW_STRAIGHT), dtype=np.int64)
        self.successor = np.full(self.n, -1, dtype=np.int64)
        self.yellow_left = np.zeros(self.n, dtype=np.int64)
        self.transit: dict[int, list[Vehicle]] = {}
        self.vehicles: list[Vehicle] = []
        self.spawned = 0
        self.exited = 0
        self.reset_window()
        self._schedule = self._build_demand(scn.seed if seed is None else seed)

    def _build_demand(self, seed: int) -> dict[int, list[Vehicle]]:
        scn = self.scenario
        schedule: dict[int, list[Vehicle]] = {}
        if scn.vehicles is not None:
            specs = sorted(enumerate(scn.vehicles), key=lambda kv: (int(kv[1]["spawn_time"]), kv[0]))
            for _, spec in specs:
                route = [int(x) for x in spec["route"]]
                lanes = route_from_nodes(scn, route, spec["enter_from"], spec["exit_to"])
                v = Vehicle(len(self.vehicles), route, lanes, int(spec["spawn_time"]))
                self.vehicles.append(v)
                schedule.setdefault(v.spawn_time, []).append(v)
            return schedule
        rng = np.random.default_rng(seed)
        entries = scn.entries()
        rates = np.array([scn.entry_rate(side) for side, _, _ in entries])
        counts = rng.poisson(rates, size=(scn.episode_seconds, len(entries)))
        for t, e in zip(*np.nonzero(counts)):
            _, node, heading = entries[e]
            for _ in range(counts[t, e]):
                route, lanes = sample_route(scn, node, heading, rng)
                v = Vehicle(len(self.vehicles), route, lanes, int(t))
                self.vehicles.append(v)
                schedule.setdefault(int(t), []).append(v)
        return schedule

    def reset_window(self) -> None:
        self.acc_n = np.zeros((self.n, LANES))
        self.acc_w = np.zeros((self.n, LANES))
        self.acc_l = np.zeros((self.n, LANES))
        self.window_ticks = 0

    # -- signals ---------------------------------------------------------
    def current_phase(self, i: int) -> Phase:
        return Phase(int(self.phase[i]))

    def target_phase(self, i: int) -> Phase:
        """The phase in force, or the one waiting behind the current yellow."""
        p = int(self.phase[i])
        return Phase(int(self.successor[i])) if p == Phase.YELLOW else Phase(p)

    def apply_action(self, i: int, a) -> None:
        a = Phase(int(a))
        if a == Phase.YELLOW:
            raise ValueError("YELLOW is not a selectable action")
        if self.phase[i] == Phase.YELLOW:
            self.successor[i] = a  # no yellow restart
            return
        if self.phase[i] == a:
            return
        if self.scenario.yellow_duration == 0:
            self.phase[i] = a
            return
        self.phase[i] = Phase.YELLOW
        self.successor[i] = a
        self.yellow_left[i] = self.scenario.yellow_duration

    # -- dynamics --------------------------------------------------------
    def _enqueue(self, v: Vehicle, stamp: int) -> None:
        i, lane = v.route[v.hop], v.lanes[v.hop]
        v.entry = stamp
        v.due = -1
        self.queues[i][lane].append(v)
        self.qlen[i, lane] += 1
        self.entry_sum[i, lane] += stamp

    def tick(self) -> None:
        scn = self.scenario
        t = self.time
        now = t + 1
        if self.freeze_red:
            self.credit[:] = 0.0
        else:
            movable = _ALLOWED[self.phase] & (self.qlen > 0)
            self.credit[~movable] = 0.0
            flow = scn.saturation_flow * scn.lanes_per_movement
            travel = scn.link_travel_time
            for i, lane in zip(*np.nonzero(movable)):
                c = self.credit[i, lane] + flow
                q = self.queues[i][lane]
                k = min(int(c), len(q))
                for _ in range(k):
                    v = q.popleft()
                    v.wait += t - v.entry
                    self.entry_sum[i, lane] -= v.entry
                    v.entry = -1
                    if v.hop + 1 < len(v.route):
                        v.hop += 1
                        v.due = t + travel
                        self.inbound[v.route[v.hop], v.lanes[v.hop]] += 1
                        self.transit.setdefault(v.due, []).append(v)
                    else:
                        v.exit_time = now
                        self.exited += 1
                self.qlen[i, lane] -= k
                self.credit[i, lane] = 0.0 if not q else c - k

        for v in self.transit.pop(now, ()):
            self.inbound[v.route[v.hop], v.lanes[v.hop]] -= 1
            self._enqueue(v, now)
        for v in self._schedule.pop(t, ()):
            self._enqueue(v, now)
            self.spawned += 1

        yellow = self.phase == Phase.YELLOW
        if yellow.any():
            self.yellow_left[yellow] -= 1
            done = yellow & (self.yellow_left <= 0)
            self.phase[done] = self.successor[done]
            self.successor[done] = -1

        self.acc_l += self.qlen
        self.acc_w += self.qlen * now - self.entry_sum
        self.acc_n += self.qlen + self.inbound
        self.window_ticks += 1
        self.time = now

    def run(self, ticks: int) -> None:
        for _ in range(ticks):
            self.tick()

    # -- readouts --------------------------------------------------------
    def observe(self, i: int) -> np.ndarray:
        """[N per group, W per group, L per group] summed over the current window."""
        return np.concatenate([self.acc_n[i] @ GROUP_MATRIX, self.acc_w[i] @ GROUP_MATRIX, self.acc_l[i] @ GROUP_MATRIX])

    def observe_all(self) -> np.ndarray:
        return np.hstack([self.acc_n @ GROUP_MATRIX, self.acc_w @ GROUP_MATRIX, self.acc_l @ GROUP_MATRIX])

    def reward(self, i: int) -> float:
        return self.scenario.reward_weight * float(self.acc_l[i].sum())

    def rewards(self) -> np.ndarray:
        return self.scenario.reward_weight * self.acc_l.sum(axis=1)

    def group_queues(self) -> np.ndarray:
        """Instantaneous queue length per phase group, shape (n, 4)."""
        return self.qlen @ GROUP_MATRIX

    def vehicle_waiting(self, v: Vehicle) -> int:
        return v.wait + (self.time - v.entry if v.entry >= 0 else 0)

    @property
    def in_network(self) -> int:
        return int(self.qlen.sum() + self.inbound.sum())

    def vehicle_stats(self) -> dict[str, float]:
        """Per-vehicle averages over everything spawned so far (unfinished trips count up to now)."""
        spawned = [v for v in self.vehicles if v.spawn_time < self.time]
        if not spawned:
            return {"spawned": 0, "exited": 0, "mean_waiting_time": 0.0, "mean_travel_time": 0.0}
        waits = [self.vehicle_waiting(v) for v in spawned]
        travel = [(v.exit_time if v.exit_time >= 0 else self.time) - v.spawn_time for v in spawned]
        return {
            "spawned": len(spawned),
            "exited": self.exited,
            "mean_waiting_time": float(np.mean(waits)),
            "mean_travel_time": float(np.mean(travel)),
        }
