"""Rule-based neighbour interaction: when to interact, with whom, and what to receive.

An agent interacts when its last reward is at or below the population mean
reward. It then consults the agents nearest to it (Euclidean distance) and
receives the entrywise mean of their observation vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

# distances within this tolerance count as ties
_DIST_TOL = 1e-9


class NeighborMode(str, Enum):
    NEAREST = "nearest"
    # count every agent at distance >= the minimum, i.e. all other agents
    PAPER_LITERAL = "paper_literal"


@dataclass(frozen=True)
class AgentPosition:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"position must be finite, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class InteractionDecision:
    interact: bool
    neighbor_ids: frozenset[int]
    joint_info: np.ndarray = field(repr=False)


def global_threshold(rewards: Sequence[float], n: int | None = None) -> float:
    """Mean reward over all ``n`` agents."""
    rewards = list(rewards)
    if not rewards:
        raise ValueError("global_threshold needs at least one reward")
    if n is None:
        n = len(rewards)
    if n != len(rewards):
        raise ValueError(f"got {len(rewards)} rewards for {n} agents")
    return math.fsum(rewards) / n


def needs_interaction(r_i: float, g: float) -> bool:
    # ties interact
    return r_i <= g


def distance(p: AgentPosition, q: AgentPosition) -> float:
    return math.hypot(p.x - q.x, p.y - q.y)


def select_neighbors(positions: Sequence[AgentPosition], i: int,
                     mode: NeighborMode | str = NeighborMode.NEAREST) -> set[int]:
    mode = NeighborMode(mode)
    if len(positions) < 2:
        return set()
    dists = {j: distance(positions[i], p) for j, p in enumerate(positions) if j != i}
    d_min = min(dists.values())
    if mode is NeighborMode.NEAREST:
        return {j for j, d in dists.items() if d <= d_min + _DIST_TOL}
    return {j for j, d in dists.items() if d >= d_min - _DIST_TOL}


def aggregate(observations, neighbor_ids) -> np.ndarray:
    """Entrywise mean of the selected observation vectors, as a 1 x dim row."""
    ids = sorted(neighbor_ids)
    if not ids:
        raise ValueError("aggregate needs at least one neighbour; gate on the interaction flag")
    obs = np.asarray(observations, dtype=np.float64)
    if obs.ndim != 2:
        raise ValueError("observations must all have the same dimension")
    return obs[ids].mean(axis=0, keepdims=True)


def decide(rewards: Sequence[float], positions: Sequence[AgentPosition], observations,
           i: int, mode: NeighborMode | str = NeighborMode.NEAREST) -> InteractionDecision:
    """Full when/who/what decision for agent ``i`` from one consistent snapshot."""
    obs = np.asarray(observations, dtype=np.float64)
    zeros = np.zeros((1, obs.shape[1]))
    g = global_threshold(rewards)
    neighbors = select_neighbors(positions, i, mode)
    if not neighbors or not needs_interaction(rewards[i], g):
        return InteractionDecision(False, frozenset(), zeros)
    return InteractionDecision(True, frozenset(neighbors), aggregate(obs, neighbors))
