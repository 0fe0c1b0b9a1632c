"""One learning agent: replay memory, evaluation and target broad networks.

The Q-function is a broad network whose output weight is refit from scratch
by ridge regression on a replay batch every ``update_period`` steps. The
target network shares the frozen random weights and only lags in ``w_out``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .broadnet import BroadNetConfig, BroadNetParams, forward, init_params, set_output_weight
from .linalg import DimensionError, SolverError, ridge_solve

log = logging.getLogger(__name__)


@dataclass
class AgentConfig:
    gamma: float = 0.99
    ridge_lambda: float = 0.01
    pretrain_steps: int = 200
    epsilon_start: float = 0.1
    epsilon_min: float = 0.01
    epsilon_decay: float = 0.995  # multiplicative, per update
    update_period: int = 10
    batch_size: int = 512
    sync_period: int = 100
    memory_capacity: int = 10000
    learning_rate: float = 0.001  # kept for config parity; ridge updates have no step size

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be >= 0")
        for name in ("update_period", "batch_size", "sync_period", "memory_capacity"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.pretrain_steps < 0:
            raise ValueError("pretrain_steps must be >= 0")
        if not (0 <= self.epsilon_min <= 1 and 0 <= self.epsilon_start <= 1 and 0 < self.epsilon_decay <= 1):
            raise ValueError("epsilon schedule out of range")


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: int | Sequence[int]
    r: float
    s_next: np.ndarray


class Batch(NamedTuple):
    s: np.ndarray  # N x state_dim
    a: np.ndarray  # N x blocks, int
    r: np.ndarray  # N
    s_next: np.ndarray  # N x state_dim


def stack_transitions(transitions: Sequence[Transition]) -> Batch:
    if not transitions:
        raise ValueError("empty batch")
    s = np.vstack([np.ravel(t.s) for t in transitions])
    s_next = np.vstack([np.ravel(t.s_next) for t in transitions])
    a = np.vstack([np.atleast_1d(np.asarray(t.a, dtype=np.int64)) for t in transitions])
    r = np.array([t.r for t in transitions], dtype=np.float64)
    return Batch(s, a, r, s_next)


class ReplayMemory:
    """Fixed-capacity ring buffer; oldest transitions are evicted first."""

    def __init__(self, capacity: int, state_dim: int, blocks: int = 1):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._s = np.zeros((capacity, state_dim))
        self._s_next = np.zeros((capacity, state_dim))
        self._a = np.zeros((capacity, blocks), dtype=np.int64)
        self._r = np.zeros(capacity)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, t: Transition) -> None:
        i = self._next
        self._s[i] = np.ravel(t.s)
        self._s_next[i] = np.ravel(t.s_next)
        self._a[i] = np.atleast_1d(t.a)
        self._r[i] = t.r
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _order(self) -> np.ndarray:
        start = self._next if self._size == self.capacity else 0
        return (start + np.arange(self._size)) % self.capacity

    def batch(self, idx=None) -> Batch:
        """Rows ``idx`` (positions oldest-first); all rows when ``idx`` is None."""
        order = self._order()
        rows = order if idx is None else order[np.asarray(idx)]
        return Batch(self._s[rows].copy(), self._a[rows].copy(), self._r[rows].copy(), self._s_next[rows].copy())

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        n = min(n, self._size)
        return self.batch(np.sort(rng.choice(self._size, size=n, replace=False)))


class BroadAgent:
    """Evaluation/target network pair with least-squares Q-learning.

    ``blocks > 1`` splits the output into independent action blocks of
    ``action_count // blocks`` entries each; argmax and bootstrapping are taken
    per block. Plain agents use one block.
    """

    def __init__(self, net_config: BroadNetConfig, config: AgentConfig | None = None,
                 seed: int = 0, rng: np.random.Generator | None = None, blocks: int = 1):
        self.config = config or AgentConfig()
        if net_config.action_count % blocks:
            raise ValueError("action_count must be divisible by blocks")
        self.net_config = net_config
        self.blocks = blocks
        self.block_actions = net_config.action_count // blocks
        # both networks come from the same seed: identical frozen features
        self.ebn: BroadNetParams = init_params(net_config, seed)
        self.tbn: BroadNetParams = init_params(net_config, seed)
        self.state_dim = net_config.input_dim + net_config.joint_dim
        self.memory = ReplayMemory(self.config.memory_capacity, self.state_dim, blocks)
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self.epsilon = self.config.epsilon_start
        self.steps = 0
        self.updates = 0

    # -- forward helpers -------------------------------------------------
    def _split(self, s) -> tuple[np.ndarray, np.ndarray]:
        s = np.asarray(s, dtype=np.float64)
        if s.ndim == 1:
            s = s.reshape(1, -1)
        if s.shape[1] != self.state_dim:
            raise DimensionError(f"state has {s.shape[1]} entries, agent expects {self.state_dim}")
        d = self.net_config.input_dim
        return s[:, :d], s[:, d:]

    def q_eval(self, s) -> np.ndarray:
        return forward(self.ebn, *self._split(s))[1]

    def q_target(self, s) -> np.ndarray:
        return forward(self.tbn, *self._split(s))[1]

    def _blockwise(self, q: np.ndarray) -> np.ndarray:
        return q.reshape(q.shape[0], self.blocks, self.block_actions)

    # -- acting ----------------------------------------------------------
    def greedy(self, s) -> np.ndarray:
        """Per-block argmax of Q_E; np.argmax breaks ties toward the lowest index."""
        return self._blockwise(self.q_eval(s))[0].argmax(axis=1)

    def act(self, s, step: int | None = None, rng: np.random.Generator | None = None):
        step = self.steps if step is None else step
        rng = self.rng if rng is None else rng
        if step < self.config.pretrain_steps or rng.random() < self.epsilon:
            a = rng.integers(0, self.block_actions, size=self.blocks)
        else:
            a = self.greedy(s)
        return int(a[0]) if self.blocks == 1 else a

    # -- learning --------------------------------------------------------
    def build_targets(self, batch: Batch | Sequence[Transition], step: int | None = None):
        """Return ``(U, Y)``: features of ``s`` and regression targets.

        Each row of Y starts as the current Q_E(s); only the taken action's
        entry (per block) is replaced by ``r`` (before pre-training ends) or
        ``r + gamma * max_a Q_T(s_next)``.
        """
        if not isinstance(batch, Batch):
            batch = stack_transitions(batch)
        step = self.steps if step is None else step
        u, q = forward(self.ebn, *self._split(batch.s))
        y = q.copy()
        n = y.shape[0]
        if batch.a.shape != (n, self.blocks):
            raise DimensionError(f"actions have shape {batch.a.shape}, expected {(n, self.blocks)}")
        if step < self.config.pretrain_steps:
            target = np.repeat(batch.r[:, None], self.blocks, axis=1)
        else:
            q_next = self._blockwise(self.q_target(batch.s_next)).max(axis=2)
            target = batch.r[:, None] + self.config.gamma * q_next
        rows = np.arange(n)
        for b in range(self.blocks):
            y[rows, b * self.block_actions + batch.a[:, b]] = target[:, b]
        return u, y

    def update(self, batch: Batch | Sequence[Transition], lam: float | None = None,
               step: int | None = None) -> np.ndarray:
        lam = self.config.ridge_lambda if lam is None else lam
        u, y = self.build_targets(batch, step)
        try:
            w = ridge_solve(u, y, lam)
        except SolverError as exc:
            raise SolverError(f"output-weight update failed at step {self.steps}: {exc}") from exc
        self.ebn = set_output_weight(self.ebn, w)
        self.updates += 1
        return self.ebn.w_out

    def sync_target(self) -> None:
        self.tbn = set_output_weight(self.tbn, self.ebn.w_out)

    def observe(self, t: Transition) -> None:
        """Store one transition and run any scheduled update / target sync."""
        self.memory.push(t)
        self.steps += 1
        cfg = self.config
        if self.steps % cfg.update_period == 0:
            self.update(self.memory.sample(cfg.batch_size, self.rng))
            self.epsilon = max(cfg.epsilon_min, self.epsilon * cfg.epsilon_decay)
        if self.steps % cfg.sync_period == 0:
            self.sync_target()
