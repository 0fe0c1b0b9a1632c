"""Signal controllers sharing one decision interface.

Every controller sees a :class:`DecisionView` once per decision interval and
returns one phase per intersection. Learning controllers store the previous
step's transition when the next view (carrying its reward) arrives.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .agent import AgentConfig, BroadAgent, Transition
from .broadnet import BroadNetConfig
from .dscim import AgentPosition, NeighborMode, aggregate, global_threshold, needs_interaction, select_neighbors
from .traffic import OBS_DIM, SIGNAL_PHASES, Phase, Scenario


class ControllerKind(str, Enum):
    FT = "FT"
    SOTL = "SOTL"
    SABRL = "SABRL"
    MABRL_ORIGINAL = "MABRL_ORIGINAL"
    MABRL_RANDOM = "MABRL_RANDOM"
    MABRL_DSCIM = "MABRL_DSCIM"


def derive_seed(master: int, *tags) -> int:
    """64-bit child seed: SeedSequence over the master seed and CRC32 of each tag."""
    words = [int(master) & 0xFFFFFFFF, (int(master) >> 32) & 0xFFFFFFFF]
    for tag in tags:
        words.append(tag if isinstance(tag, int) else zlib.crc32(str(tag).encode()))
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


@dataclass
class DecisionView:
    step: int
    time: int  # seconds since episode start
    observations: np.ndarray  # n x OBS_DIM, sums over the last window (zeros at step 0)
    rewards: np.ndarray  # n, rewards of the last window (zeros at step 0)
    phases: np.ndarray  # n, phase in force or pending behind yellow
    queues: np.ndarray  # n x 4, instantaneous queue per phase group
    positions: Sequence[AgentPosition]
    window: int  # decision interval in ticks


@dataclass
class NetworkSettings:
    l_m: int = 10
    k: int = 10
    l_e: int = 25
    q: int = 10
    map_activation: str = "tanh"
    enh_activation: str = "tanh"


@dataclass
class ControllerSettings:
    agent: AgentConfig = field(default_factory=AgentConfig)
    network: NetworkSettings = field(default_factory=NetworkSettings)
    include_phase: bool = True  # append a one-hot of the current phase to the local input
    input_scale: float = 0.25
    neighbor_mode: str = NeighborMode.NEAREST.value
    ft_durations: tuple[int, ...] = (30, 30, 30, 30)
    sotl_threshold: float = 8.0


def ft_act(t: float, durations: Sequence[float]) -> Phase:
    """Phase of a fixed-time cycle at time ``t`` (phases in signal order)."""
    if len(durations) != 4 or min(durations) <= 0:
        raise ValueError("fixed-time plan needs four positive durations")
    t = t % sum(durations)
    for phase, d in zip(SIGNAL_PHASES, durations):
        if t < d:
            return phase
        t -= d
    return SIGNAL_PHASES[-1]


def next_phase(p) -> Phase:
    return SIGNAL_PHASES[(int(p) + 1) % 4]


def sotl_act(current, group_queues, theta: float) -> Phase:
    """Advance the cycle once the queues facing red reach ``theta``; else hold."""
    if theta <= 0:
        raise ValueError("SOTL threshold must be positive")
    current = Phase(int(current))
    q = np.asarray(group_queues, dtype=float)
    red = q.sum() - q[int(current)]
    return next_phase(current) if red >= theta else current


def encode_observation(obs, window: int, scale: float) -> np.ndarray:
    """Squash raw window sums into network inputs: scale * log1p(per-tick mean)."""
    return scale * np.log1p(np.asarray(obs, dtype=float) / window)


class Controller:
    kind: ControllerKind

    def __init__(self, n: int):
        self.n = n
        self.interact = np.zeros(n, dtype=bool)

    def begin_episode(self, view: DecisionView) -> None:
        pass

    def act(self, view: DecisionView) -> np.ndarray:
        raise NotImplementedError

    def end_episode(self, view: DecisionView) -> None:
        pass


class FixedTimeController(Controller):
    kind = ControllerKind.FT

    def __init__(self, n: int, durations: Sequence[float] = (30, 30, 30, 30)):
        super().__init__(n)
        self.durations = tuple(durations)
        ft_act(0, self.durations)

    def act(self, view):
        return np.full(self.n, int(ft_act(view.time, self.durations)))


class SOTLController(Controller):
    kind = ControllerKind.SOTL

    def __init__(self, n: int, theta: float = 8.0):
        super().__init__(n)
        self.theta = theta

    def act(self, view):
        return np.array([int(sotl_act(view.phases[i], view.queues[i], self.theta)) for i in range(self.n)])


class _LearningController(Controller):
    def __init__(self, n: int, settings: ControllerSettings):
        super().__init__(n)
        self.settings = settings
        self._pending: tuple[np.ndarray, np.ndarray] | None = None

    def _local(self, view) -> np.ndarray:
        x = encode_observation(view.observations, view.window, self.settings.input_scale)
        if self.settings.include_phase:
            x = np.hstack([x, np.eye(4)[np.asarray(view.phases, dtype=int)]])
        return x

    def _net_config(self, input_dim: int, joint_dim: int, actions: int) -> BroadNetConfig:
        ns = self.settings.network
        return BroadNetConfig(input_dim=input_dim, joint_dim=joint_dim, action_count=actions, l_m=ns.l_m, k=ns.k,
                              l_e=ns.l_e, q=ns.q, map_activation=ns.map_activation, enh_activation=ns.enh_activation)

    @property
    def local_dim(self) -> int:
        return OBS_DIM + (4 if self.settings.include_phase else 0)

    def begin_episode(self, view):
        self._pending = None

    def end_episode(self, view):
        self._store(self._states(view), view.rewards)
        self._pending = None


class MABRLController(_LearningController):
    """One broad agent per intersection; ``kind`` selects how joint info is wired.

    ORIGINAL feeds zeros, RANDOM feeds uniform noise on [0, running max of the
    encoded observations], DSCIM feeds the encoded mean observation of the
    nearest agents whenever an agent's last reward is at or below the mean.
    """

    def __init__(self, kind: ControllerKind, scenario: Scenario, settings: ControllerSettings, seed: int):
        super().__init__(scenario.n_intersections, settings)
        if kind not in (ControllerKind.MABRL_ORIGINAL, ControllerKind.MABRL_RANDOM, ControllerKind.MABRL_DSCIM):
            raise ValueError(f"{kind} is not a MABRL variant")
        self.kind = kind
        cfg = self._net_config(self.local_dim, OBS_DIM, len(SIGNAL_PHASES))
        self.agents = [
            BroadAgent(cfg, settings.agent, seed=derive_seed(seed, "agent", i),
                       rng=np.random.default_rng(derive_seed(seed, "epsilon", i)))
            for i in range(self.n)
        ]
        self.noise_rng = np.random.default_rng(derive_seed(seed, "random-joint"))
        self.obs_scale = 0.0
        mode = NeighborMode(settings.neighbor_mode)
        positions = scenario.positions()
        self.neighbors = [select_neighbors(positions, i, mode) for i in range(self.n)]

    def joint_info(self, view) -> tuple[np.ndarray, np.ndarray]:
        joint = np.zeros((self.n, OBS_DIM))
        flags = np.zeros(self.n, dtype=bool)
        scale = self.settings.input_scale
        if self.kind is ControllerKind.MABRL_RANDOM:
            enc = encode_observation(view.observations, view.window, scale)
            self.obs_scale = max(self.obs_scale, float(enc.max()))
            joint = self.noise_rng.uniform(0.0, self.obs_scale, size=(self.n, OBS_DIM))
            flags[:] = True
        elif self.kind is ControllerKind.MABRL_DSCIM:
            g = global_threshold(view.rewards, self.n)
            for i in range(self.n):
                if self.neighbors[i] and needs_interaction(view.rewards[i], g):
                    flags[i] = True
                    joint[i] = encode_observation(aggregate(view.observations, self.neighbors[i])[0], view.window, scale)
        return joint, flags

    def _states(self, view) -> np.ndarray:
        joint, self.interact = self.joint_info(view)
        return np.hstack([self._local(view), joint])

    def _store(self, states, rewards):
        if self._pending is None:
            return
        prev_s, prev_a = self._pending
        for i, agent in enumerate(self.agents):
            agent.observe(Transition(prev_s[i], int(prev_a[i]), float(rewards[i]), states[i]))

    def act(self, view):
        states = self._states(view)
        self._store(states, view.rewards)
        actions = np.array([agent.act(states[i]) for i, agent in enumerate(self.agents)], dtype=np.int64)
        self._pending = (states, actions)
        return actions


class SABRLController(_LearningController):
    """A single broad agent over the concatenated state of every intersection.

    The output holds one 4-action block per intersection; the agent is trained
    on the network-wide reward (sum over intersections).
    """

    kind = ControllerKind.SABRL

    def __init__(self, scenario: Scenario, settings: ControllerSettings, seed: int):
        super().__init__(scenario.n_intersections, settings)
        cfg = self._net_config(self.local_dim * self.n, 0, len(SIGNAL_PHASES) * self.n)
        self.agent = BroadAgent(cfg, settings.agent, seed=derive_seed(seed, "agent", 0),
                                rng=np.random.default_rng(derive_seed(seed, "epsilon", 0)), blocks=self.n)

    def _states(self, view) -> np.ndarray:
        return self._local(view).reshape(1, -1)

    def _store(self, states, rewards):
        if self._pending is None:
            return
        prev_s, prev_a = self._pending
        self.agent.observe(Transition(prev_s[0], prev_a, float(np.sum(rewards)), states[0]))

    def act(self, view):
        states = self._states(view)
        self._store(states, view.rewards)
        actions = np.atleast_1d(np.asarray(self.agent.act(states[0]), dtype=np.int64))
        self._pending = (states, actions)
        return actions


def make_controller(kind: ControllerKind | str, scenario: Scenario, settings: ControllerSettings | None = None,
                    seed: int = 0) -> Controller:
    kind = ControllerKind(kind)
    settings = settings or ControllerSettings()
    n = scenario.n_intersections
    if kind is ControllerKind.FT:
        return FixedTimeController(n, settings.ft_durations)
    if kind is ControllerKind.SOTL:
        return SOTLController(n, settings.sotl_threshold)
    if kind is ControllerKind.SABRL:
        return SABRLController(scenario, settings, seed)
    return MABRLController(kind, scenario, settings, seed)
