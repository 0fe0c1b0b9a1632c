"""Episode loop, metrics files and mean/std summaries.

Output files (all written into the run's output directory):

``metrics.csv``
    one row per (arm, seed, episode, step, agent)::

        arm,seed,episode,step,agent,reward,queue_length,waiting_time,action,interact

    ``queue_length`` and ``waiting_time`` are the window sums over all twelve
    lanes of the intersection; ``interact`` is 1 when the agent received
    joint information for that decision.
``episodes.csv``
    one row per (arm, seed, episode)::

        arm,seed,episode,mean_reward,mean_queue_length,mean_waiting_time,mean_travel_time,spawned,exited

    waiting/travel times are per-vehicle averages over every vehicle that
    entered the network during the episode; unfinished trips count up to the
    episode end.
``summary.json``
    the output of :func:`summarize`.

Seeds: each master seed ``s`` derives the demand of episode ``e`` from
``derive_seed(s, "scenario", e)``, so every arm run with the same seeds sees
identical traffic. Agent weights and exploration use separate streams.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import statistics
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .agent import AgentConfig
from .controllers import (
    Controller,
    ControllerKind,
    ControllerSettings,
    DecisionView,
    NetworkSettings,
    derive_seed,
    make_controller,
)
from .traffic import Scenario, TrafficWorld

log = logging.getLogger(__name__)

METRICS_HEADER = ["arm", "seed", "episode", "step", "agent", "reward", "queue_length", "waiting_time", "action", "interact"]
EPISODES_HEADER = ["arm", "seed", "episode", "mean_reward", "mean_queue_length", "mean_waiting_time",
                   "mean_travel_time", "spawned", "exited"]


@dataclass
class ExperimentConfig:
    scenario: Scenario = field(default_factory=Scenario)
    controller: ControllerKind = ControllerKind.MABRL_DSCIM
    episodes: int = 100
    seeds: list[int] | None = None  # None -> [scenario.seed]
    agent: AgentConfig = field(default_factory=AgentConfig)
    network: NetworkSettings = field(default_factory=NetworkSettings)
    include_phase: bool = True
    input_scale: float = 0.25
    neighbor_mode: str = "nearest"
    ft_durations: tuple[int, ...] = (30, 30, 30, 30)
    sotl_threshold: float = 8.0
    burn_in: float = 0.5
    output_dir: str = "runs/latest"

    def __post_init__(self):
        self.controller = ControllerKind(self.controller)
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if not 0 <= self.burn_in < 1:
            raise ValueError("burn_in must be in [0, 1)")

    @property
    def seed_list(self) -> list[int]:
        return list(self.seeds) if self.seeds else [self.scenario.seed]

    def controller_settings(self) -> ControllerSettings:
        return ControllerSettings(agent=self.agent, network=self.network, include_phase=self.include_phase,
                                  input_scale=self.input_scale, neighbor_mode=self.neighbor_mode,
                                  ft_durations=tuple(self.ft_durations), sotl_threshold=self.sotl_threshold)


@dataclass
class EpisodeResult:
    episode: int
    mean_reward: float
    mean_queue_length: float
    mean_waiting_time: float
    mean_travel_time: float
    spawned: int
    exited: int


def _view(world: TrafficWorld, step: int, obs: np.ndarray, rewards: np.ndarray) -> DecisionView:
    return DecisionView(
        step=step,
        time=world.time,
        observations=obs,
        rewards=rewards,
        phases=np.array([int(world.target_phase(i)) for i in range(world.n)]),
        queues=world.group_queues(),
        positions=world.positions,
        window=world.scenario.decision_interval,
    )


def run_episode(world: TrafficWorld, controller: Controller, episode: int, seed: int,
                on_row: Callable[[list], None] | None = None, arm: str = "") -> EpisodeResult:
    scn = world.scenario
    world.reset(derive_seed(seed, "scenario", episode))
    zeros = np.zeros(world.n)
    view = _view(world, 0, world.observe_all(), zeros)
    controller.begin_episode(view)
    reward_sum = queue_sum = 0.0
    for step in range(scn.decision_steps):
        actions = controller.act(view)
        interact = controller.interact.copy()
        for i in range(world.n):
            world.apply_action(i, actions[i])
        world.run(scn.decision_interval)
        obs = world.observe_all()
        rewards = world.rewards()
        queues = world.acc_l.sum(axis=1)
        waits = world.acc_w.sum(axis=1)
        reward_sum += float(rewards.sum())
        queue_sum += float(queues.sum())
        if on_row is not None:
            for i in range(world.n):
                on_row([arm, seed, episode, step, i, repr(float(rewards[i])), repr(float(queues[i])),
                        repr(float(waits[i])), int(actions[i]), int(interact[i])])
        world.reset_window()
        view = _view(world, step + 1, obs, rewards)
    controller.end_episode(view)
    stats = world.vehicle_stats()
    count = scn.decision_steps * world.n
    return EpisodeResult(episode, reward_sum / count, queue_sum / count, stats["mean_waiting_time"],
                         stats["mean_travel_time"], stats["spawned"], stats["exited"])


def run_arm(config: ExperimentConfig, seed: int, kind: ControllerKind | None = None,
            on_row: Callable[[list], None] | None = None) -> list[EpisodeResult]:
    """All episodes of one controller and one master seed."""
    kind = ControllerKind(kind or config.controller)
    world = TrafficWorld(config.scenario)
    controller = make_controller(kind, config.scenario, config.controller_settings(), seed)
    results = []
    for ep in range(config.episodes):
        t0 = time.perf_counter()
        res = run_episode(world, controller, ep, seed, on_row, kind.value)
        log.info("%s seed=%d episode=%d reward=%.3f wait=%.1f (%.1fs)", kind.value, seed, ep, res.mean_reward,
                 res.mean_waiting_time, time.perf_counter() - t0)
        results.append(res)
    return results


def run(config: ExperimentConfig, arms: Iterable[ControllerKind | str] | None = None) -> dict:
    """Run every (arm, seed), write metrics/episodes/summary files, return the summary."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    arms = [ControllerKind(a) for a in (arms or [config.controller])]
    metrics_path = out / "metrics.csv"
    with open(metrics_path, "w", newline="") as mf, open(out / "episodes.csv", "w", newline="") as ef:
        mw = csv.writer(mf, lineterminator="\n")
        ew = csv.writer(ef, lineterminator="\n")
        mw.writerow(METRICS_HEADER)
        ew.writerow(EPISODES_HEADER)
        for kind in arms:
            for seed in config.seed_list:
                for res in run_arm(config, seed, kind, mw.writerow):
                    ew.writerow([kind.value, seed, res.episode, repr(res.mean_reward), repr(res.mean_queue_length),
                                 repr(res.mean_waiting_time), repr(res.mean_travel_time), res.spawned, res.exited])
    summary = summarize(metrics_path, config.burn_in)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary


# -- summaries -----------------------------------------------------------------

def mean_std(values: Iterable[float]) -> tuple[float, float]:
    """Mean and population standard deviation."""
    values = list(values)
    if not values:
        return math.nan, math.nan
    return statistics.fmean(values), statistics.pstdev(values)


def _window(episodes: list[int], burn_in: float) -> set[int]:
    ordered = sorted(episodes)
    skip = int(math.floor(len(ordered) * burn_in))
    return set(ordered[skip:]) if skip < len(ordered) else set(ordered[-1:])


def _stats(per_episode: dict[str, list[float]]) -> dict:
    out = {"episodes": len(next(iter(per_episode.values()), []))}
    for name, values in per_episode.items():
        m, s = mean_std(values)
        out[f"{name}_mean"] = m
        out[f"{name}_std"] = s
    return out


def summarize(metrics_path, burn_in: float = 0.5) -> dict:
    """Mean +/- std of per-episode averages after discarding the first ``burn_in`` fraction.

    Per (arm, seed) tables come from ``metrics.csv``; waiting and travel time
    columns are added when an ``episodes.csv`` sits next to it. The pooled
    table for an arm pools the windowed episodes of all its seeds.
    """
    metrics_path = Path(metrics_path)
    sums: dict[tuple, list[float]] = defaultdict(lambda: [0.0, 0.0, 0])
    with open(metrics_path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["arm"], int(row["seed"]), int(row["episode"]))
            acc = sums[key]
            acc[0] += float(row["reward"])
            acc[1] += float(row["queue_length"])
            acc[2] += 1
    if not sums:
        raise ValueError(f"{metrics_path} has no metric rows")

    extra: dict[tuple, dict[str, float]] = {}
    episodes_path = metrics_path.with_name("episodes.csv")
    if episodes_path.exists():
        with open(episodes_path, newline="") as fh:
            for row in csv.DictReader(fh):
                extra[(row["arm"], int(row["seed"]), int(row["episode"]))] = {
                    "waiting_time": float(row["mean_waiting_time"]),
                    "travel_time": float(row["mean_travel_time"]),
                }

    by_run: dict[tuple[str, int], list[int]] = defaultdict(list)
    for arm, seed, ep in sums:
        by_run[(arm, seed)].append(ep)

    runs: dict[str, dict[str, dict]] = defaultdict(dict)
    pooled_values: dict[str, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for (arm, seed), eps in sorted(by_run.items()):
        kept = sorted(_window(eps, burn_in))
        values: dict[str, list[float]] = defaultdict(list)
        for ep in kept:
            total_r, total_q, count = sums[(arm, seed, ep)]
            values["reward"].append(total_r / count)
            values["queue_length"].append(total_q / count)
            for name, v in extra.get((arm, seed, ep), {}).items():
                values[name].append(v)
        runs[arm][str(seed)] = _stats(values)
        for name, vs in values.items():
            pooled_values[arm][name].extend(vs)
    pooled = {arm: _stats(values) for arm, values in pooled_values.items()}
    return {"burn_in": burn_in, "runs": dict(runs), "pooled": pooled}


def format_summary(summary: dict) -> str:
    cols = [("reward", "reward"), ("queue_length", "queue"), ("waiting_time", "waiting (s)"), ("travel_time", "travel (s)")]
    lines = [f"{'arm':<16}{'seed':>8}" + "".join(f"{title:>22}" for _, title in cols)]

    def fmt(stats, name):
        if f"{name}_mean" not in stats:
            return f"{'-':>22}"
        return f"{stats[name + '_mean']:>13.3f} ± {stats[name + '_std']:<6.2f}"

    for arm, seeds in summary["runs"].items():
        for seed, stats in seeds.items():
            lines.append(f"{arm:<16}{seed:>8}" + "".join(fmt(stats, n) for n, _ in cols))
        lines.append(f"{arm:<16}{'pooled':>8}" + "".join(fmt(summary["pooled"][arm], n) for n, _ in cols))
    return "\n".join(lines)


def final_mean_reward(results: list[EpisodeResult], last: int = 10) -> float:
    return statistics.fmean(r.mean_reward for r in results[-last:])
