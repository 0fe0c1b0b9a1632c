"""YAML experiment/scenario files -> :class:`ExperimentConfig`.

Experiment file (every key optional)::

    controller: MABRL_DSCIM        # FT | SOTL | SABRL | MABRL_ORIGINAL | MABRL_RANDOM | MABRL_DSCIM
    episodes: 100
    seeds: [0, 1, 2]
    output_dir: runs/demo
    burn_in: 0.5
    include_phase: true
    input_scale: 0.25
    neighbor_mode: nearest         # nearest | paper_literal
    ft_durations: [30, 30, 30, 30]
    sotl_threshold: 8
    scenario: grid3x3.yaml         # path (relative to this file) or an inline mapping
    agent:   {gamma: 0.99, ridge_lambda: 0.01, pretrain_steps: 200, ...}
    network: {l_m: 10, k: 10, l_e: 25, q: 10, map_activation: tanh, enh_activation: tanh}

Scenario file keys are the fields of :class:`mabrl.traffic.Scenario`.
Explicit demand replaces Poisson arrivals::

    vehicles:
      - {spawn_time: 0, route: [0, 1, 2], enter_from: W, exit_to: E}

Errors are raised as :class:`ConfigError` with ``file:line`` prefixes.
"""

from __future__ import annotations

import dataclasses
import enum
import types
import typing
from pathlib import Path
from typing import Any

import yaml

from .agent import AgentConfig
from .controllers import NetworkSettings
from .harness import ExperimentConfig
from .traffic import Scenario


class ConfigError(ValueError):
    pass


class _Loc:
    """Where a value came from, for error messages."""

    def __init__(self, source: str, marks: dict[tuple, int]):
        self.source = source
        self.marks = marks

    def at(self, path: tuple) -> str:
        # nearest enclosing node that has a recorded line
        for k in range(len(path), -1, -1):
            if path[:k] in self.marks:
                line = self.marks[path[:k]]
                return f"{self.source}:{line}" if isinstance(line, int) else str(line)
        return self.source


def _construct(node: yaml.Node, path: tuple, marks: dict) -> Any:
    marks[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for key_node, value_node in node.value:
            key = _construct(key_node, path + ("<key>",), {})
            out[key] = _construct(value_node, path + (key,), marks)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_construct(v, path + (i,), marks) for i, v in enumerate(node.value)]
    loader = yaml.SafeLoader("")
    return loader.construct_object(node, deep=True)


def _parse_yaml(text: str, source: str) -> tuple[Any, _Loc]:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise ConfigError(f"{where}: invalid YAML: {getattr(exc, 'problem', exc)}") from None
    marks: dict[tuple, int] = {}
    data = {} if node is None else _construct(node, (), marks)
    return data, _Loc(source, marks)


def _fmt_path(path: tuple) -> str:
    return ".".join(str(p) for p in path) or "<root>"


def _coerce(value, hint, path: tuple, loc: _Loc):
    def fail(msg):
        raise ConfigError(f"{loc.at(path)}: {_fmt_path(path)}: {msg}")

    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], path, loc)
    if hint is Any or hint is object:
        return value
    if isinstance(hint, type) and issubclass(hint, enum.Enum):
        try:
            return hint(value)
        except ValueError:
            fail(f"expected one of {[m.value for m in hint]}, got {value!r}")
    if hint is bool:
        if not isinstance(value, bool):
            fail(f"expected true/false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            fail(f"expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            fail(f"expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            fail(f"expected a string, got {value!r}")
        return value
    if origin in (list, tuple):
        if not isinstance(value, list):
            fail(f"expected a list, got {value!r}")
        if origin is tuple and args and args[-1] is not Ellipsis:
            if len(value) != len(args):
                fail(f"expected {len(args)} entries, got {len(value)}")
            return tuple(_coerce(v, a, path + (i,), loc) for i, (v, a) in enumerate(zip(value, args)))
        item = args[0] if args else Any
        items = [_coerce(v, item, path + (i,), loc) for i, v in enumerate(value)]
        return tuple(items) if origin is tuple else items
    if origin is dict or hint is dict:
        if not isinstance(value, dict):
            fail(f"expected a mapping, got {value!r}")
        vt = args[1] if args else Any
        return {k: _coerce(v, vt, path + (k,), loc) for k, v in value.items()}
    return value


def _build(cls, data, path: tuple, loc: _Loc, nested: dict | None = None):
    if not isinstance(data, dict):
        raise ConfigError(f"{loc.at(path)}: {_fmt_path(path)}: expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"{loc.at(path + (key,))}: unknown key {_fmt_path(path + (key,))!r}")
        if nested and key in nested:
            kwargs[key] = nested[key](value, path + (key,))
        else:
            kwargs[key] = _coerce(value, hints[key], path + (key,), loc)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{loc.at(path)}: {_fmt_path(path)}: {exc}") from None


def _apply_override(data: dict, loc: _Loc, override: str) -> None:
    if "=" not in override:
        raise ConfigError(f"--set {override!r}: expected key=value")
    key, raw = override.split("=", 1)
    parts = tuple(p for p in key.strip().split("."))
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError:
        value = raw
    node = data
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = value
    loc.marks[parts] = f"--set {key.strip()}"


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read scenario file: {exc.strerror}") from None
    data, loc = _parse_yaml(text, str(path))
    return _scenario_from(data, (), loc)


def _scenario_from(data, path: tuple, loc: _Loc) -> Scenario:
    scn = _build(Scenario, data, path, loc)
    if scn.vehicles is not None:
        from .traffic import route_from_nodes
        for i, spec in enumerate(scn.vehicles):
            vpath = path + ("vehicles", i)
            missing = {"spawn_time", "route", "enter_from", "exit_to"} - set(spec)
            if missing:
                raise ConfigError(f"{loc.at(vpath)}: {_fmt_path(vpath)}: missing {sorted(missing)}")
            try:
                route_from_nodes(scn, [int(x) for x in spec["route"]], str(spec["enter_from"]), str(spec["exit_to"]))
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{loc.at(vpath)}: {_fmt_path(vpath)}: {exc}") from None
            if not isinstance(spec["spawn_time"], int) or not 0 <= spec["spawn_time"] < scn.episode_seconds:
                raise ConfigError(f"{loc.at(vpath)}: {_fmt_path(vpath)}: spawn_time must be an integer in [0, episode_seconds)")
    return scn


def load_config(path=None, overrides: list[str] = (), text: str | None = None) -> ExperimentConfig:
    """Parse an experiment file (or ``text``), apply ``key=value`` overrides, validate."""
    if text is None and path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config file: {exc.strerror}") from None
    source = str(path) if path is not None else "<config>"
    data, loc = _parse_yaml(text or "", source)
    if not isinstance(data, dict):
        raise ConfigError(f"{source}:1: top level must be a mapping")
    for ov in overrides:
        _apply_override(data, loc, ov)
    base = Path(path).parent if path is not None else Path(".")

    def scenario(value, p):
        if isinstance(value, str):
            return load_scenario(base / value)
        return _scenario_from(value, p, loc)

    nested = {
        "scenario": scenario,
        "agent": lambda v, p: _build(AgentConfig, v, p, loc),
        "network": lambda v, p: _build(NetworkSettings, v, p, loc),
    }
    return _build(ExperimentConfig, data, (), loc, nested)
