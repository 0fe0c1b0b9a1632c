"""Flat broad network used as the Q-function approximator.

Layout of one forward pass for a batch ``X`` (local input) and ``J``
(joint/neighbour input)::

    Z  = phi(X @ w_m + beta_m)            mapped features, l_m groups of k
    Z' = [Z | J]
    H  = zeta(Z' @ w_e + beta_e)          enhancement features, l_e groups of q
    U  = [Z | H]
    Q  = U @ w_out

Everything except ``w_out`` is drawn once and never touched again.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .linalg import DimensionError, as_matrix

_ACTIVATIONS = {
    "tanh": np.tanh,
    "identity": lambda x: x,
    "sigmoid": lambda x: 1.0 / (1.0 + np.exp(-x)),
}
MAP_ACTIVATIONS = ("tanh", "identity")
ENH_ACTIVATIONS = ("tanh", "sigmoid", "identity")

FROZEN_FIELDS = ("w_m", "beta_m", "w_e", "beta_e")


@dataclass(frozen=True)
class BroadNetConfig:
    input_dim: int
    action_count: int
    joint_dim: int = 0
    l_m: int = 10
    k: int = 10
    l_e: int = 25
    q: int = 10
    map_activation: str = "tanh"
    enh_activation: str = "tanh"

    def __post_init__(self):
        for name in ("input_dim", "l_m", "k", "l_e", "q"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.joint_dim < 0:
            raise ValueError(f"joint_dim must be >= 0, got {self.joint_dim}")
        if self.action_count < 2:
            raise ValueError(f"action_count must be >= 2, got {self.action_count}")
        if self.map_activation not in MAP_ACTIVATIONS:
            raise ValueError(f"map_activation must be one of {MAP_ACTIVATIONS}")
        if self.enh_activation not in ENH_ACTIVATIONS:
            raise ValueError(f"enh_activation must be one of {ENH_ACTIVATIONS}")

    @property
    def mapped_width(self) -> int:
        return self.l_m * self.k

    @property
    def enhancement_width(self) -> int:
        return self.l_e * self.q

    @property
    def feature_width(self) -> int:
        return self.mapped_width + self.enhancement_width


@dataclass(frozen=True)
class BroadNetParams:
    """Immutable parameter snapshot; use :func:`set_output_weight` to get a new one."""

    config: BroadNetConfig
    w_m: np.ndarray
    beta_m: np.ndarray
    w_e: np.ndarray
    beta_e: np.ndarray
    w_out: np.ndarray

    def frozen_digest(self) -> str:
        h = hashlib.sha256()
        for name in FROZEN_FIELDS:
            arr = getattr(self, name)
            h.update(repr(arr.shape).encode())
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def init_params(config: BroadNetConfig, seed: int) -> BroadNetParams:
    """Draw the frozen weights from PCG64(seed), uniform on [-1, 1].

    Draw order is fixed: the l_m mapped blocks (input_dim x k each), beta_m,
    the l_e enhancement blocks ((l_m*k + joint_dim) x q each), beta_e.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    enh_in = config.mapped_width + config.joint_dim
    w_m = np.hstack([rng.uniform(-1.0, 1.0, (config.input_dim, config.k)) for _ in range(config.l_m)])
    beta_m = rng.uniform(-1.0, 1.0, (1, config.mapped_width))
    w_e = np.hstack([rng.uniform(-1.0, 1.0, (enh_in, config.q)) for _ in range(config.l_e)])
    beta_e = rng.uniform(-1.0, 1.0, (1, config.enhancement_width))
    w_out = np.zeros((config.feature_width, config.action_count))
    return BroadNetParams(config, _readonly(w_m), _readonly(beta_m), _readonly(w_e), _readonly(beta_e), _readonly(w_out))


def features(params: BroadNetParams, x_local, x_joint=None) -> np.ndarray:
    cfg = params.config
    x = as_matrix(x_local, "x_local")
    if x.shape[1] != cfg.input_dim:
        raise DimensionError(f"x_local has {x.shape[1]} columns, network expects {cfg.input_dim}")
    if x_joint is None:
        j = np.zeros((x.shape[0], cfg.joint_dim))
    else:
        j = np.asarray(x_joint, dtype=np.float64)
        if j.ndim == 1:
            j = j.reshape(1, -1)
        if j.shape != (x.shape[0], cfg.joint_dim):
            raise DimensionError(f"x_joint has shape {j.shape}, expected {(x.shape[0], cfg.joint_dim)}")
    phi = _ACTIVATIONS[cfg.map_activation]
    zeta = _ACTIVATIONS[cfg.enh_activation]
    z = phi(x @ params.w_m + params.beta_m)
    z_joint = np.hstack([z, j]) if cfg.joint_dim else z
    h = zeta(z_joint @ params.w_e + params.beta_e)
    return np.hstack([z, h])


def forward(params: BroadNetParams, x_local, x_joint=None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(U, Q)`` for a batch of rows. ``x_joint=None`` means all-zero joint input."""
    u = features(params, x_local, x_joint)
    return u, u @ params.w_out


def set_output_weight(params: BroadNetParams, w) -> BroadNetParams:
    w = as_matrix(w, "w_out")
    expected = (params.config.feature_width, params.config.action_count)
    if w.shape != expected:
        raise DimensionError(f"w_out must be {expected[0]}x{expected[1]}, got {w.shape[0]}x{w.shape[1]}")
    return dataclasses.replace(params, w_out=_readonly(w.copy()))


# -- checkpointing -----------------------------------------------------------
#
# {"format": "mabrl-broadnet/1", "config": {...BroadNetConfig fields...},
#  "arrays": {"w_m": {"shape": [r, c], "data": [row-major floats]}, ...}}
# Floats are written with repr precision, so a round trip is bit-exact.

CHECKPOINT_FORMAT = "mabrl-broadnet/1"


def params_to_dict(params: BroadNetParams) -> dict:
    arrays = {}
    for name in FROZEN_FIELDS + ("w_out",):
        arr = getattr(params, name)
        arrays[name] = {"shape": list(arr.shape), "data": arr.ravel().tolist()}
    return {"format": CHECKPOINT_FORMAT, "config": dataclasses.asdict(params.config), "arrays": arrays}


def params_from_dict(d: dict) -> BroadNetParams:
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {d.get('format')!r}")
    config = BroadNetConfig(**d["config"])
    arrs = {}
    for name, spec in d["arrays"].items():
        data = np.asarray(spec["data"], dtype=np.float64)
        arrs[name] = _readonly(data.reshape(spec["shape"]))
    params = BroadNetParams(config, **arrs)
    if params.w_out.shape != (config.feature_width, config.action_count):
        raise ValueError("checkpoint w_out shape does not match its config")
    return params


def save_params(params: BroadNetParams, path) -> None:
    Path(path).write_text(json.dumps(params_to_dict(params)))


def load_params(path) -> BroadNetParams:
    return params_from_dict(json.loads(Path(path).read_text()))
