"""Run configuration and its flat ``key = value`` text format."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

from ..controller import MODES, TrainConfig, VariantConfig
from ..errors import ConfigError
from ..ppo import PpoConfig
from ..trpo import TrpoConfig

OUTPUT_ROOT_ENV = "MPPO_OUTPUT_ROOT"

_BATCH_DEFAULT = {"trpo": 5000, "ppo": 2048}


@dataclass
class RunConfig:
    env: str = "maze"
    algorithm: str = "trpo"
    mode: str = "mppo"
    K: int = 8
    alpha: float = 0.1
    seed: int = 0
    total_steps: int = 1_000_000
    eval_interval: int = 10_000
    eval_episodes: int = 10
    batch_size: int = 0  # 0: 5000 for trpo, 2048 for ppo
    gamma: float = 0.995
    lam: float = 0.97
    value_iters: int = 5
    value_minibatch: int = 64
    value_step_size: float = 1e-3
    max_kl: float = 0.01
    cg_iters: int = 20
    cg_damping: float = 0.1
    backtrack_coef: float = 0.5
    max_backtracks: int = 10
    clip_eps: float = 0.2
    ppo_epochs: int = 10
    ppo_minibatch: int = 64
    ppo_step_size: float = 3e-4
    gain_estimator: str = "improvement"
    maze_layout: str = ""  # empty: packaged layout
    output_dir: str = ""

    def __post_init__(self):
        if self.batch_size == 0:
            self.batch_size = _BATCH_DEFAULT.get(self.algorithm, 0)
        if self.mode == "single_path":
            self.K = 1
        self.validate()

    def validate(self) -> None:
        if self.env not in ("maze", "swingup"):
            raise ConfigError(f"env must be maze or swingup, got {self.env!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.total_steps < 0:
            raise ConfigError("total_steps must be >= 0")
        if self.eval_interval < 1 or self.eval_episodes < 1:
            raise ConfigError("eval_interval and eval_episodes must be >= 1")
        if self.mode.startswith("multi") and self.batch_size < self.K:
            raise ConfigError("multi modes need batch_size >= K")
        # the nested configs carry the remaining range checks
        self.train_config()
        self.variant_config()

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            algorithm=self.algorithm, batch_size=self.batch_size, gamma=self.gamma, lam=self.lam,
            value_iters=self.value_iters, value_minibatch=self.value_minibatch,
            value_step_size=self.value_step_size, gain_estimator=self.gain_estimator,
            trpo=TrpoConfig(self.max_kl, self.cg_iters, self.cg_damping, self.backtrack_coef, self.max_backtracks),
            ppo=PpoConfig(self.clip_eps, self.ppo_epochs, self.ppo_minibatch, self.ppo_step_size),
        )

    def variant_config(self) -> VariantConfig:
        return VariantConfig(self.mode, self.K, self.alpha)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def group_key(self) -> tuple:
        """Everything except seed and output location; runs sharing it are seeds of one experiment."""
        d = dataclasses.asdict(self)
        d.pop("seed")
        d.pop("output_dir")
        return tuple(sorted(d.items()))

    def tag(self) -> str:
        tag = f"{self.env}-{self.algorithm}-{self.mode}"
        if self.mode != "single_path":
            tag += f"-K{self.K}-a{self.alpha:g}"
        return tag

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw: str):
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = _TYPES[key]
    kind = getattr(kind, "__name__", kind)
    raw = raw.strip()
    try:
        if kind == "int":
            value = float(raw)
            if not value.is_integer():
                raise ValueError
            return int(value)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def parse_pairs(lines) -> dict:
    out = {}
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        out[key] = _convert(key, raw)
    return out


def preset_names() -> list[str]:
    root = resources.files("mppo.configs")
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def read_config_text(source: str) -> str:
    """Text of a config file path or of a packaged preset name."""
    path = Path(source)
    if path.is_file():
        return path.read_text()
    if source in preset_names():
        return resources.files("mppo.configs").joinpath(f"{source}.cfg").read_text()
    raise ConfigError(f"{source!r} is neither a config file nor a preset ({', '.join(preset_names())})")


def load_config(source: str | None = None, overrides: dict | None = None) -> RunConfig:
    values = parse_pairs(read_config_text(source).splitlines()) if source else {}
    values.update(overrides or {})
    return RunConfig(**values)


def parse_overrides(items) -> dict:
    return parse_pairs(items or [])


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
