"""Declarative run configuration.

A config file is a flat list of ``key.path = value`` lines (# comments
allowed). Values parse as JSON scalars when possible and fall back to
strings. Command-line flags override file values; the ablation mode sets
its reward weighting when the file does not pin one explicitly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .model import MODES, ModelDims
from .reward import RewardWeights
from .simulator import SimulationConfig
from .trainer import RlConfig, SupervisedConfig


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


@dataclass
class Paths:
    corpus: str = "data/sessions.jsonl"
    lexicon: str = ""
    stopwords: str = ""
    dull: str = "data/dull.txt"
    seeds: str = "data/seeds.txt"
    vectors_external: str = ""  # when set, preprocess copies instead of training
    work: str = "out"


@dataclass
class CorpusConfig:
    min_freq: int = 11
    cue_k: int = 999
    same_reply_cap: int = 10
    ept_cap: int = 1000


@dataclass
class VectorConfig:
    dim: int = 32
    epochs: int = 5
    window: int = 2
    negatives: int = 5
    lr: float = 0.05


@dataclass
class RunConfig:
    paths: Paths = field(default_factory=Paths)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    vectors: VectorConfig = field(default_factory=VectorConfig)
    model: ModelDims = field(default_factory=ModelDims)
    supervised: SupervisedConfig = field(default_factory=SupervisedConfig)
    rl: RlConfig = field(default_factory=RlConfig)
    reward_weights: RewardWeights = field(default_factory=RewardWeights)
    simulate: SimulationConfig = field(default_factory=SimulationConfig)
    scorer: str = "embedding"
    mode: str = "rlcw"
    seed: int = 7
    threads: int = 1
    alpha_pinned: bool = False  # file or flag set reward.alpha explicitly

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {', '.join(MODES)}")

    def apply_mode(self) -> None:
        """The single-reward ablations force their blend weight unless the
        config pinned one."""
        if self.alpha_pinned:
            return
        if self.mode == "rlcw_e":
            self.reward_weights.alpha = 1.0
        elif self.mode == "rlcw_r":
            self.reward_weights.alpha = 0.0

    def workdir(self) -> Path:
        return Path(self.paths.work)


# config key -> (section attribute, field name); "reward.*" maps onto
# RewardWeights and "scorer"/"mode"/"seed"/"threads" are top level.
_SECTIONS = {
    "paths": "paths",
    "corpus": "corpus",
    "vectors": "vectors",
    "model": "model",
    "supervised": "supervised",
    "rl": "rl",
    "reward": "reward_weights",
    "simulate": "simulate",
}
_TOP_LEVEL = {"mode", "seed", "threads"}


def _parse_value(raw: str):
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    cfg = RunConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}", f"expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        set_key(cfg, key.strip(), _parse_value(raw))
    cfg.__post_init__()
    return cfg


def set_key(cfg: RunConfig, key: str, value) -> None:
    if key == "reward.scorer":
        if not isinstance(value, str):
            raise ConfigError(key, "expected a string")
        cfg.scorer = value
        return
    if key in _TOP_LEVEL:
        _assign(cfg, key, key, value)
        if key == "mode" and value not in MODES:
            raise ConfigError("mode", f"must be one of {', '.join(MODES)}")
        return
    section_name, _, field_name = key.partition(".")
    if section_name not in _SECTIONS or not field_name:
        raise ConfigError(key, "unknown key")
    section = getattr(cfg, _SECTIONS[section_name])
    if not hasattr(section, field_name) or field_name.startswith("_"):
        raise ConfigError(key, "unknown key")
    _assign(section, field_name, key, value)
    if key == "reward.alpha":
        cfg.alpha_pinned = True


def _assign(obj, attr: str, key: str, value) -> None:
    current = getattr(obj, attr)
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected true/false, got {value!r}")
    elif isinstance(current, int) and not isinstance(value, bool):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
    elif isinstance(current, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(key, f"expected a number, got {value!r}")
        value = float(value)
    elif isinstance(current, str) and not isinstance(value, str):
        value = str(value)
    setattr(obj, attr, value)
    try:
        obj.__post_init__()
    except AttributeError:
        pass
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from exc


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    return parse_config_text(path.read_text(encoding="utf-8"), source=str(path))


def default_config_text() -> str:
    """A commented template covering every recognized key."""
    cfg = RunConfig()
    lines = ["# cueflow run configuration", ""]
    for section_key, attr in _SECTIONS.items():
        section = getattr(cfg, attr)
        for f in fields(section):
            if f.name.startswith("_"):
                continue
            value = getattr(section, f.name)
            rendered = json.dumps(value) if not isinstance(value, str) else value
            lines.append(f"{section_key}.{f.name} = {rendered}")
        lines.append("")
    lines.append(f"reward.scorer = {cfg.scorer}")
    lines.append(f"mode = {cfg.mode}")
    lines.append(f"seed = {cfg.seed}")
    lines.append(f"threads = {cfg.threads}")
    lines.append("")
    return "\n".join(lines)
