"""Plain-text ``key = value`` run configuration.

Keys may use dots or underscores (``ppo.lr`` and ``ppo_lr`` are the same).
Lines starting with ``#`` or ``;`` are comments. Unknown keys are errors so
typos do not silently fall back to defaults.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from typing import Dict, Tuple

from ..curriculum import MODES, TAGS
from ..rewards import METRIC_TAGS, RewardWeights
from ..rl.backends import DEFAULT_PROMPT_TEMPLATE, PROMPT_PLACEHOLDER
from ..rl.ppo import PpoConfig
from ..reward_model import TrainConfig

_SECTION = "run"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    dataset: str = "toy"
    seed: int = 0
    backend: str = "mutation"
    samples_per_input: int = 8
    candidates_k: int = 3
    generator_url: str = ""
    generator_token_env: str = "RESTL_GENERATOR_TOKEN"
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE
    encoder: str = "tfidf"
    encoder_url: str = ""
    lambda_a: float = 0.2
    lambda_t: float = 0.25
    lambda_l: float = 0.35
    lambda_s: float = 0.2
    eta: float = 0.05
    reward_mode: str = "metric"
    curriculum_a: str = "ap_count:forward"
    curriculum_t: str = "nl_similarity:forward"
    curriculum_l: str = "formula_length:forward"
    curriculum_s: str = "stl_similarity:forward"
    rm_epochs: int = 5
    rm_lr: float = 0.05
    rm_batch_size: int = 16
    ppo_clip: float = 0.2
    ppo_lr: float = 0.01
    ppo_epochs: int = 4
    ppo_batch_size: int = 32
    ppo_baseline_decay: float = 0.99
    ppo_total_episodes: int = 2000
    policy_max_depth: int = 0  # 0: deepest reference, capped at 4
    policy_feature_dim: int = 256

    def __post_init__(self):
        if self.backend not in ("mutation", "policy", "http"):
            raise ConfigError(f"backend must be mutation, policy or http, got {self.backend!r}")
        if self.backend == "http" and not self.generator_url:
            raise ConfigError("backend = http needs generator_url")
        if PROMPT_PLACEHOLDER not in self.prompt_template:
            raise ConfigError(f"prompt_template must contain {PROMPT_PLACEHOLDER}")
        if self.encoder not in ("tfidf", "http") or (self.encoder == "http" and not self.encoder_url):
            raise ConfigError("encoder must be tfidf, or http with encoder_url")
        if self.reward_mode not in ("metric", "model"):
            raise ConfigError(f"reward_mode must be metric or model, got {self.reward_mode!r}")
        if self.candidates_k < 2 or self.samples_per_input < self.candidates_k:
            raise ConfigError("need candidates_k >= 2 and samples_per_input >= candidates_k")
        for tag in METRIC_TAGS:
            self.curriculum(tag)
        try:
            self.weights()
            self.ppo()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def curriculum(self, metric: str) -> Tuple[str, str]:
        value = getattr(self, f"curriculum_{metric}")
        tag, _, mode = value.partition(":")
        mode = mode or "forward"
        if tag not in TAGS or mode not in MODES:
            raise ConfigError(f"curriculum_{metric} = {value!r}; expected <{'|'.join(TAGS)}>:<{'|'.join(MODES)}>")
        return tag, mode

    def weights(self) -> RewardWeights:
        return RewardWeights(self.lambda_a, self.lambda_t, self.lambda_l, self.lambda_s, self.eta)

    def ppo(self) -> PpoConfig:
        return PpoConfig(
            clip=self.ppo_clip, lr=self.ppo_lr, epochs=self.ppo_epochs, batch_size=self.ppo_batch_size,
            eta=self.eta, baseline_decay=self.ppo_baseline_decay, seed=self.seed,
            total_episodes=self.ppo_total_episodes, weights=self.weights(),
        )

    def rm(self) -> TrainConfig:
        return TrainConfig(epochs=self.rm_epochs, lr=self.rm_lr, batch_size=self.rm_batch_size, seed=self.seed)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()

    def dumps(self) -> str:
        def show(v):
            return v.replace("\n", "\\n") if isinstance(v, str) else v

        return "".join(f"{k} = {show(v)}\n" for k, v in asdict(self).items())


_TYPES = {f.name: type(f.default) for f in fields(RunConfig)}


def parse_config(text: str, **overrides) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(f"[{_SECTION}]\n{text}")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    values: Dict[str, object] = {}
    for raw_key, raw in parser.items(_SECTION):
        key = raw_key.strip().replace(".", "_").replace("-", "_")
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {raw_key!r}")
        kind = _TYPES[key]
        try:
            values[key] = raw.replace("\\n", "\n") if kind is str else kind(raw)
        except ValueError:
            raise ConfigError(f"{raw_key} = {raw!r} is not a valid {kind.__name__}") from None
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


def load_config(path=None, **overrides) -> RunConfig:
    if path is None:
        return parse_config("", **overrides)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, **overrides)


def with_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
