"""Run configuration: one JSON file, environment overrides, then CLI flags."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Mapping

from .errors import ConfigError
from .files import dump_json

SCORER_MODES = ("fallback", "sidecar", "replay")
EMBEDDER_MODES = ("tfidf", "sidecar", "replay")
ALGORITHMS = ("extup", "textrank", "lexrank")
ENV_PREFIX = "DOCBOOST_"


@dataclass(frozen=True)
class PipelineConfig:
    cache_dir: str = ".docboost-cache"
    output_dir: str = "out"
    examples_dir: str = ""

    scorer: str = "fallback"
    scorer_replay: str = ""
    embedder: str = "tfidf"
    embedder_replay: str = ""
    sidecar_cmd: str = ""

    llm_endpoint: str = ""
    llm_model: str = ""
    llm_replay: str = ""

    algorithm: str = "extup"
    phi: float = 0.85
    tol: float = 1e-6
    max_iter: int = 100
    sim_threshold: float = 0.1
    literal_out_degree: bool = False
    normalize_each_iter: bool = False

    k: int = 0
    budget_sentences: int = 5
    context_limit: int = 8192
    response_reserve: int = 500
    chars_per_token: float = 4.0

    context_threshold: float = 0.5
    concat_both: bool = False
    strict_provenance: bool = False

    bm25_k1: float = 1.2
    bm25_b: float = 0.75
    fetch_limit: int = 10
    example_pairs: int = 3
    seed: int = 42

    lexicons: dict[str, list[str]] | None = None

    @property
    def effective_k(self) -> int:
        return self.k if self.k >= 1 else 2 * self.budget_sentences

    def validate(self) -> "PipelineConfig":
        def check(ok: bool, message: str):
            if not ok:
                raise ConfigError(message)

        check(self.scorer in SCORER_MODES,
              f"scorer must be one of {SCORER_MODES}, got {self.scorer!r}")
        check(self.embedder in EMBEDDER_MODES,
              f"embedder must be one of {EMBEDDER_MODES}, got {self.embedder!r}")
        check(self.algorithm in ALGORITHMS,
              f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        check(0.0 <= self.phi < 1.0, f"phi must lie in [0, 1), got {self.phi}")
        check(self.tol > 0.0, f"tol must be positive, got {self.tol}")
        check(self.max_iter >= 1, f"max_iter must be >= 1, got {self.max_iter}")
        check(self.sim_threshold >= 0.0,
              f"sim_threshold must be >= 0, got {self.sim_threshold}")
        check(self.k >= 0, f"k must be >= 0 (0 means twice the budget), got {self.k}")
        check(self.budget_sentences >= 1,
              f"budget_sentences must be >= 1, got {self.budget_sentences}")
        check(self.response_reserve > 0,
              f"response_reserve must be positive, got {self.response_reserve}")
        check(self.context_limit > self.response_reserve,
              "context_limit must exceed response_reserve, got "
              f"{self.context_limit} <= {self.response_reserve}")
        check(self.chars_per_token > 0.0,
              f"chars_per_token must be positive, got {self.chars_per_token}")
        check(0.0 <= self.context_threshold <= 1.0,
              f"context_threshold must lie in [0, 1], got {self.context_threshold}")
        check(self.bm25_k1 >= 0.0, f"bm25_k1 must be >= 0, got {self.bm25_k1}")
        check(0.0 <= self.bm25_b <= 1.0,
              f"bm25_b must lie in [0, 1], got {self.bm25_b}")
        check(self.fetch_limit >= 1, f"fetch_limit must be >= 1, got {self.fetch_limit}")
        check(self.example_pairs >= 0,
              f"example_pairs must be >= 0, got {self.example_pairs}")

        if self.scorer == "replay":
            check(bool(self.scorer_replay) and os.path.exists(self.scorer_replay),
                  f"scorer replay fixture not found: {self.scorer_replay!r}")
        if self.scorer == "sidecar" or self.embedder == "sidecar":
            check(bool(self.sidecar_cmd), "sidecar mode needs sidecar_cmd")
        if self.embedder == "replay":
            check(bool(self.embedder_replay) and os.path.exists(self.embedder_replay),
                  f"embedder replay fixture not found: {self.embedder_replay!r}")
        if self.llm_replay:
            check(os.path.exists(self.llm_replay),
                  f"llm replay fixture not found: {self.llm_replay!r}")
        return self

    # Where an artifact lives never changes what it contains, so location
    # fields stay out of the run hash; fixture contents speak for themselves.
    PLUMBING_FIELDS = ("output_dir", "cache_dir", "examples_dir", "scorer_replay",
                       "embedder_replay", "llm_replay", "sidecar_cmd")

    def config_hash(self) -> str:
        stamped = asdict(self)
        for name in self.PLUMBING_FIELDS:
            stamped.pop(name)
        return hashlib.sha256(dump_json(stamped).encode("utf-8")).hexdigest()


def _coerce(name: str, annotation: str, raw: str) -> Any:
    if annotation == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{name} expects an integer, got {raw!r}") from None
    if annotation == "float":
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{name} expects a number, got {raw!r}") from None
    if annotation == "bool":
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name} expects a boolean, got {raw!r}")
    return raw


def _check_file_value(name: str, annotation: str, value: Any) -> Any:
    if annotation == "str" and isinstance(value, str):
        return value
    if annotation == "int" and isinstance(value, int) and not isinstance(value, bool):
        return value
    if annotation == "float" and isinstance(value, (int, float)) \
            and not isinstance(value, bool):
        return float(value)
    if annotation == "bool" and isinstance(value, bool):
        return value
    if name == "lexicons":
        if value is None:
            return None
        if isinstance(value, dict) and all(
                isinstance(k, str) and isinstance(v, list)
                and all(isinstance(entry, str) for entry in v)
                for k, v in value.items()):
            return value
        raise ConfigError("lexicons must map section names to string lists")
    raise ConfigError(f"{name} has the wrong type: {value!r}")


def load_config(config_path: str | None = None,
                env: Mapping[str, str] | None = None,
                overrides: Mapping[str, Any] | None = None) -> PipelineConfig:
    """Defaults, then the JSON file, then environment, then explicit flags."""
    env = os.environ if env is None else env
    spec = {f.name: f.type for f in fields(PipelineConfig)}
    config = PipelineConfig()

    if config_path is not None:
        if not os.path.exists(config_path):
            raise ConfigError(f"config file not found: {config_path}")
        with open(config_path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(raw) - set(spec))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        config = replace(config, **{
            name: _check_file_value(name, spec[name], value)
            for name, value in raw.items()})

    env_updates = {}
    for name, annotation in spec.items():
        if name == "lexicons":
            continue
        raw_value = env.get(ENV_PREFIX + name.upper())
        if raw_value is not None:
            env_updates[name] = _coerce(name, annotation, raw_value)
    if env_updates:
        config = replace(config, **env_updates)

    if overrides:
        unknown = sorted(set(overrides) - set(spec))
        if unknown:
            raise ConfigError(f"unknown config overrides: {', '.join(unknown)}")
        config = replace(config, **{k: v for k, v in overrides.items()
                                    if v is not None})
    return config.validate()
