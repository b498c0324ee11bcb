"""Run configuration files (YAML, TOML or JSON) and client construction."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .agent import AgentConfig
from .errors import ConfigError
from .llm import HashingEmbedder, OpenAIClient, OpenAIEmbedder, RecordingClient, ScriptedClient, SentenceTransformerEmbedder
from .sandbox import SandboxConfig

MODEL_KINDS = ("openai", "scripted")
EMBEDDER_KINDS = ("hashing", "openai", "sentence-transformers")


@dataclass
class ModelSettings:
    kind: str = "openai"
    endpoint: str = "https://api.openai.com/v1"
    model: str = "gpt-4o-mini-2024-07-18"
    temperature: float = 0.0
    api_key_env: str = "PANDORA_API_KEY"
    max_retries: int = 3
    requests_per_minute: Optional[float] = None
    # scripted replay source, and optional file to record live calls into
    transcript: Optional[str] = None
    record: Optional[str] = None


@dataclass
class EmbedderSettings:
    kind: str = "hashing"
    dim: int = 256
    model: str = "BAAI/bge-large-en-v1.5"
    endpoint: str = "https://api.openai.com/v1"
    api_key_env: str = "PANDORA_API_KEY"


@dataclass
class RunConfig:
    model: ModelSettings = field(default_factory=ModelSettings)
    embedder: EmbedderSettings = field(default_factory=EmbedderSettings)
    agent: AgentConfig = field(default_factory=AgentConfig)
    sandbox: SandboxConfig = field(default_factory=SandboxConfig)
    dataset: Optional[str] = None
    memory: Optional[str] = None
    out: str = "out"
    workers: int = 1
    multiset: bool = False

    def validate(self) -> "RunConfig":
        if self.model.kind not in MODEL_KINDS:
            raise ConfigError(f"model.kind must be one of {MODEL_KINDS}, got {self.model.kind!r}")
        if self.model.kind == "scripted" and not self.model.transcript:
            raise ConfigError("model.kind = scripted needs model.transcript")
        if self.embedder.kind not in EMBEDDER_KINDS:
            raise ConfigError(f"embedder.kind must be one of {EMBEDDER_KINDS}, got {self.embedder.kind!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a table of settings, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


_SECTIONS = {"model": ModelSettings, "embedder": EmbedderSettings, "agent": AgentConfig, "sandbox": SandboxConfig}
_PATH_KEYS = (("model", "transcript"), ("model", "record"), (None, "dataset"), (None, "memory"), (None, "out"))


def config_from_dict(data: dict, base_dir: Optional[Path] = None) -> RunConfig:
    """Build a RunConfig; relative paths are taken relative to ``base_dir``."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    data = {k: (dict(v) if isinstance(v, dict) else v) for k, v in data.items()}
    if base_dir is not None:
        for section, key in _PATH_KEYS:
            holder = data.get(section) if section else data
            if isinstance(holder, dict) and isinstance(holder.get(key), str):
                p = Path(holder[key])
                holder[key] = str(p if p.is_absolute() else base_dir / p)
    sections = {k: _build(cls, data.pop(k, {}) or {}, k) for k, cls in _SECTIONS.items()}
    cfg = _build(RunConfig, {**data, **sections}, "config")
    return cfg.validate()


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: config file not found")
    text = path.read_text(encoding="utf-8")
    suffix = path.suffix.lower()
    try:
        if suffix in (".yaml", ".yml"):
            import yaml

            data = yaml.safe_load(text) or {}
        elif suffix == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            data = tomllib.loads(text)
        elif suffix == ".json":
            data = json.loads(text)
        else:
            raise ConfigError(f"{path}: unsupported config format {suffix!r} (use .yaml, .toml or .json)")
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"{path}: cannot parse ({exc})") from None
    return config_from_dict(data, base_dir=path.parent)


def make_model(settings: ModelSettings):
    if settings.kind == "scripted":
        client = ScriptedClient.from_file(settings.transcript)
    else:
        client = OpenAIClient(settings.endpoint, settings.model, settings.temperature,
                              api_key_env=settings.api_key_env, max_retries=settings.max_retries,
                              requests_per_minute=settings.requests_per_minute)
    if settings.record:
        client = RecordingClient(client, settings.record)
    return client


def make_embedder(settings: EmbedderSettings):
    if settings.kind == "hashing":
        return HashingEmbedder(settings.dim)
    if settings.kind == "openai":
        return OpenAIEmbedder(settings.endpoint, settings.model, settings.dim, api_key_env=settings.api_key_env)
    return SentenceTransformerEmbedder(settings.model)
