from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .backend.base import BackendConfig
from .corpus import DATASETS
from .errors import ConfigError
from .protocol.transcript import Protocol
from .records import sha256_hex

# Operational knobs that cannot change any output byte; left out of the hash
# so a run can be resumed with, say, a different concurrency level.
_HASH_EXCLUDED = frozenset({
    "output_dir", "cache_dir", "max_in_flight", "per_minute_cap", "retry_budget", "timeout",
})


@dataclass
class RunConfig:
    dataset: str = "14-Restaurant"
    train_path: str | None = None
    test_path: str | None = None
    protocol: str = "fewshot"
    seeds: list[int] = field(default_factory=lambda: [13, 42, 550])
    shots: list[int] = field(default_factory=lambda: [1, 3, 9])

    backend: str = "live"  # live | scripted
    scripted_behavior: str = "always-correct"
    scripted_script: str | None = None
    endpoint: str = BackendConfig.endpoint
    model: str = BackendConfig.model
    temperature: float = BackendConfig.temperature
    max_in_flight: int = BackendConfig.max_in_flight
    retry_budget: int = BackendConfig.retry_budget
    per_minute_cap: int = BackendConfig.per_minute_cap
    api_key_env: str = BackendConfig.api_key_env
    timeout: float = BackendConfig.timeout
    cache: bool | None = None  # default: on for live, off for scripted
    cache_dir: str | None = None

    praise_n: int = 3
    dev_size: int = 50
    template_path: str | None = None
    system_prompt: str | None = None
    output_dir: str = "runs/latest"
    limit: int | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.dataset not in DATASETS:
            raise ConfigError(f"dataset must be one of {DATASETS}, got {self.dataset!r}")
        try:
            Protocol(self.protocol)
        except ValueError:
            raise ConfigError(f"protocol must be one of {[p.value for p in Protocol]}") from None
        if self.backend not in ("live", "scripted"):
            raise ConfigError("backend must be 'live' or 'scripted'")
        if not self.seeds or not self.shots:
            raise ConfigError("seeds and shots must be non-empty")
        if any(k < 1 for k in self.shots):
            raise ConfigError("shot counts must be >= 1")
        if self.praise_n < 1 or self.dev_size < 1:
            raise ConfigError("praise_n and dev_size must be >= 1")
        if self.limit is not None and self.limit < 1:
            raise ConfigError("limit must be >= 1")
        self.backend_config()

    @property
    def use_cache(self) -> bool:
        return self.backend == "live" if self.cache is None else self.cache

    def backend_config(self) -> BackendConfig:
        return BackendConfig(
            endpoint=self.endpoint, model=self.model, temperature=self.temperature,
            max_in_flight=self.max_in_flight, retry_budget=self.retry_budget,
            per_minute_cap=self.per_minute_cap, api_key_env=self.api_key_env,
            timeout=self.timeout,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        d = {k: v for k, v in self.to_dict().items() if k not in _HASH_EXCLUDED}
        return sha256_hex(json.dumps(d, sort_keys=True, separators=(",", ":")))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RunConfig:
        data = {k.replace("-", "_"): v for k, v in data.items()}
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path, **overrides: Any) -> RunConfig:
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a mapping at top level")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)
