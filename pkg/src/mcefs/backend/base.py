from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from typing import Sequence

from ..errors import ConfigError, ProtocolViolation
from ..protocol.transcript import ChatTurn, Role


@dataclass(frozen=True)
class BackendConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-3.5-turbo"
    temperature: float = 0.0
    max_in_flight: int = 4
    retry_budget: int = 5
    per_minute_cap: int = 60
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.max_in_flight < 1 or self.per_minute_cap < 1 or self.retry_budget < 0:
            raise ConfigError("max_in_flight and per_minute_cap must be >= 1, retry_budget >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def cache_key(conversation: Sequence[ChatTurn], config: BackendConfig) -> str:
    """Content hash of everything the model sees: model, temperature, turns.

    Turn tags and run metadata are local and excluded.
    """
    payload = {
        "model": config.model,
        "temperature": float(config.temperature),
        "messages": [t.wire() for t in conversation],
    }
    blob = json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def require_user_last(conversation: Sequence[ChatTurn]) -> None:
    if not conversation or conversation[-1].role is not Role.USER:
        raise ProtocolViolation("conversation must end with a user turn")
