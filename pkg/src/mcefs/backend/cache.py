from __future__ import annotations

import json
import os
import threading
from pathlib import Path
from typing import Sequence

from ..protocol.transcript import ChatTurn
from .base import cache_key, require_user_last


class CachedBackend:
    """Read-through response cache, one JSON file per conversation hash.

    Keys cover model name and temperature, so a cache directory can be
    shared between backends without cross-serving replies.
    """

    def __init__(self, inner, cache_dir: str | Path):
        self.inner = inner
        self.config = inner.config
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()
        self._key_locks: dict[str, threading.Lock] = {}

    def path_for(self, key: str) -> Path:
        return self.cache_dir / key[:2] / f"{key}.json"

    def _key_lock(self, key: str) -> threading.Lock:
        with self._lock:
            return self._key_locks.setdefault(key, threading.Lock())

    def complete(self, conversation: Sequence[ChatTurn]) -> str:
        require_user_last(conversation)
        key = cache_key(conversation, self.config)
        path = self.path_for(key)
        with self._key_lock(key):
            if path.exists():
                with self._lock:
                    self.hits += 1
                return json.loads(path.read_text(encoding="utf-8"))["response"]
            response = self.inner.complete(conversation)
            record = {
                "key": key,
                "model": self.config.model,
                "temperature": float(self.config.temperature),
                "messages": [t.wire() for t in conversation],
                "response": response,
            }
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_name(f"{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
            tmp.write_text(json.dumps(record, ensure_ascii=False, sort_keys=True), encoding="utf-8")
            os.replace(tmp, path)
            with self._lock:
                self.misses += 1
            return response
