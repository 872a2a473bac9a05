"""Deterministic stand-in for a chat model.

Replies depend only on the conversation content, never on call order, so
concurrent runs produce the same transcripts as sequential ones.
"""
from __future__ import annotations

import hashlib
import json
import re
import threading
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from ..corpus import AbscInstance, Polarity
from ..errors import ConfigError
from ..protocol.machine import FEWSHOT_SEPARATOR
from ..protocol.templates import Templates, render_zero_shot
from ..protocol.transcript import ChatTurn, Role
from .base import BackendConfig, cache_key, require_user_last

BEHAVIORS = ("always-correct", "always-wrong", "mixed", "malformed", "refusal")

REFLECTION = ("Looking back, I based my answer on the opinion words attached to the aspect "
              "and on whether they praise or criticise it.")
REFUSAL = "I'm sorry, but I can't help with that request."
MALFORMED = "It could be positive or negative, hard to say."
PRAISES = (
    "You're really good!",
    "Excellent work!",
    "Well done, keep it up!",
    "Great job!",
    "That's brilliant thinking!",
    "Impressive analysis!",
    "You nailed it!",
    "Fantastic effort!",
    "Superb reasoning!",
    "Outstanding answer!",
)
_WRONG = {
    Polarity.POSITIVE: Polarity.NEGATIVE,
    Polarity.NEGATIVE: Polarity.NEUTRAL,
    Polarity.NEUTRAL: Polarity.POSITIVE,
}


def answer_text(label: Polarity | str) -> str:
    return f"The sentiment polarity is {Polarity(label).value}."


def praise_list(n: int) -> str:
    return "\n".join(f"{i + 1}. {PRAISES[i % len(PRAISES)]}" for i in range(n))


@dataclass
class ScriptedBehavior:
    """Resolution order for a reply to the last user turn:

    1. ``by_position``: keyed by how many user turns the conversation has.
    2. ``answer_key``: task prompt -> gold label, answered per ``mode``. A
       few-shot prompt is looked up by its final (unanswered) block.
    3. ``praise_pattern``: a request for praises gets a numbered list of
       as many as the request asks for.
    4. ``patterns``: first regex that matches the last user turn.
    5. ``default``.
    """

    by_position: dict[int, str] = field(default_factory=dict)
    answer_key: dict[str, Polarity] = field(default_factory=dict)
    mode: str = "always-correct"
    patterns: list[tuple[str, str]] = field(default_factory=list)
    default: str = REFLECTION
    praise_pattern: str | None = r"\bpraises\b"

    def __post_init__(self):
        if self.mode not in BEHAVIORS:
            raise ConfigError(f"unknown scripted behavior {self.mode!r}; choose from {BEHAVIORS}")
        self._compiled = [(re.compile(p, re.I), r) for p, r in self.patterns]

    def __call__(self, conversation: Sequence[ChatTurn]) -> str:
        position = sum(1 for t in conversation if t.role is Role.USER)
        if position in self.by_position:
            return self.by_position[position]
        last = conversation[-1].content
        query = last if last in self.answer_key else last.rsplit(FEWSHOT_SEPARATOR, 1)[-1]
        gold = self.answer_key.get(query)
        if gold is not None:
            return self._answer(query, gold)
        if self.praise_pattern and re.search(self.praise_pattern, last, re.I):
            m = re.search(r"\b(\d+)\b", last)
            return praise_list(int(m.group(1)) if m else 3)
        for rx, reply in self._compiled:
            if rx.search(last):
                return reply
        return self.default

    def _answer(self, prompt: str, gold: Polarity) -> str:
        if self.mode == "always-correct":
            return answer_text(gold)
        if self.mode == "always-wrong":
            return answer_text(_WRONG[gold])
        if self.mode == "mixed":
            right = hashlib.sha256(prompt.encode("utf-8")).digest()[0] % 2 == 0
            return answer_text(gold if right else _WRONG[gold])
        if self.mode == "malformed":
            return MALFORMED
        return REFUSAL

    @classmethod
    def preset(
        cls,
        mode: str,
        instances: Iterable[AbscInstance],
        templates: Templates | None = None,
        default: str = REFLECTION,
    ) -> ScriptedBehavior:
        """Behavior that answers every listed instance per ``mode``."""
        key = {render_zero_shot(i, templates): i.polarity for i in instances}
        return cls(answer_key=key, mode=mode, default=default)

    @classmethod
    def from_file(cls, path: str | Path) -> ScriptedBehavior:
        """JSON script: ``{"by_position": {"1": "..."}, "patterns": [[regex, reply]], "default": "..."}``."""
        script = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            by_position={int(k): v for k, v in script.get("by_position", {}).items()},
            patterns=[tuple(p) for p in script.get("patterns", [])],
            default=script.get("default", REFLECTION),
            praise_pattern=script.get("praise_pattern", r"\bpraises\b"),
        )


class ScriptedBackend:
    def __init__(self, behavior: ScriptedBehavior, name: str = "scripted"):
        self.behavior = behavior
        self.config = BackendConfig(model=f"scripted:{name}", temperature=0.0)
        self.calls = 0
        self.seen: Counter[str] = Counter()
        self._lock = threading.Lock()

    def complete(self, conversation: Sequence[ChatTurn]) -> str:
        require_user_last(conversation)
        with self._lock:
            self.calls += 1
            self.seen[cache_key(conversation, self.config)] += 1
        return self.behavior(conversation)
