from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

from ..errors import ElicitationFailed, EmptyPool
from .machine import ChatBackend
from .templates import Templates, default_templates, fill
from .transcript import ChatTurn, Role

_ITEM = re.compile(r"^\s*(?:\d+\s*[.):]|[-*•])\s*(.+?)\s*$")
_QUOTES = "\"'“”‘’"


@dataclass
class PraisePool:
    praises: list[str]
    selected_index: int | None = None
    dev_accuracies: list[float] = field(default_factory=list)
    seed: int | None = None

    def __post_init__(self):
        if self.selected_index is not None and not 0 <= self.selected_index < len(self.praises):
            raise IndexError(f"selected_index {self.selected_index} out of range")

    @property
    def selected(self) -> str:
        if self.selected_index is None:
            raise EmptyPool("no praise selected yet")
        return self.praises[self.selected_index]

    def to_record(self) -> dict:
        return {
            "praises": self.praises,
            "selected_index": self.selected_index,
            "dev_accuracies": self.dev_accuracies,
            "seed": self.seed,
        }

    @classmethod
    def from_record(cls, rec: dict) -> PraisePool:
        return cls(rec["praises"], rec.get("selected_index"),
                   rec.get("dev_accuracies", []), rec.get("seed"))


def parse_praises(text: str) -> list[str]:
    """Pull list items out of a reply, in order, without duplicates.

    Numbered or bulleted lines win; a reply with no list markers is read as
    one praise per non-empty line.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    items = [m.group(1) for m in map(_ITEM.match, lines) if m]
    if not items:
        items = [ln.strip() for ln in lines]
    out: list[str] = []
    seen = set()
    for item in items:
        item = item.strip().strip(_QUOTES).strip()
        key = item.lower()
        if item and key not in seen:
            seen.add(key)
            out.append(item)
    return out


def elicit_praises(
    backend: ChatBackend,
    n: int,
    seed: int | None = None,
    *,
    templates: Templates | None = None,
    retries: int = 2,
) -> tuple[PraisePool, list[ChatTurn]]:
    """Ask the model for ``n`` short praises in a single conversation.

    Up to ``retries`` follow-up requests are made if a reply yields fewer
    than ``n`` distinct items. Returns the pool and the conversation.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    t = templates or default_templates()
    turns = [ChatTurn(Role.USER, fill(t.praise_request, n=n), "praise:request")]
    found: list[str] = []
    for attempt in range(retries + 1):
        reply = backend.complete(turns)
        turns.append(ChatTurn(Role.ASSISTANT, reply, "praise:reply"))
        for p in parse_praises(reply):
            if p.lower() not in {f.lower() for f in found}:
                found.append(p)
        if len(found) >= n:
            return PraisePool(found[:n], seed=seed), turns
        if attempt < retries:
            turns.append(ChatTurn(Role.USER, fill(t.praise_retry, n=n), "praise:retry"))
    raise ElicitationFailed(f"got {len(found)} praises, wanted {n}: {found}")


def select_praise(pool: PraisePool, dev_results: Sequence) -> str:
    """Pick the praise with the best dev accuracy; ties go to the lower index.

    ``dev_results`` holds one entry per praise, either a float accuracy or
    anything with an ``accuracy`` attribute.
    """
    if not pool.praises:
        raise EmptyPool("praise pool is empty")
    if len(dev_results) != len(pool.praises):
        raise ValueError(f"{len(dev_results)} dev results for {len(pool.praises)} praises")
    accs = [float(getattr(r, "accuracy", r)) for r in dev_results]
    best = 0
    for i, acc in enumerate(accs):
        if acc > accs[best]:
            best = i
    pool.dev_accuracies = accs
    pool.selected_index = best
    return pool.praises[best]
