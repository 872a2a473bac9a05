from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from ..errors import ProtocolViolation


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


class Protocol(str, Enum):
    FEWSHOT = "fewshot"
    MCEFS = "mcefs"
    MCEFS_PR = "mcefs-pr"

    @property
    def display(self) -> str:
        return {"fewshot": "Few-Shot", "mcefs": "MCeFS", "mcefs-pr": "MCeFS+PR"}[self.value]


@dataclass(frozen=True)
class ChatTurn:
    """One message. ``tag`` is local bookkeeping and never sent to the model.

    Tags name the turn's place in the protocol: ``demo-<i>:task``,
    ``demo-<i>:prediction``, ``demo-<i>:feedback``, ``demo-<i>:reflection``,
    ``test:query``, ``test:answer``, ``fewshot:prompt``, ``system``.
    """

    role: Role
    content: str
    tag: str = ""

    def __post_init__(self):
        if not isinstance(self.role, Role):
            object.__setattr__(self, "role", Role(self.role))
        if not self.content:
            raise ProtocolViolation(f"empty {self.role.value} turn ({self.tag or 'untagged'})")

    def wire(self) -> dict:
        return {"role": self.role.value, "content": self.content}

    def to_record(self) -> dict:
        return {"role": self.role.value, "content": self.content, "tag": self.tag}

    @classmethod
    def from_record(cls, rec: dict) -> ChatTurn:
        return cls(Role(rec["role"]), rec["content"], rec.get("tag", ""))


@dataclass
class Transcript:
    conversation_id: str
    protocol: Protocol
    turns: list[ChatTurn] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "conversation_id": self.conversation_id,
            "protocol": self.protocol.value,
            "meta": self.meta,
            "turns": [t.to_record() for t in self.turns],
        }

    @classmethod
    def from_record(cls, rec: dict) -> Transcript:
        return cls(
            conversation_id=rec["conversation_id"],
            protocol=Protocol(rec["protocol"]),
            turns=[ChatTurn.from_record(t) for t in rec["turns"]],
            meta=rec.get("meta", {}),
        )

    def count(self, role: Role) -> int:
        return sum(1 for t in self.turns if t.role is role)

    def tagged(self, tag: str) -> int:
        """Index of the turn carrying ``tag``; -1 when absent."""
        for i, t in enumerate(self.turns):
            if t.tag == tag:
                return i
        return -1


def check_alternation(turns: list[ChatTurn]) -> None:
    body = turns
    if turns and turns[0].role is Role.SYSTEM:
        body = turns[1:]
    for i, t in enumerate(body):
        if t.role is Role.SYSTEM:
            raise ProtocolViolation("system turn allowed only at position 0")
        expected = Role.USER if i % 2 == 0 else Role.ASSISTANT
        if t.role is not expected:
            raise ProtocolViolation(
                f"turn {i}: expected {expected.value}, got {t.role.value}")


def validate_transcript(tr: Transcript, k: int | None = None, complete: bool = True) -> None:
    """Structural checks every finished transcript must pass.

    For MCeFS-family transcripts, each demo's feedback turn (the first User
    turn allowed to carry its gold label) must come after that demo's
    prediction.
    """
    check_alternation(tr.turns)
    n_asst = tr.count(Role.ASSISTANT)
    if tr.protocol is Protocol.FEWSHOT:
        if complete and n_asst != 1:
            raise ProtocolViolation(f"few-shot transcript has {n_asst} assistant turns")
        return
    if k is None:
        k = sum(1 for t in tr.turns if t.tag.endswith(":task") and t.tag.startswith("demo-"))
    for i in range(k):
        task = tr.tagged(f"demo-{i}:task")
        pred = tr.tagged(f"demo-{i}:prediction")
        fb = tr.tagged(f"demo-{i}:feedback")
        if task < 0 or pred < 0 or fb < 0:
            raise ProtocolViolation(f"demo {i}: missing task/prediction/feedback turn")
        if not task < pred < fb:
            raise ProtocolViolation(f"demo {i}: gold feedback precedes the prediction")
        if tr.turns[pred].role is not Role.ASSISTANT:
            raise ProtocolViolation(f"demo {i}: prediction is not an assistant turn")
    if complete:
        users = tr.count(Role.USER)
        if n_asst != 2 * k + 1 or users != 2 * k + 1:
            raise ProtocolViolation(
                f"expected {2 * k + 1} user/assistant turns, got {users}/{n_asst}")
        if tr.turns[-1].tag != "test:answer":
            raise ProtocolViolation("transcript does not end with the test answer")
