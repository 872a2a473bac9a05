"""Conversation protocols: plain few-shot and the metacognitive loop.

The metacognitive protocol is an explicit state machine. The driver calls
:meth:`MCeFSMachine.step` with ``None`` to start, then with each model
reply; the machine answers with the next action::

    action = machine.step()
    while not isinstance(action, Finished):
        action = machine.step(backend.complete(machine.turns))

For every demo the machine asks the task without its label, assesses the
reply, sends feedback (praise or a neutral acknowledgment when right, the
gold label and a warning when wrong or unparseable) together with a
reflection request, and waits for the reflection. The test query follows
the last reflection.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol as Proto, Sequence

from ..corpus import AbscInstance, Polarity
from ..errors import ProtocolViolation
from .labels import extract_label
from .templates import Templates, default_templates, fill, render_zero_shot
from .transcript import ChatTurn, Protocol, Role, Transcript


class ChatBackend(Proto):
    def complete(self, conversation: Sequence[ChatTurn]) -> str: ...


@dataclass(frozen=True)
class ProtocolOutcome:
    prediction: Polarity | None
    raw_text: str
    correct: bool | None

    @classmethod
    def assess(cls, raw: str, gold: Polarity | None) -> ProtocolOutcome:
        pred = extract_label(raw)
        correct = None if pred is None or gold is None else pred is gold
        return cls(pred, raw, correct)


@dataclass(frozen=True)
class DemoAssessment:
    index: int
    gold: Polarity
    prediction: Polarity | None
    correct: bool

    def to_record(self) -> dict:
        return {
            "index": self.index,
            "gold": self.gold.value,
            "prediction": self.prediction.value if self.prediction else None,
            "correct": self.correct,
        }


@dataclass(frozen=True)
class SendUser:
    text: str


@dataclass(frozen=True)
class AwaitModel:
    pass


@dataclass(frozen=True)
class Finished:
    outcome: ProtocolOutcome | None


@dataclass(frozen=True)
class LearningPrefix:
    """Frozen demo phase, replayed in front of every test query."""

    turns: tuple[ChatTurn, ...]
    assessments: tuple[DemoAssessment, ...]
    praise: str | None = None

    def to_record(self) -> dict:
        return {
            "turns": [t.to_record() for t in self.turns],
            "assessments": [a.to_record() for a in self.assessments],
            "praise": self.praise,
        }

    @classmethod
    def from_record(cls, rec: dict) -> LearningPrefix:
        return cls(
            turns=tuple(ChatTurn.from_record(t) for t in rec["turns"]),
            assessments=tuple(
                DemoAssessment(a["index"], Polarity(a["gold"]),
                               Polarity(a["prediction"]) if a["prediction"] else None,
                               a["correct"])
                for a in rec["assessments"]),
            praise=rec.get("praise"),
        )


_INIT, _SENT, _AWAIT, _DONE = "init", "sent", "await", "done"


class MCeFSMachine:
    """One metacognitive conversation.

    ``praise=None`` gives plain MCeFS; a praise string gives MCeFS+PR.
    ``test=None`` stops after the learning phase. Passing ``prefix`` skips
    straight to the test query on top of an earlier learning phase.
    """

    def __init__(
        self,
        demos: Sequence[AbscInstance],
        test: AbscInstance | None,
        *,
        praise: str | None = None,
        templates: Templates | None = None,
        system_prompt: str | None = None,
        prefix: LearningPrefix | None = None,
    ):
        self.templates = templates or default_templates()
        self.demos = list(demos)
        self.test = test
        self.praise = praise
        self.assessments: list[DemoAssessment] = []
        self.outcome: ProtocolOutcome | None = None
        self._state = _INIT
        self._awaiting = ""
        if prefix is not None:
            if len(prefix.assessments) != len(self.demos):
                raise ProtocolViolation("prefix does not match the demo set")
            self.turns = list(prefix.turns)
            self.assessments = list(prefix.assessments)
            self.praise = prefix.praise
            self._cursor = len(self.demos)
        else:
            if not self.demos:
                raise ProtocolViolation("metacognitive protocol needs at least one demo")
            self.turns = [ChatTurn(Role.SYSTEM, system_prompt, "system")] if system_prompt else []
            self._cursor = 0

    @property
    def protocol(self) -> Protocol:
        return Protocol.MCEFS if self.praise is None else Protocol.MCEFS_PR

    @property
    def finished(self) -> bool:
        return self._state == _DONE

    def step(self, model_reply: str | None = None) -> SendUser | AwaitModel | Finished:
        if self._state == _DONE:
            raise ProtocolViolation("conversation already finished")
        if self._state == _INIT:
            if model_reply is not None:
                raise ProtocolViolation("model reply supplied before any user turn")
            return self._advance()
        if model_reply is None:
            if self._state == _SENT:
                self._state = _AWAIT
                return AwaitModel()
            raise ProtocolViolation(f"awaiting model reply for {self._awaiting}")
        self.turns.append(ChatTurn(Role.ASSISTANT, model_reply, self._awaiting))
        if self._awaiting.endswith(":prediction"):
            return self._feedback(model_reply)
        if self._awaiting.endswith(":reflection"):
            self._cursor += 1
            return self._advance()
        # test answer
        self.outcome = ProtocolOutcome.assess(model_reply, self.test.polarity)
        self._state = _DONE
        return Finished(self.outcome)

    def learning_prefix(self) -> LearningPrefix:
        if self._cursor < len(self.demos):
            raise ProtocolViolation("learning phase not complete")
        n = len(self.turns)
        if self.test is not None and self.turns and self.turns[-1].tag.startswith("test:"):
            n -= 2 if self.turns[-1].tag == "test:answer" else 1
        return LearningPrefix(tuple(self.turns[:n]), tuple(self.assessments), self.praise)

    def _send(self, text: str, tag: str, awaiting: str) -> SendUser:
        self.turns.append(ChatTurn(Role.USER, text, tag))
        self._awaiting = awaiting
        self._state = _SENT
        return SendUser(text)

    def _advance(self) -> SendUser | Finished:
        i = self._cursor
        if i < len(self.demos):
            return self._send(render_zero_shot(self.demos[i], self.templates),
                              f"demo-{i}:task", f"demo-{i}:prediction")
        if self.test is None:
            self._state = _DONE
            return Finished(None)
        return self._send(render_zero_shot(self.test, self.templates), "test:query", "test:answer")

    def _feedback(self, reply: str) -> SendUser:
        i = self._cursor
        gold = self.demos[i].polarity
        pred = extract_label(reply)
        correct = pred is gold
        self.assessments.append(DemoAssessment(i, gold, pred, correct))
        t = self.templates
        if correct and self.praise is not None:
            text = fill(t.feedback_correct_praise, praise=self.praise)
        elif correct:
            text = t.feedback_correct
        else:
            text = fill(t.feedback_incorrect, gold=gold.value)
        return self._send(text, f"demo-{i}:feedback", f"demo-{i}:reflection")


def drive(machine: MCeFSMachine, backend: ChatBackend) -> ProtocolOutcome | None:
    action = machine.step()
    while not isinstance(action, Finished):
        action = machine.step(backend.complete(machine.turns))
    return action.outcome


def run_learning_phase(
    backend: ChatBackend,
    demos: Sequence[AbscInstance],
    *,
    praise: str | None = None,
    templates: Templates | None = None,
    system_prompt: str | None = None,
) -> LearningPrefix:
    m = MCeFSMachine(demos, None, praise=praise, templates=templates, system_prompt=system_prompt)
    drive(m, backend)
    return m.learning_prefix()


def run_mcefs_test(
    backend: ChatBackend,
    prefix: LearningPrefix,
    demos: Sequence[AbscInstance],
    test: AbscInstance,
    *,
    templates: Templates | None = None,
) -> tuple[list[ChatTurn], ProtocolOutcome]:
    m = MCeFSMachine(demos, test, templates=templates, prefix=prefix)
    outcome = drive(m, backend)
    return m.turns, outcome


# -- few-shot baseline -------------------------------------------------------

FEWSHOT_SEPARATOR = "\n\n"


def render_fewshot_prompt(
    demos: Sequence[AbscInstance], test: AbscInstance, templates: Templates | None = None
) -> str:
    t = templates or default_templates()
    blocks = [
        render_zero_shot(d, t) + "\n" + fill(t.fewshot_answer, gold=d.polarity.value)
        for d in demos
    ]
    blocks.append(render_zero_shot(test, t))
    return FEWSHOT_SEPARATOR.join(blocks)


def build_fewshot_conversation(
    demos: Sequence[AbscInstance],
    test: AbscInstance,
    *,
    templates: Templates | None = None,
    system_prompt: str | None = None,
    conversation_id: str = "",
) -> Transcript:
    if not demos:
        raise ProtocolViolation("few-shot prompt needs at least one demo")
    turns = [ChatTurn(Role.SYSTEM, system_prompt, "system")] if system_prompt else []
    turns.append(ChatTurn(Role.USER, render_fewshot_prompt(demos, test, templates), "fewshot:prompt"))
    return Transcript(conversation_id, Protocol.FEWSHOT, turns)


def run_fewshot(
    backend: ChatBackend,
    demos: Sequence[AbscInstance],
    test: AbscInstance,
    *,
    templates: Templates | None = None,
    system_prompt: str | None = None,
    conversation_id: str = "",
) -> tuple[Transcript, ProtocolOutcome]:
    tr = build_fewshot_conversation(demos, test, templates=templates,
                                    system_prompt=system_prompt, conversation_id=conversation_id)
    reply = backend.complete(tr.turns)
    tr.turns.append(ChatTurn(Role.ASSISTANT, reply, "test:answer"))
    return tr, ProtocolOutcome.assess(reply, test.polarity)
