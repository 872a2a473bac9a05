import pytest

from mcefs.backend import ScriptedBackend, ScriptedBehavior
from mcefs.backend.scripted import REFLECTION
from mcefs.corpus import Polarity
from mcefs.errors import ProtocolViolation
from mcefs.protocol import (
    AwaitModel,
    ChatTurn,
    Finished,
    LearningPrefix,
    MCeFSMachine,
    Protocol,
    Role,
    SendUser,
    Transcript,
    build_fewshot_conversation,
    drive,
    render_fewshot_prompt,
    render_zero_shot,
    run_fewshot,
    run_learning_phase,
    run_mcefs_test,
    validate_transcript,
)
from mcefs.sampler import sample_demos
from conftest import inst

PRAISE = "You're really good!"

D_POS = inst("The staff was friendly.", "staff", "positive", "d/1#0")
D_NEG = inst("The soup was cold.", "soup", "negative", "d/2#0")
D_NEU = inst("We ordered a pizza.", "pizza", "neutral", "d/3#0")
TEST = inst("The waiter was rude.", "waiter", "negative", "q/1#0")


def roles(turns):
    return [t.role.value[0].upper() for t in turns]


def scripted(mode="always-correct", instances=(D_POS, D_NEG, D_NEU, TEST)):
    return ScriptedBackend(ScriptedBehavior.preset(mode, instances))


def run_full(backend, demos, test=TEST, praise=None):
    m = MCeFSMachine(demos, test, praise=praise)
    outcome = drive(m, backend)
    return m, Transcript("c", m.protocol, m.turns)


def test_k1_all_correct_with_praise():
    m, tr = run_full(scripted(), [D_POS], praise=PRAISE)
    assert roles(tr.turns) == ["U", "A", "U", "A", "U", "A"]
    assert [t.tag for t in tr.turns] == [
        "demo-0:task", "demo-0:prediction", "demo-0:feedback", "demo-0:reflection",
        "test:query", "test:answer"]
    assert tr.turns[0].content == render_zero_shot(D_POS)
    assert PRAISE in tr.turns[2].content
    assert "reflect" in tr.turns[2].content
    assert m.outcome.prediction is Polarity.NEGATIVE and m.outcome.correct is True
    validate_transcript(tr, k=1)


def test_wrong_branch_states_gold_without_praise():
    m, tr = run_full(scripted("always-wrong"), [D_POS], praise=PRAISE)
    fb = tr.turns[2].content
    assert "positive" in fb
    assert "avoid making comparable errors" in fb
    assert PRAISE not in fb
    assert m.assessments[0].correct is False


def test_plain_mcefs_uses_neutral_ack(templates):
    m, tr = run_full(scripted(), [D_POS])
    assert tr.protocol is Protocol.MCEFS
    assert tr.turns[2].content == templates.feedback_correct


def test_k3_mixed_hand_enumerated():
    # user turn 3 is demo 1's task; answering it "positive" (gold negative) forces the wrong branch
    behavior = ScriptedBehavior.preset("always-correct", [D_POS, D_NEG, D_NEU, TEST])
    behavior.by_position = {3: "The sentiment polarity is positive."}
    backend = ScriptedBackend(behavior)
    m, tr = run_full(backend, [D_POS, D_NEG, D_NEU], praise=PRAISE)
    expected = [
        ("U", "demo-0:task", render_zero_shot(D_POS)),
        ("A", "demo-0:prediction", "The sentiment polarity is positive."),
        ("U", "demo-0:feedback", f"That's correct. {PRAISE} Please reflect on your thought "
                                 "process and explain how you reached this answer."),
        ("A", "demo-0:reflection", REFLECTION),
        ("U", "demo-1:task", render_zero_shot(D_NEG)),
        ("A", "demo-1:prediction", "The sentiment polarity is positive."),
        ("U", "demo-1:feedback", "That's incorrect; the correct polarity is negative. Please "
                                 "reflect on your thought process and avoid making comparable errors."),
        ("A", "demo-1:reflection", REFLECTION),
        ("U", "demo-2:task", render_zero_shot(D_NEU)),
        ("A", "demo-2:prediction", "The sentiment polarity is neutral."),
        ("U", "demo-2:feedback", f"That's correct. {PRAISE} Please reflect on your thought "
                                 "process and explain how you reached this answer."),
        ("A", "demo-2:reflection", REFLECTION),
        ("U", "test:query", render_zero_shot(TEST)),
        ("A", "test:answer", "The sentiment polarity is negative."),
    ]
    assert [(r, t.tag, t.content) for r, t in zip(roles(tr.turns), tr.turns)] == expected
    assert tr.count(Role.ASSISTANT) == 7
    assert [a.correct for a in m.assessments] == [True, False, True]


def test_unparsed_demo_takes_wrong_branch():
    m, tr = run_full(scripted("refusal"), [D_NEU], praise=PRAISE)
    assert m.assessments[0].prediction is None
    assert "correct polarity is neutral" in tr.turns[2].content
    assert m.outcome.prediction is None and m.outcome.correct is None


def test_step_violations():
    m = MCeFSMachine([D_POS], TEST)
    with pytest.raises(ProtocolViolation):
        m.step("early reply")
    assert isinstance(m.step(), SendUser)
    assert isinstance(m.step(), AwaitModel)
    with pytest.raises(ProtocolViolation):
        m.step()
    assert isinstance(m.step("positive"), SendUser)


def test_step_after_finish():
    m = MCeFSMachine([D_POS], TEST)
    drive(m, scripted())
    with pytest.raises(ProtocolViolation):
        m.step("again")


def test_empty_demos_rejected():
    with pytest.raises(ProtocolViolation):
        MCeFSMachine([], TEST)
    with pytest.raises(ProtocolViolation):
        build_fewshot_conversation([], TEST)


def test_system_turn_only_at_start():
    m = MCeFSMachine([D_POS], TEST, system_prompt="You are a sentiment classifier.")
    drive(m, scripted())
    tr = Transcript("c", m.protocol, m.turns)
    assert tr.turns[0].role is Role.SYSTEM
    validate_transcript(tr, k=1)
    bad = Transcript("c", m.protocol, tr.turns[1:3] + [tr.turns[0]])
    with pytest.raises(ProtocolViolation):
        validate_transcript(bad, complete=False)


def test_learning_prefix_replay_matches_full_run():
    backend = scripted("mixed")
    demos = [D_POS, D_NEG, D_NEU]
    _, full = run_full(backend, demos, praise=PRAISE)
    prefix = run_learning_phase(backend, demos, praise=PRAISE)
    turns, outcome = run_mcefs_test(backend, prefix, demos, TEST)
    assert turns == full.turns
    again = LearningPrefix.from_record(prefix.to_record())
    assert again == prefix


def test_prefix_must_match_demos():
    prefix = run_learning_phase(scripted(), [D_POS])
    with pytest.raises(ProtocolViolation):
        MCeFSMachine([D_POS, D_NEG], TEST, prefix=prefix)


def test_fewshot_single_user_turn():
    tr, outcome = run_fewshot(scripted(), [D_POS], TEST)
    assert roles(tr.turns) == ["U", "A"]
    body = tr.turns[0].content
    assert body.count("Sentence:") == 2
    assert body.count("Answer:") == 1
    assert body.endswith(render_zero_shot(TEST))
    assert outcome.correct is True
    validate_transcript(tr)


def test_fewshot_order_preserved():
    body = render_fewshot_prompt([D_NEU, D_POS, D_NEG], TEST)
    pos = [body.index(render_zero_shot(d)) for d in (D_NEU, D_POS, D_NEG, TEST)]
    assert pos == sorted(pos)
    assert body.count("Answer:") == 3


def test_fewshot_golden(mini_corpus, fixtures_dir):
    ds = sample_demos(mini_corpus, 13, 3)
    golden = (fixtures_dir / "golden" / "fewshot_s13_k3_test0.txt").read_text(encoding="utf-8")
    assert render_fewshot_prompt(ds.demos, mini_corpus.test[0]) == golden


def test_transcript_round_trip():
    m, tr = run_full(scripted(), [D_POS, D_NEG], praise=PRAISE)
    tr.meta = {"seed": 13}
    assert Transcript.from_record(tr.to_record()) == tr


def test_validator_catches_reordered_feedback():
    m, tr = run_full(scripted(), [D_POS])
    turns = list(tr.turns)
    turns[1], turns[2] = (ChatTurn(Role.ASSISTANT, turns[2].content, "demo-0:feedback"),
                          ChatTurn(Role.USER, turns[1].content, "demo-0:prediction"))
    with pytest.raises(ProtocolViolation):
        validate_transcript(Transcript("c", Protocol.MCEFS, turns))


def test_empty_turn_rejected():
    with pytest.raises(ProtocolViolation):
        ChatTurn(Role.ASSISTANT, "")


def test_same_inputs_same_transcript():
    a = run_full(scripted("mixed"), [D_POS, D_NEG], praise=PRAISE)[1]
    b = run_full(scripted("mixed"), [D_POS, D_NEG], praise=PRAISE)[1]
    assert a.to_record() == b.to_record()
