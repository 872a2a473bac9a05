import json
from pathlib import Path

import pytest

from mcefs.backend import ScriptedBackend, ScriptedBehavior
from mcefs.config import RunConfig
from mcefs.errors import BackendExhausted, ConfigError, CorruptCheckpoint
from mcefs.protocol import Transcript, validate_transcript
from mcefs.records import read_json, read_jsonl
from mcefs.runner import ExperimentRunner, RunIncomplete, load_predictions, load_report, resume, run
from synth import synthetic_corpus

DETERMINISTIC = ("transcripts", "predictions", "metrics", "demosets", "praise")


def config(tmp_path, name="out", **kw):
    base = dict(dataset="14-Laptop", backend="scripted", seeds=[13, 42], shots=[1, 3],
                output_dir=str(tmp_path / name), praise_n=2, dev_size=5)
    base.update(kw)
    return RunConfig(**base)


def backend_for(corpus, mode="mixed"):
    return ScriptedBackend(ScriptedBehavior.preset(mode, corpus.train + corpus.test), name=mode)


def snapshot(out: Path) -> dict[str, bytes]:
    files = {}
    for sub in DETERMINISTIC:
        for p in sorted((out / sub).glob("*")) if (out / sub).exists() else []:
            files[f"{sub}/{p.name}"] = p.read_bytes()
    for name in ("results.json", "report.txt"):
        files[name] = (out / name).read_bytes()
    return files


class Interrupting:
    """Delegates to ``inner`` until ``budget`` calls have gone through, then interrupts."""

    def __init__(self, inner, budget):
        self.inner, self.budget, self.config = inner, budget, inner.config

    def complete(self, conversation):
        if self.budget <= 0:
            raise KeyboardInterrupt
        self.budget -= 1
        return self.inner.complete(conversation)


class FailOn:
    def __init__(self, inner, needle, exc=BackendExhausted):
        self.inner, self.needle, self.exc, self.config = inner, needle, exc, inner.config

    def complete(self, conversation):
        if self.needle in conversation[-1].content:
            raise self.exc("simulated outage")
        return self.inner.complete(conversation)


@pytest.mark.parametrize("protocol", ["fewshot", "mcefs", "mcefs-pr"])
def test_deterministic_across_runs(tmp_path, mini_corpus, protocol):
    snaps = []
    for name, workers in (("a", 1), ("b", 4)):
        cfg = config(tmp_path, name, protocol=protocol, max_in_flight=workers)
        run(cfg, corpus=mini_corpus, backend=backend_for(mini_corpus))
        snaps.append(snapshot(Path(cfg.output_dir)))
    assert snaps[0] == snaps[1]
    assert any(k.startswith("transcripts/") for k in snaps[0])


def test_output_layout_and_transcripts_valid(tmp_path, mini_corpus):
    cfg = config(tmp_path, protocol="mcefs", seeds=[13], shots=[3])
    rep = run(cfg, corpus=mini_corpus, backend=backend_for(mini_corpus))
    out = Path(cfg.output_dir)
    rid = "14-Laptop_mcefs_k3_s13"
    rows = list(read_jsonl(out / "transcripts" / f"{rid}.jsonl"))
    assert rows[0]["conversation_id"] == f"{rid}/learning"
    assert len(rows) == 1 + len(mini_corpus.test)
    for r in rows[1:]:
        validate_transcript(Transcript.from_record(r), k=3)
    preds = load_predictions(out / "predictions" / f"{rid}.jsonl")
    assert [p.source_id for p in preds] == [i.source_id for i in mini_corpus.test]
    assert not list((out / "checkpoints").glob("*"))
    manifest = read_json(out / "config.json")
    assert manifest["config_hash"] == cfg.config_hash()
    assert "[absc]" in (out / "templates.ini").read_text()
    assert load_report(out).runs == rep.runs
    assert (out / "events.log").exists()


def test_learning_prefix_shared_by_all_test_queries(tmp_path, mini_corpus):
    backend = backend_for(mini_corpus, "always-correct")
    cfg = config(tmp_path, protocol="mcefs", seeds=[13], shots=[1])
    run(cfg, corpus=mini_corpus, backend=backend)
    rows = list(read_jsonl(Path(cfg.output_dir) / "transcripts" / "14-Laptop_mcefs_k1_s13.jsonl"))
    prefix = rows[0]["turns"]
    for r in rows[1:]:
        assert r["turns"][:len(prefix)] == prefix
    # demo task + reflection request once, then one query per test item
    assert backend.calls == 2 + len(mini_corpus.test)


def test_always_correct_fewshot_limit(tmp_path):
    corpus = synthetic_corpus()
    cfg = config(tmp_path, protocol="fewshot", seeds=[13], shots=[1], limit=10)
    rep = run(cfg, corpus=corpus, backend=backend_for(corpus, "always-correct"))
    (m,) = rep.runs.values()
    assert (m.accuracy, m.macro_f1, m.n, m.limited) == (1.0, 1.0, 10, True)
    assert "LIMITED RUN" in (Path(cfg.output_dir) / "report.txt").read_text()


def test_malformed_replies_count_as_unparsed(tmp_path, mini_corpus):
    cfg = config(tmp_path, protocol="fewshot", seeds=[13], shots=[1])
    rep = run(cfg, corpus=mini_corpus, backend=backend_for(mini_corpus, "malformed"))
    (m,) = rep.runs.values()
    assert m.accuracy == 0.0 and m.unparsed == len(mini_corpus.test)


def test_mcefs_pr_records_praise_selection(tmp_path, mini_corpus):
    cfg = config(tmp_path, protocol="mcefs-pr", seeds=[13], shots=[1])
    run(cfg, corpus=mini_corpus, backend=backend_for(mini_corpus))
    out = Path(cfg.output_dir)
    rec = read_json(out / "praise" / "14-Laptop_mcefs-pr_k1_s13.json")
    pool = rec["pool"]
    assert len(pool["praises"]) == 2 and len(pool["dev_accuracies"]) == 2
    assert pool["selected_index"] == pool["dev_accuracies"].index(max(pool["dev_accuracies"]))
    chosen = pool["praises"][pool["selected_index"]]
    rows = list(read_jsonl(out / "transcripts" / "14-Laptop_mcefs-pr_k1_s13.jsonl"))
    assert all(r["meta"]["praise"] == chosen for r in rows)
    demo_ids = {json.loads(l)["source_id"] for l in
                (out / "demosets" / "14-Laptop_mcefs-pr_k1_s13.jsonl").read_text().splitlines()}
    assert not demo_ids & set(rec["dev_source_ids"])


@pytest.mark.parametrize("protocol", ["fewshot", "mcefs", "mcefs-pr"])
def test_resume_after_interrupt_matches_uninterrupted(tmp_path, mini_corpus, protocol):
    ref = config(tmp_path, "ref", protocol=protocol)
    ref_backend = backend_for(mini_corpus)
    run(ref, corpus=mini_corpus, backend=ref_backend)

    inner = backend_for(mini_corpus)
    cfg = config(tmp_path, "cut", protocol=protocol, max_in_flight=1)
    with pytest.raises(KeyboardInterrupt):
        run(cfg, corpus=mini_corpus, backend=Interrupting(inner, 17))
    assert not (Path(cfg.output_dir) / "results.json").exists()
    resume(cfg.output_dir, corpus=mini_corpus, backend=inner)

    assert snapshot(Path(cfg.output_dir)) == snapshot(Path(ref.output_dir))
    # same per-conversation call counts as the uninterrupted run: nothing re-sent
    assert inner.seen == ref_backend.seen


def test_truncated_checkpoint_line_is_dropped(tmp_path, mini_corpus):
    inner = backend_for(mini_corpus)
    cfg = config(tmp_path, protocol="fewshot", seeds=[13], shots=[1], max_in_flight=1)
    with pytest.raises(KeyboardInterrupt):
        run(cfg, corpus=mini_corpus, backend=Interrupting(inner, 4))
    ckpt = Path(cfg.output_dir) / "checkpoints" / "14-Laptop_fewshot_k1_s13.jsonl"
    with open(ckpt, "a") as fh:
        fh.write('{"index": 4, "transcr')
    rep = resume(cfg.output_dir, corpus=mini_corpus, backend=inner)
    assert next(iter(rep.runs.values())).n == len(mini_corpus.test)


def test_garbled_checkpoint_line_is_corrupt(tmp_path, mini_corpus):
    inner = backend_for(mini_corpus)
    cfg = config(tmp_path, protocol="fewshot", seeds=[13], shots=[1], max_in_flight=1)
    with pytest.raises(KeyboardInterrupt):
        run(cfg, corpus=mini_corpus, backend=Interrupting(inner, 3))
    ckpt = Path(cfg.output_dir) / "checkpoints" / "14-Laptop_fewshot_k1_s13.jsonl"
    ckpt.write_text("not json\n" + ckpt.read_text())
    with pytest.raises(CorruptCheckpoint):
        resume(cfg.output_dir, corpus=mini_corpus, backend=inner)


def test_resume_completed_run_is_noop(tmp_path, mini_corpus):
    cfg = config(tmp_path, protocol="mcefs")
    run(cfg, corpus=mini_corpus, backend=backend_for(mini_corpus))
    before = snapshot(Path(cfg.output_dir))
    again = backend_for(mini_corpus)
    resume(cfg.output_dir, corpus=mini_corpus, backend=again)
    assert again.calls == 0
    assert snapshot(Path(cfg.output_dir)) == before


def test_config_mismatch_refused(tmp_path, mini_corpus):
    cfg = config(tmp_path, protocol="fewshot", seeds=[13], shots=[1])
    run(cfg, corpus=mini_corpus, backend=backend_for(mini_corpus))
    other = config(tmp_path, protocol="fewshot", seeds=[13], shots=[1], temperature=0.5)
    with pytest.raises(CorruptCheckpoint):
        run(other, corpus=mini_corpus, backend=backend_for(mini_corpus))
    with pytest.raises(CorruptCheckpoint):
        resume(cfg.output_dir, other, corpus=mini_corpus, backend=backend_for(mini_corpus))


def test_operational_knobs_do_not_change_hash(tmp_path):
    a = config(tmp_path, "a", max_in_flight=1, per_minute_cap=10)
    b = config(tmp_path, "b", max_in_flight=8, per_minute_cap=500)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != config(tmp_path, "a", model="gpt-4").config_hash()


def test_resume_without_config(tmp_path):
    with pytest.raises(CorruptCheckpoint):
        resume(tmp_path / "nothing")


def test_failed_conversation_recorded_then_resumed(tmp_path, mini_corpus):
    inner = backend_for(mini_corpus)
    victim = mini_corpus.test[2].sentence
    cfg = config(tmp_path, protocol="fewshot", seeds=[13], shots=[1])
    with pytest.raises(RunIncomplete):
        run(cfg, corpus=mini_corpus, backend=FailOn(inner, victim))
    out = Path(cfg.output_dir)
    assert "FAILED" in (out / "events.log").read_text()
    assert not (out / "metrics").exists()
    rep = resume(cfg.output_dir, corpus=mini_corpus, backend=inner)
    assert next(iter(rep.runs.values())).n == len(mini_corpus.test)


def test_learning_failure_marks_run_incomplete(tmp_path, mini_corpus):
    inner = backend_for(mini_corpus)
    cfg = config(tmp_path, protocol="mcefs", seeds=[13], shots=[1])
    with pytest.raises(RunIncomplete):
        run(cfg, corpus=mini_corpus, backend=FailOn(inner, "reflect"))


def test_runner_needs_paths_without_corpus(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentRunner(config(tmp_path))


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        config(tmp_path, dataset="15-Hotel")
    with pytest.raises(ConfigError):
        config(tmp_path, protocol="cot")
    with pytest.raises(ConfigError):
        config(tmp_path, shots=[0])
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"colour": "blue"})
    assert RunConfig.from_dict({"praise-n": 5}).praise_n == 5


def test_config_yaml_overrides(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("dataset: 14-Laptop\nprotocol: mcefs\nseeds: [1, 2]\n")
    cfg = RunConfig.load(path, protocol="fewshot", limit=None)
    assert (cfg.dataset, cfg.protocol, cfg.seeds) == ("14-Laptop", "fewshot", [1, 2])
    assert cfg.use_cache is True
    assert RunConfig(backend="scripted").use_cache is False
