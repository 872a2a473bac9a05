"""Experiment orchestration.

Output directory layout::

    config.json            config snapshot, hashes, code version
    templates.ini          exact templates used
    events.log             timestamped progress log (the only non-deterministic file)
    demosets/<run>.jsonl   sampled demonstrations, one instance per line
    praise/<run>.json      elicited pool, dev accuracies, selection (mcefs-pr)
    praise/<run>.dev.jsonl dev-set transcripts behind the selection
    checkpoints/<run>.*    in-progress state (test results, learning prefix, replies
                           from the praise and learning phases); removed on completion
    transcripts/<run>.jsonl
    predictions/<run>.jsonl
    metrics/<run>.json
    results.json           every run plus cross-seed means
    report.txt             comparison against published values

``<run>`` is ``<dataset>_<protocol>_k<k>_s<seed>``.
"""
from __future__ import annotations

import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .backend import CachedBackend, LiveBackend, ScriptedBackend, ScriptedBehavior, cache_key
from .config import RunConfig
from .corpus import AbscInstance, Corpus, load_corpus, save_instances
from .errors import BackendError, ConfigError, CorruptCheckpoint, MCeFSError
from .metrics import MetricsReport, PredictionRecord, RunKey, RunMetrics, accuracy
from .protocol import (
    LearningPrefix,
    PraisePool,
    Protocol,
    Templates,
    Transcript,
    elicit_praises,
    run_fewshot,
    run_learning_phase,
    run_mcefs_test,
    select_praise,
    validate_transcript,
)
from .records import append_jsonl, dumps, read_json, read_jsonl, sha256_hex, write_json, write_jsonl
from .report import compare_to_paper, render_runs
from .sampler import DemoSet, sample_demos, sample_dev

log = logging.getLogger(__name__)


class RunIncomplete(BackendError):
    """Some conversations failed; rerun ``resume`` to retry them."""


class _Journal:
    """Replays replies already paid for in an interrupted praise or learning phase.

    Test conversations have their own checkpoint; this covers the calls made
    before one exists.
    """

    def __init__(self, inner, path: Path):
        self.inner, self.path, self.config = inner, path, inner.config
        self.replies: dict[str, str] = {}
        self._lock = threading.Lock()
        if path.exists():
            lines = path.read_text(encoding="utf-8").split("\n")
            for n, line in enumerate(lines[:-1], 1):
                try:
                    rec = json.loads(line)
                    self.replies[rec["key"]] = rec["reply"]
                except (ValueError, KeyError, TypeError) as exc:
                    raise CorruptCheckpoint(f"{path}:{n}: {exc}") from exc

    def complete(self, conversation) -> str:
        key = cache_key(conversation, self.config)
        if key in self.replies:
            return self.replies[key]
        reply = self.inner.complete(conversation)
        with self._lock:
            append_jsonl(self.path, {"key": key, "reply": reply})
            self.replies[key] = reply
        return reply


@dataclass
class Conversation:
    index: int
    transcript: Transcript
    prediction: PredictionRecord


def build_backend(config: RunConfig, corpus: Corpus, templates: Templates):
    if config.backend == "scripted":
        if config.scripted_script:
            behavior = ScriptedBehavior.from_file(config.scripted_script)
        else:
            behavior = ScriptedBehavior.preset(
                config.scripted_behavior, corpus.train + corpus.test, templates)
        backend = ScriptedBackend(behavior, name=config.scripted_behavior)
    else:
        backend = LiveBackend(config.backend_config())
    if config.use_cache:
        cache_dir = config.cache_dir or str(Path(config.output_dir) / "cache")
        backend = CachedBackend(backend, cache_dir)
    return backend


class ExperimentRunner:
    def __init__(
        self,
        config: RunConfig,
        *,
        backend=None,
        corpus: Corpus | None = None,
        templates: Templates | None = None,
    ):
        self.config = config
        self.out = Path(config.output_dir)
        self.templates = templates or Templates.load(config.template_path)
        if corpus is None:
            if not (config.train_path and config.test_path):
                raise ConfigError("train_path and test_path are required")
            corpus = load_corpus(config.dataset, config.train_path, config.test_path)
        self.corpus = corpus
        self.backend = backend or build_backend(config, corpus, self.templates)
        self.protocol = Protocol(config.protocol)
        self.tests = corpus.test[: config.limit] if config.limit else list(corpus.test)
        self._ckpt_lock = threading.Lock()
        self.failures: list[str] = []

    # -- metadata ---------------------------------------------------------

    def manifest(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "config_hash": self.config.config_hash(),
            "template_sha256": self.templates.sha256,
            "code_version": __version__,
            "corpus_sha256": sha256_hex(dumps([i.to_record() for i in self.corpus.train + self.corpus.test])),
            "backend_model": self.backend.config.model,
            "limited": self.config.limit is not None,
            "notes": [
                "Feedback/reflection wording, retry policy and the absence of a system "
                "turn are harness choices, not published settings.",
            ],
        }

    def _prepare_dir(self) -> None:
        cfg_path = self.out / "config.json"
        if cfg_path.exists():
            stored = read_json(cfg_path)
            if stored.get("config_hash") != self.config.config_hash():
                raise CorruptCheckpoint(
                    f"{self.out} holds a run with a different config; use a fresh output directory")
            if stored.get("template_sha256") != self.templates.sha256:
                raise CorruptCheckpoint(f"{self.out} was run with different templates")
        self.out.mkdir(parents=True, exist_ok=True)
        write_json(cfg_path, self.manifest())
        (self.out / "templates.ini").write_text(self.templates.source_text, encoding="utf-8")

    def _event(self, msg: str) -> None:
        log.info(msg)
        with self._ckpt_lock, open(self.out / "events.log", "a", encoding="utf-8") as fh:
            fh.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {msg}\n")

    # -- top level --------------------------------------------------------

    def run(self) -> MetricsReport:
        self._prepare_dir()
        report = MetricsReport(seeds=list(self.config.seeds))
        for seed in self.config.seeds:
            for k in self.config.shots:
                key = RunKey(self.config.dataset, self.protocol.value, k, seed)
                metrics = self.run_one(key)
                if metrics is not None:
                    report.add(key, metrics)
        self.write_report(report)
        ckpt = self.out / "checkpoints"
        if ckpt.is_dir() and not any(ckpt.iterdir()):
            ckpt.rmdir()
        if self.failures:
            raise RunIncomplete(
                f"{len(self.failures)} conversation(s) failed; run `resume {self.out}` to retry")
        return report

    def write_report(self, report: MetricsReport) -> None:
        write_json(self.out / "results.json", report.to_dict())
        parts = [render_runs(report)]
        try:
            parts.append(compare_to_paper(report))
        except MCeFSError as exc:
            parts.append(f"(no comparison: {exc})")
        text = "\n\n".join(parts) + "\n"
        (self.out / "report.txt").write_text(text, encoding="utf-8")

    def run_id(self, key: RunKey) -> str:
        return f"{key.dataset}_{key.protocol}_k{key.k}_s{key.seed}"

    def run_one(self, key: RunKey) -> RunMetrics | None:
        rid = self.run_id(key)
        metrics_path = self.out / "metrics" / f"{rid}.json"
        if metrics_path.exists():
            m = read_json(metrics_path)
            return RunMetrics(m["accuracy"], m["macro_f1"], m["n"], m["unparsed"], m["limited"])

        demos = sample_demos(self.corpus, key.seed, key.k)
        save_instances(self.out / "demosets" / f"{rid}.jsonl", demos.demos)
        self._event(f"{rid}: start, demo labels {demos.label_counts()}")

        praise = prefix = None
        journal = _Journal(self.backend, self.out / "checkpoints" / f"{rid}.calls.jsonl")
        try:
            if self.protocol is Protocol.MCEFS_PR:
                praise = self.choose_praise(rid, demos, journal)
            if self.protocol is not Protocol.FEWSHOT:
                prefix = self.learning_prefix(rid, demos, praise, journal)
        except MCeFSError as exc:
            if isinstance(exc, (ConfigError, CorruptCheckpoint)):
                raise
            msg = f"{rid}/learning: {type(exc).__name__}: {exc}"
            self.failures.append(msg)
            self._event(f"FAILED {msg}")
            return None

        done = self.load_checkpoint(rid)
        todo = [i for i in range(len(self.tests)) if i not in done]
        if todo:
            self._execute(rid, key, demos, prefix, todo, done)
        if len(done) < len(self.tests):
            self._event(f"{rid}: incomplete ({len(done)}/{len(self.tests)})")
            return None

        convs = [done[i] for i in range(len(self.tests))]
        transcripts = [c.transcript.to_record() for c in convs]
        if prefix is not None:
            learning = Transcript(f"{rid}/learning", self.protocol, list(prefix.turns),
                                  self._meta(key, None, praise))
            transcripts.insert(0, learning.to_record())
        write_jsonl(self.out / "transcripts" / f"{rid}.jsonl", transcripts)
        preds = [c.prediction for c in convs]
        write_jsonl(self.out / "predictions" / f"{rid}.jsonl", (p.to_record() for p in preds))
        metrics = RunMetrics.from_records(preds, limited=self.config.limit is not None)
        write_json(metrics_path, {**key._asdict(), **metrics.to_dict()})
        for p in (self.out / "checkpoints").glob(f"{rid}.*"):
            p.unlink()
        self._event(f"{rid}: done acc={metrics.accuracy:.4f} f1={metrics.macro_f1:.4f}")
        return metrics

    # -- pieces -----------------------------------------------------------

    def _meta(self, key: RunKey, test: AbscInstance | None, praise: str | None) -> dict:
        meta = {"dataset": key.dataset, "seed": key.seed, "k": key.k}
        if test is not None:
            meta["source_id"] = test.source_id
        if praise is not None:
            meta["praise"] = praise
        return meta

    def choose_praise(self, rid: str, demos: DemoSet, backend=None) -> str:
        backend = backend or self.backend
        path = self.out / "praise" / f"{rid}.json"
        if path.exists():
            pool = PraisePool.from_record(read_json(path)["pool"])
            if pool.selected_index is not None:
                return pool.selected
        pool, elicitation = elicit_praises(backend, self.config.praise_n, demos.seed,
                                           templates=self.templates)
        dev = sample_dev(self.corpus, demos, self.config.dev_size)
        dev_rows, scores = [], []
        for j, praise in enumerate(pool.praises):
            prefix = run_learning_phase(backend, demos.demos, praise=praise,
                                        templates=self.templates,
                                        system_prompt=self.config.system_prompt)
            preds = []
            for inst in dev:
                turns, outcome = run_mcefs_test(backend, prefix, demos.demos, inst,
                                                templates=self.templates)
                cid = f"{rid}/praise-{j}/dev/{inst.source_id}"
                preds.append(PredictionRecord(cid, inst.source_id, inst.polarity,
                                              outcome.prediction, outcome.raw_text))
                dev_rows.append(Transcript(cid, Protocol.MCEFS_PR, turns,
                                           {"praise_index": j}).to_record())
            scores.append(accuracy(preds))
        chosen = select_praise(pool, scores)
        write_jsonl(self.out / "praise" / f"{rid}.dev.jsonl", dev_rows)
        write_json(path, {
            "pool": pool.to_record(),
            "dev_source_ids": [i.source_id for i in dev],
            "elicitation": [t.to_record() for t in elicitation],
        })
        self._event(f"{rid}: praise #{pool.selected_index} {chosen!r} dev accuracies {scores}")
        return chosen

    def learning_prefix(self, rid: str, demos: DemoSet, praise: str | None,
                        backend=None) -> LearningPrefix:
        path = self.out / "checkpoints" / f"{rid}.prefix.json"
        if path.exists():
            return LearningPrefix.from_record(read_json(path))
        prefix = run_learning_phase(backend or self.backend, demos.demos, praise=praise,
                                    templates=self.templates,
                                    system_prompt=self.config.system_prompt)
        write_json(path, prefix.to_record())
        return prefix

    def load_checkpoint(self, rid: str) -> dict[int, Conversation]:
        path = self.out / "checkpoints" / f"{rid}.jsonl"
        if not path.exists():
            return {}
        text = path.read_text(encoding="utf-8")
        lines = text.split("\n")
        if lines and lines[-1]:
            log.warning("%s: dropping truncated final checkpoint line", path)
        done: dict[int, Conversation] = {}
        for n, line in enumerate(lines[:-1], 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                idx = int(rec["index"])
                conv = Conversation(idx, Transcript.from_record(rec["transcript"]),
                                    PredictionRecord.from_record(rec["prediction"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise CorruptCheckpoint(f"{path}:{n}: {exc}") from exc
            if not 0 <= idx < len(self.tests) or self.tests[idx].source_id != conv.prediction.source_id:
                raise CorruptCheckpoint(f"{path}:{n}: entry does not match the test set")
            done[idx] = conv
        return done

    def _conversation(self, rid, key, demos, prefix, i) -> Conversation:
        test = self.tests[i]
        cid = f"{rid}/test-{i:05d}"
        meta = self._meta(key, test, prefix.praise if prefix else None)
        if prefix is None:
            tr, outcome = run_fewshot(self.backend, demos.demos, test, templates=self.templates,
                                      system_prompt=self.config.system_prompt,
                                      conversation_id=cid)
            tr.meta = meta
        else:
            turns, outcome = run_mcefs_test(self.backend, prefix, demos.demos, test,
                                            templates=self.templates)
            tr = Transcript(cid, self.protocol, turns, meta)
        validate_transcript(tr, k=key.k)
        pred = PredictionRecord(cid, test.source_id, test.polarity, outcome.prediction,
                                outcome.raw_text)
        return Conversation(i, tr, pred)

    def _execute(self, rid, key, demos, prefix, todo, done) -> None:
        ckpt = self.out / "checkpoints" / f"{rid}.jsonl"

        def job(i: int) -> Conversation:
            conv = self._conversation(rid, key, demos, prefix, i)
            with self._ckpt_lock:
                append_jsonl(ckpt, {"index": i, "transcript": conv.transcript.to_record(),
                                    "prediction": conv.prediction.to_record()})
            return conv

        pool = ThreadPoolExecutor(max_workers=self.config.max_in_flight)
        try:
            futures = {pool.submit(job, i): i for i in todo}
            for fut in as_completed(futures):
                i = futures[fut]
                try:
                    conv = fut.result()
                except MCeFSError as exc:
                    msg = f"{rid}/test-{i:05d}: {type(exc).__name__}: {exc}"
                    self.failures.append(msg)
                    self._event(f"FAILED {msg}")
                    continue
                done[i] = conv
        finally:
            pool.shutdown(wait=True, cancel_futures=True)


def run(config: RunConfig, **kwargs) -> MetricsReport:
    return ExperimentRunner(config, **kwargs).run()


def resume(output_dir: str | Path, config: RunConfig | None = None, **kwargs) -> MetricsReport:
    """Continue a checkpointed run from its stored config.

    Passing ``config`` asserts it is the same experiment; a differing hash
    raises :class:`CorruptCheckpoint`.
    """
    out = Path(output_dir)
    cfg_path = out / "config.json"
    if not cfg_path.exists():
        raise CorruptCheckpoint(f"{out} has no config.json")
    try:
        stored = read_json(cfg_path)
        stored_cfg = RunConfig.from_dict(stored["config"])
    except (ValueError, KeyError, MCeFSError) as exc:
        raise CorruptCheckpoint(f"{cfg_path}: {exc}") from exc
    if stored_cfg.config_hash() != stored.get("config_hash"):
        raise CorruptCheckpoint(f"{cfg_path}: stored hash does not match stored config")
    if config is not None and config.config_hash() != stored_cfg.config_hash():
        raise CorruptCheckpoint("config differs from the checkpointed run")
    cfg = config or stored_cfg
    cfg.output_dir = str(out)
    templates = kwargs.pop("templates", None)
    if templates is None:
        tpl_path = out / "templates.ini"
        templates = Templates.load(tpl_path) if tpl_path.exists() else Templates.load(cfg.template_path)
    return ExperimentRunner(cfg, templates=templates, **kwargs).run()


def load_report(output_dir: str | Path) -> MetricsReport:
    path = Path(output_dir)
    if path.is_dir():
        path = path / "results.json"
    return MetricsReport.from_dict(read_json(path))


def load_predictions(path: str | Path) -> list[PredictionRecord]:
    return [PredictionRecord.from_record(r) for r in read_jsonl(path)]
