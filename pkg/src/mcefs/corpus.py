"""SemEval-2014 Task 4 ingestion.

Parses the official ``<sentences>`` XML into one :class:`AbscInstance` per
aspect term, dropping ``conflict`` labels so the label space is three-way.
"""
from __future__ import annotations

import logging
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

from .errors import DataError, MalformedXml, UnknownPolarity
from .records import read_jsonl, write_jsonl

log = logging.getLogger(__name__)

DATASETS = ("14-Laptop", "14-Restaurant")

# Published split sizes after preprocessing (train, test).
PUBLISHED_COUNTS = {
    "14-Laptop": (2282, 632),
    "14-Restaurant": (3608, 1119),
}

# File names of the official gold releases (train, test).
OFFICIAL_FILES = {
    "14-Laptop": ("Laptop_Train_v2.xml", "Laptops_Test_Gold.xml"),
    "14-Restaurant": ("Restaurants_Train_v2.xml", "Restaurants_Test_Gold.xml"),
}


class Polarity(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    NEUTRAL = "neutral"

    def __str__(self) -> str:
        return self.value


LABELS = tuple(Polarity)
_DROPPED = {"conflict"}


@dataclass(frozen=True)
class AbscInstance:
    sentence: str
    aspect_term: str
    polarity: Polarity
    source_id: str
    char_span: tuple[int, int] | None = None

    def __post_init__(self):
        if not self.sentence:
            raise DataError(f"{self.source_id}: empty sentence")
        if not self.aspect_term:
            raise DataError(f"{self.source_id}: empty aspect term")
        if not isinstance(self.polarity, Polarity):
            object.__setattr__(self, "polarity", Polarity(self.polarity))
        if self.char_span is not None:
            start, end = self.char_span
            if self.sentence[start:end] != self.aspect_term:
                raise DataError(f"{self.source_id}: char_span does not cover aspect term")
            object.__setattr__(self, "char_span", (int(start), int(end)))

    def to_record(self) -> dict:
        return {
            "sentence": self.sentence,
            "aspect_term": self.aspect_term,
            "polarity": self.polarity.value,
            "source_id": self.source_id,
            "char_span": list(self.char_span) if self.char_span else None,
        }

    @classmethod
    def from_record(cls, rec: dict) -> AbscInstance:
        span = rec.get("char_span")
        return cls(
            sentence=rec["sentence"],
            aspect_term=rec["aspect_term"],
            polarity=Polarity(rec["polarity"]),
            source_id=rec["source_id"],
            char_span=tuple(span) if span else None,
        )


@dataclass
class Corpus:
    name: str
    train: list[AbscInstance] = field(default_factory=list)
    test: list[AbscInstance] = field(default_factory=list)

    def __post_init__(self):
        overlap = {i.source_id for i in self.train} & {i.source_id for i in self.test}
        if overlap:
            raise DataError(f"train/test share source ids: {sorted(overlap)[:5]}")


@dataclass
class CorpusStats:
    train_count: int
    test_count: int
    per_label_counts: dict[str, dict[Polarity, int]]


def parse_semeval(xml_bytes: bytes, split: str) -> list[AbscInstance]:
    """Parse one SemEval-2014 XML file into instances, in document order.

    ``split`` prefixes every ``source_id`` (``"train/813#0"``) so the two
    splits can never collide. Offsets that disagree with the ``term``
    attribute are discarded; the term is kept.
    """
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    try:
        root = ET.fromstring(xml_bytes)
    except ET.ParseError as exc:
        raise MalformedXml(str(exc)) from exc

    out: list[AbscInstance] = []
    dropped = Counter()
    bad_spans = 0
    for sent in root.iter("sentence"):
        sid = sent.get("id", "")
        text_el = sent.find("text")
        text = text_el.text if text_el is not None and text_el.text else ""
        terms = sent.find("aspectTerms")
        if terms is None:
            continue
        for idx, term in enumerate(terms.findall("aspectTerm")):
            pol = (term.get("polarity") or "").strip().lower()
            if pol in _DROPPED:
                dropped[pol] += 1
                continue
            try:
                polarity = Polarity(pol)
            except ValueError:
                raise UnknownPolarity(f"sentence {sid!r}: polarity {term.get('polarity')!r}") from None
            aspect = term.get("term") or ""
            span = _span(term, text, aspect)
            if span is None and term.get("from") is not None:
                bad_spans += 1
            out.append(AbscInstance(
                sentence=text,
                aspect_term=aspect,
                polarity=polarity,
                source_id=f"{split}/{sid}#{idx}",
                char_span=span,
            ))
    if dropped or bad_spans:
        log.info("%s: kept %d aspect terms, dropped %s, %d offsets ignored",
                 split, len(out), dict(dropped), bad_spans)
    return out


def _span(term: ET.Element, text: str, aspect: str) -> tuple[int, int] | None:
    try:
        start, end = int(term.get("from")), int(term.get("to"))
    except (TypeError, ValueError):
        return None
    if text[start:end] != aspect:
        return None
    return (start, end)


def official_paths(directory: str | Path, name: str) -> tuple[Path, Path]:
    train, test = OFFICIAL_FILES[name]
    return Path(directory) / train, Path(directory) / test


def load_corpus(name: str, train_path: str | Path, test_path: str | Path) -> Corpus:
    train = parse_semeval(Path(train_path).read_bytes(), "train")
    test = parse_semeval(Path(test_path).read_bytes(), "test")
    corpus = Corpus(name=name, train=train, test=test)
    stats = corpus_stats(corpus)
    log.info("loaded %s: %d train / %d test", name, stats.train_count, stats.test_count)
    return corpus


def corpus_stats(corpus: Corpus) -> CorpusStats:
    per_label = {}
    for split, items in (("train", corpus.train), ("test", corpus.test)):
        counts = Counter(i.polarity for i in items)
        per_label[split] = {p: counts.get(p, 0) for p in LABELS}
    return CorpusStats(len(corpus.train), len(corpus.test), per_label)


def format_stats(corpus: Corpus) -> str:
    """One-block summary against the published split sizes."""
    stats = corpus_stats(corpus)
    expected = PUBLISHED_COUNTS.get(corpus.name)
    lines = [f"{corpus.name}"]
    for split, n, exp in (("train", stats.train_count, expected and expected[0]),
                          ("test", stats.test_count, expected and expected[1])):
        labels = " ".join(f"{p.value}={c}" for p, c in stats.per_label_counts[split].items())
        if exp is None:
            verdict = ""
        elif n == exp:
            verdict = f"  (published {exp:,}: match)"
        else:
            verdict = f"  (published {exp:,}: MISMATCH {n - exp:+d})"
        lines.append(f"  {split:<5} {n:>6,}  [{labels}]{verdict}")
    return "\n".join(lines)


def save_instances(path: str | Path, instances: Iterable[AbscInstance]) -> None:
    write_jsonl(path, (i.to_record() for i in instances))


def load_instances(path: str | Path) -> list[AbscInstance]:
    return [AbscInstance.from_record(r) for r in read_jsonl(path)]
