"""Accuracy and three-class macro F1.

Unparseable predictions count as wrong for accuracy. For F1 they are a
false negative of their gold class and a false positive of nothing. Any
0/0 precision, recall or F1 is 0, and every class stays in the mean.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from statistics import fmean
from typing import Iterable, NamedTuple, Sequence

from .corpus import LABELS, Polarity
from .errors import EmptyInput
from .protocol.labels import UNPARSED

_INDEX = {p: i for i, p in enumerate(LABELS)}


@dataclass(frozen=True)
class PredictionRecord:
    conversation_id: str
    source_id: str
    gold: Polarity
    prediction: Polarity | None
    raw_text: str

    @property
    def correct(self) -> bool:
        return self.prediction is not None and self.prediction is self.gold

    def to_record(self) -> dict:
        return {
            "conversation_id": self.conversation_id,
            "source_id": self.source_id,
            "gold": self.gold.value,
            "prediction": self.prediction.value if self.prediction else UNPARSED,
            "raw_text": self.raw_text,
        }

    @classmethod
    def from_record(cls, rec: dict) -> PredictionRecord:
        pred = rec["prediction"]
        return cls(rec["conversation_id"], rec["source_id"], Polarity(rec["gold"]),
                   None if pred == UNPARSED else Polarity(pred), rec["raw_text"])


@dataclass
class ConfusionMatrix:
    """``counts[gold][pred]`` over parsed predictions; ``unparsed[gold]`` for the rest."""

    counts: list[list[int]] = field(default_factory=lambda: [[0] * 3 for _ in range(3)])
    unparsed: list[int] = field(default_factory=lambda: [0] * 3)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[Polarity, Polarity | None]]) -> ConfusionMatrix:
        cm = cls()
        for gold, pred in pairs:
            g = _INDEX[Polarity(gold)]
            if pred is None:
                cm.unparsed[g] += 1
            else:
                cm.counts[g][_INDEX[Polarity(pred)]] += 1
        return cm

    @classmethod
    def from_records(cls, records: Iterable[PredictionRecord]) -> ConfusionMatrix:
        return cls.from_pairs((r.gold, r.prediction) for r in records)

    @property
    def unparsed_count(self) -> int:
        return sum(self.unparsed)

    @property
    def total(self) -> int:
        return sum(map(sum, self.counts)) + self.unparsed_count

    def correct(self) -> int:
        return sum(self.counts[i][i] for i in range(3))


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def per_class_f1(cm: ConfusionMatrix) -> dict[Polarity, float]:
    out = {}
    for c, label in enumerate(LABELS):
        tp = cm.counts[c][c]
        fp = sum(cm.counts[g][c] for g in range(3) if g != c)
        fn = sum(cm.counts[c][p] for p in range(3) if p != c) + cm.unparsed[c]
        precision = _ratio(tp, tp + fp)
        recall = _ratio(tp, tp + fn)
        out[label] = _ratio(2 * precision * recall, precision + recall)
    return out


def macro_f1(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise EmptyInput("macro F1 of an empty confusion matrix")
    return sum(per_class_f1(cm).values()) / 3


def accuracy(records: Sequence[PredictionRecord]) -> float:
    if not records:
        raise EmptyInput("accuracy of no records")
    return sum(r.correct for r in records) / len(records)


class RunKey(NamedTuple):
    dataset: str
    protocol: str
    k: int
    seed: int


class CellKey(NamedTuple):
    dataset: str
    protocol: str
    k: int


@dataclass(frozen=True)
class RunMetrics:
    accuracy: float
    macro_f1: float
    n: int
    unparsed: int = 0
    limited: bool = False

    @classmethod
    def from_records(cls, records: Sequence[PredictionRecord], limited: bool = False) -> RunMetrics:
        cm = ConfusionMatrix.from_records(records)
        return cls(accuracy(records), macro_f1(cm), len(records), cm.unparsed_count, limited)

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "macro_f1": self.macro_f1, "n": self.n,
                "unparsed": self.unparsed, "limited": self.limited}


@dataclass
class MetricsReport:
    seeds: list[int]
    runs: dict[RunKey, RunMetrics] = field(default_factory=dict)

    def add(self, key: RunKey, metrics: RunMetrics) -> None:
        self.runs[RunKey(*key)] = metrics

    @property
    def limited(self) -> bool:
        return any(m.limited for m in self.runs.values())

    def means(self) -> dict[CellKey, RunMetrics]:
        """Cross-seed means, only for cells where every configured seed has run."""
        grouped: dict[CellKey, dict[int, RunMetrics]] = defaultdict(dict)
        for key, m in self.runs.items():
            grouped[CellKey(key.dataset, key.protocol, key.k)][key.seed] = m
        out = {}
        for cell, by_seed in sorted(grouped.items()):
            if not all(s in by_seed for s in self.seeds):
                continue
            ms = [by_seed[s] for s in self.seeds]
            out[cell] = RunMetrics(
                accuracy=fmean(m.accuracy for m in ms),
                macro_f1=fmean(m.macro_f1 for m in ms),
                n=sum(m.n for m in ms),
                unparsed=sum(m.unparsed for m in ms),
                limited=any(m.limited for m in ms),
            )
        return out

    def to_dict(self) -> dict:
        return {
            "seeds": self.seeds,
            "runs": [{**k._asdict(), **m.to_dict()} for k, m in sorted(self.runs.items())],
            "means": [{**c._asdict(), **m.to_dict()} for c, m in self.means().items()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> MetricsReport:
        rep = cls(seeds=list(data["seeds"]))
        for row in data.get("runs", []):
            rep.add(RunKey(row["dataset"], row["protocol"], int(row["k"]), int(row["seed"])),
                    RunMetrics(row["accuracy"], row["macro_f1"], row.get("n", 0),
                               row.get("unparsed", 0), row.get("limited", False)))
        return rep
