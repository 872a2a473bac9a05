import random

import pytest
from hypothesis import given, strategies as st

from mcefs.corpus import Polarity
from mcefs.errors import EmptyInput
from mcefs.metrics import (
    ConfusionMatrix,
    MetricsReport,
    PredictionRecord,
    RunKey,
    RunMetrics,
    accuracy,
    macro_f1,
)
from oracles import CLASSES, brute_accuracy, brute_macro_f1

P, N, U = Polarity.POSITIVE, Polarity.NEGATIVE, Polarity.NEUTRAL


def records(gold, pred):
    return [PredictionRecord(f"c{i}", f"s{i}", Polarity(g), None if p is None else Polarity(p), "")
            for i, (g, p) in enumerate(zip(gold, pred))]


def f1(gold, pred):
    return macro_f1(ConfusionMatrix.from_records(records(gold, pred)))


def test_accuracy_examples():
    assert accuracy(records([P, P, N, U], [P, P, N, N])) == 0.75
    assert accuracy(records([P, N], [None, None])) == 0.0
    assert accuracy(records([P, N, U], [P, N, U])) == 1.0


def test_macro_f1_examples():
    assert f1([P, N, U], [P, N, U]) == 1.0
    assert f1([P, P, N, U], [P, N, N, U]) == pytest.approx(7 / 9, abs=1e-12)
    assert f1([P, P, P], [P, P, P]) == pytest.approx(1 / 3, abs=1e-12)
    assert f1([P, P, N, U], [P, P, P, P]) == pytest.approx(2 / 9, abs=1e-12)


def test_unparsed_is_fn_only():
    cm = ConfusionMatrix.from_pairs([(P, None), (N, N)])
    assert cm.unparsed == [1, 0, 0] and cm.unparsed_count == 1 and cm.total == 2
    # positive: recall 0 -> F1 0; negative: perfect; neutral: 0/0 -> 0
    assert macro_f1(cm) == pytest.approx(1 / 3)


def test_empty_inputs():
    with pytest.raises(EmptyInput):
        accuracy([])
    with pytest.raises(EmptyInput):
        macro_f1(ConfusionMatrix())


def random_case(rng):
    n = rng.randint(1, 200)
    gold = [rng.choice(CLASSES) for _ in range(n)]
    pred = [None if rng.random() < 0.1 else rng.choice(CLASSES) for _ in range(n)]
    return gold, pred


def test_oracle_agreement_1000_cases():
    rng = random.Random(20240601)
    for _ in range(1000):
        gold, pred = random_case(rng)
        recs = records(gold, pred)
        assert abs(accuracy(recs) - float(brute_accuracy(gold, pred))) <= 1e-12
        cm = ConfusionMatrix.from_records(recs)
        assert abs(macro_f1(cm) - float(brute_macro_f1(gold, pred))) <= 1e-12


_label = st.sampled_from(list(Polarity))
_pairs = st.lists(st.tuples(_label, st.one_of(st.none(), _label)), min_size=1, max_size=60)


@given(_pairs, st.permutations(list(Polarity)))
def test_macro_f1_invariant_under_relabeling(pairs, perm):
    mapping = dict(zip(Polarity, perm))
    relabeled = [(mapping[g], None if p is None else mapping[p]) for g, p in pairs]
    a = macro_f1(ConfusionMatrix.from_pairs(pairs))
    b = macro_f1(ConfusionMatrix.from_pairs(relabeled))
    assert a == pytest.approx(b, abs=1e-12)


@given(_pairs)
def test_counts_conserved(pairs):
    cm = ConfusionMatrix.from_pairs(pairs)
    assert cm.total == len(pairs)
    assert 0.0 <= macro_f1(cm) <= 1.0


def test_f1_can_exceed_or_trail_accuracy():
    # no ordering between the two metrics is promised; both directions occur
    low_f1 = records([P, P, P, N], [P, P, P, P])
    high_f1 = records([P, N, U, U, U], [P, N, U, P, P])
    assert macro_f1(ConfusionMatrix.from_records(low_f1)) < accuracy(low_f1)
    assert macro_f1(ConfusionMatrix.from_records(high_f1)) > accuracy(high_f1)


def test_prediction_record_round_trip():
    r = PredictionRecord("c", "s", P, None, "I refuse")
    assert r.to_record()["prediction"] == "unparsed"
    assert PredictionRecord.from_record(r.to_record()) == r


def test_means_over_configured_seeds_only():
    rep = MetricsReport(seeds=[13, 42])
    rep.add(RunKey("14-Laptop", "mcefs", 3, 13), RunMetrics(0.8, 0.7, 10))
    assert rep.means() == {}
    rep.add(RunKey("14-Laptop", "mcefs", 3, 42), RunMetrics(0.6, 0.5, 10))
    rep.add(RunKey("14-Laptop", "mcefs", 3, 550), RunMetrics(0.0, 0.0, 10))
    (cell, m), = rep.means().items()
    assert m.accuracy == pytest.approx(0.7) and m.macro_f1 == pytest.approx(0.6)


def test_report_round_trip():
    rep = MetricsReport(seeds=[13])
    rep.add(RunKey("14-Laptop", "fewshot", 1, 13), RunMetrics(0.5, 0.25, 4, 1, True))
    again = MetricsReport.from_dict(rep.to_dict())
    assert again.runs == rep.runs and again.limited
