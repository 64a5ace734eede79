from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsrnn.metrics import ConfusionMatrix, accuracy, confusion, evaluate, f_measure, f_weighted, kappa


def brute_force(pairs, k):
    """Exact rationals from raw (true, predicted) pairs, no confusion matrix."""
    n = len(pairs)
    agree = Fraction(sum(t == p for t, p in pairs), n)
    p_true = [Fraction(sum(t == c for t, _ in pairs), n) for c in range(k)]
    p_pred = [Fraction(sum(p == c for _, p in pairs), n) for c in range(k)]
    chance = sum(a * b for a, b in zip(p_true, p_pred))
    kap = Fraction(0) if chance == 1 else (agree - chance) / (1 - chance)
    f1 = []
    for c in range(k):
        tp = sum(t == c and p == c for t, p in pairs)
        fp = sum(t != c and p == c for t, p in pairs)
        fn = sum(t == c and p != c for t, p in pairs)
        if tp == 0:
            f1.append(Fraction(0))
        else:
            prec, rec = Fraction(tp, tp + fp), Fraction(tp, tp + fn)
            f1.append(2 * prec * rec / (prec + rec))
    present = [c for c in range(k) if any(t == c for t, _ in pairs)]
    macro = sum(f1[c] for c in present) / len(present)
    return agree, kap, f1, macro


pairs_strategy = st.integers(2, 5).flatmap(
    lambda k: st.tuples(st.just(k), st.lists(st.tuples(st.integers(0, k - 1), st.integers(0, k - 1)),
                                             min_size=1, max_size=60)))


@settings(max_examples=300, deadline=None)
@given(pairs_strategy)
def test_matches_brute_force(case):
    k, pairs = case
    t, p = zip(*pairs)
    cm = confusion(t, p, k)
    agree, kap, f1, macro = brute_force(pairs, k)
    assert accuracy(cm) == float(agree)
    assert kappa(cm) == float(kap)
    per_class, m = f_measure(cm)
    assert per_class.tolist() == [float(v) for v in f1]
    assert m == pytest.approx(float(macro), abs=1e-12)
    assert -1.0 <= kappa(cm) <= 1.0


def test_hand_case():
    cm = ConfusionMatrix(np.array([[40, 10], [20, 30]]))
    assert accuracy(cm) == 0.70
    assert kappa(cm) == 0.40
    per_class, macro = f_measure(cm)
    assert per_class[0] == 80 / 110 and per_class[1] == 60 / 90
    assert f_weighted(cm) == pytest.approx(0.5 * 80 / 110 + 0.5 * 60 / 90, abs=1e-15)


def test_perfect_and_constant_predictions():
    assert kappa(confusion([0, 1, 2], [0, 1, 2], 3)) == 1.0
    assert kappa(confusion([0, 0, 0], [0, 0, 0], 2)) == 0.0  # chance agreement already 1
    cm = confusion([0, 1, 1, 0], [1, 1, 1, 1], 2)
    assert kappa(cm) == 0.0


def test_confusion_layout_and_csv():
    cm = confusion([0, 0, 1, 2], [0, 1, 1, 0], 3, labels=(1, 2, 3))
    assert cm.counts.tolist() == [[1, 1, 0], [0, 1, 0], [1, 0, 0]]
    assert cm.total == 4 and cm.row_sums.tolist() == [2, 1, 1]
    assert cm.to_csv().splitlines() == ["true\\pred,1,2,3", "1,1,1,0", "2,0,1,0", "3,1,0,0"]


def test_errors():
    with pytest.raises(ValueError):
        confusion([0, 1], [0], 2)
    with pytest.raises(ValueError):
        confusion([0, 2], [0, 1], 2)
    with pytest.raises(ValueError):
        accuracy(ConfusionMatrix(np.zeros((2, 2), dtype=int)))
    with pytest.raises(ValueError):
        ConfusionMatrix(np.array([[1, -1], [0, 0]]))


def test_report_serialisations():
    rep = evaluate([0, 1, 1, 2], [0, 1, 2, 2], 3, labels=(1, 2, 3), class_names={1: "Very low"})
    doc = rep.to_json()
    assert doc["total"] == 4 and doc["labels"] == [1, 2, 3]
    assert doc["accuracy"] == 0.75
    text = rep.to_text("demo")
    assert text.startswith("demo\naccuracy   0.7500") and "Very low" in text
