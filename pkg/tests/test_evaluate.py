import csv
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from creditpipe.errors import InputError
from creditpipe.evaluate import (
    ConfusionMatrix,
    PayoffMatrix,
    classification_metrics,
    confusion,
    multiclass_auc,
    profit,
    roc_auc,
)
from oracles import auc_pairs

# published cell counts of the two reference confusion matrices
RISK = dict(tp=15_275, fn=12_214, fp=7_406, tn=38_842)
RESPONSE = dict(tp=58_297, fn=15_440, fp=114_859, tn=38_842)


def test_identical_labels_give_diagonal():
    y = [0, 1, 2, 2, 1]
    cm = confusion(y, y, (0, 1, 2))
    assert (cm.counts == np.diag([1, 2, 2])).all()


def test_confusion_from_expanded_label_pairs():
    c = RISK
    y_true = np.repeat([1, 1, 0, 0], [c["tp"], c["fn"], c["fp"], c["tn"]])
    y_pred = np.repeat([1, 0, 1, 0], [c["tp"], c["fn"], c["fp"], c["tn"]])
    cm = confusion(y_true, y_pred, (0, 1))
    assert cm.counts.tolist() == [[c["tn"], c["fp"]], [c["fn"], c["tp"]]]
    assert cm == ConfusionMatrix.binary(**c)


def test_empty_confusion_is_zero():
    assert confusion([], [], (0, 1)).counts.tolist() == [[0, 0], [0, 0]]


def test_confusion_errors():
    with pytest.raises(InputError):
        confusion([0, 1], [0], (0, 1))
    with pytest.raises(InputError):
        confusion([0, 3], [0, 1], (0, 1))


def test_risk_reference_rates():
    m = classification_metrics(ConfusionMatrix.binary(**RISK))
    assert m.recall[1] == pytest.approx(15_275 / 27_489)
    assert m.specificity == pytest.approx(38_842 / 46_248)
    assert m.accuracy == pytest.approx(54_117 / 73_737)
    for got, published in ((m.recall[1], 0.557), (m.specificity, 0.841), (m.accuracy, 0.735)):
        assert abs(got - published) <= 0.002


def test_response_reference_rates():
    m = classification_metrics(ConfusionMatrix.binary(**RESPONSE))
    assert m.recall[1] == pytest.approx(58_297 / 73_737)
    assert m.precision[1] == pytest.approx(58_297 / 173_156)
    assert abs(m.recall[1] - 0.791) <= 0.001 and abs(m.precision[1] - 0.337) <= 0.001


def test_identity_matrix_rates_are_one():
    m = classification_metrics(ConfusionMatrix(np.eye(3, dtype=int), (0, 1, 2)))
    assert m.accuracy == 1.0 and m.macro_precision == 1.0 and m.macro_recall == 1.0
    assert m.degenerate == []


def test_zero_denominator_is_flagged():
    m = classification_metrics(ConfusionMatrix.binary(tp=0, fn=0, fp=0, tn=5))
    assert m.recall[1] == 0.0 and "recall[1]" in m.degenerate and "precision[1]" in m.degenerate


def test_objective_semantics():
    m = classification_metrics(ConfusionMatrix.binary(tp=3, fn=1, fp=2, tn=4))
    assert m.objective("recall") == 0.75 and m.objective("specificity") == 4 / 6
    m3 = classification_metrics(ConfusionMatrix(np.array([[2, 1, 0], [0, 3, 0], [1, 0, 1]]), (0, 1, 2)))
    assert m3.objective("recall") == pytest.approx(m3.macro_recall)
    with pytest.raises(InputError):
        m3.objective("specificity")


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_metrics_are_class_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 5))
    counts = rng.integers(0, 20, (k, k))
    counts[0, 0] += 1
    perm = rng.permutation(k)
    classes = tuple(range(k))
    a = classification_metrics(ConfusionMatrix(counts, classes))
    b = classification_metrics(ConfusionMatrix(counts[np.ix_(perm, perm)], tuple(perm)))
    for c in classes:
        assert a.precision[c] == b.precision[c] and a.recall[c] == b.recall[c]
    assert a.accuracy == b.accuracy
    assert 0 <= a.accuracy <= 1 and all(0 <= v <= 1 for v in a.recall.values())


def test_perfect_separation_auc_one():
    assert roc_auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]).auc == 1.0


def test_small_auc_example():
    assert roc_auc([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8]).auc == 0.75
    assert auc_pairs([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8]) == 0.75


def test_all_ties_auc_half():
    assert roc_auc([0, 1, 0, 1, 1], [0.3] * 5).auc == 0.5


def test_single_class_auc_undefined():
    with pytest.raises(InputError):
        roc_auc([1, 1], [0.2, 0.3])


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31))
def test_auc_equals_pair_counting(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 201))
    y = rng.integers(0, 2, n)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    s = rng.integers(0, int(rng.integers(1, 30)), n) / 10.0
    curve = roc_auc(y, s)
    assert curve.auc == auc_pairs(y, s)
    assert (np.diff(curve.fpr) >= 0).all() and (np.diff(curve.tpr) >= 0).all()
    assert (curve.fpr[0], curve.tpr[0]) == (0.0, 0.0) and (curve.fpr[-1], curve.tpr[-1]) == (1.0, 1.0)


def test_roc_csv(tmp_path):
    c = roc_auc([0, 1, 1, 0], [0.2, 0.7, 0.4, 0.4])
    c.to_csv(tmp_path / "roc.csv")
    rows = list(csv.reader(open(tmp_path / "roc.csv")))
    assert rows[0] == ["fpr", "tpr", "threshold"] and rows[1][2] == "inf"
    assert len(rows) == len(c.fpr) + 1


def test_multiclass_auc_perfect_and_uniform():
    y = np.array([0, 1, 2, 0, 1, 2])
    assert multiclass_auc(y, np.eye(3)[y]) == 1.0
    assert multiclass_auc(y, np.full((6, 3), 1 / 3)) == 0.5


def test_multiclass_auc_is_mean_of_binary_aucs():
    rng = np.random.default_rng(7)
    y = rng.integers(0, 3, 90)
    P = rng.dirichlet(np.ones(3), 90)
    expected = np.mean([auc_pairs((y == c).astype(int), P[:, c]) for c in range(3)])
    assert multiclass_auc(y, P) == pytest.approx(expected, abs=1e-15)


def test_multiclass_auc_single_class_rejected():
    with pytest.raises(InputError):
        multiclass_auc(np.zeros(4, dtype=int), np.full((4, 2), 0.5))


def test_profit_zero_matrix():
    assert profit(ConfusionMatrix.binary(0, 0, 0, 0)) == Decimal("0.00")


def test_profit_default_payoff_example():
    # rows = actual (good 0, bad 1), columns = predicted
    cm = ConfusionMatrix(np.array([[100, 0], [10, 0]]), (0, 1))
    assert profit(cm, PayoffMatrix.risk_default()) == Decimal("14000.00")


def test_profit_shape_mismatch():
    with pytest.raises(InputError):
        profit(ConfusionMatrix(np.eye(3, dtype=int), (0, 1, 2)), PayoffMatrix.risk_default())


def test_payoff_rejects_sub_cent_entries():
    with pytest.raises(InputError):
        PayoffMatrix.from_dollars([[0.001, 0], [0, 0]])


def test_payoff_json_round_trip():
    p = PayoffMatrix.from_dollars([["12.34", -5], [0, "0.01"]])
    assert PayoffMatrix.from_json(p.to_json()) == p


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_profit_is_linear(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 4))
    A = ConfusionMatrix(rng.integers(0, 10**6, (k, k)), tuple(range(k)))
    B = ConfusionMatrix(rng.integers(0, 10**6, (k, k)), tuple(range(k)))
    pay = PayoffMatrix.from_dollars((rng.integers(-10**5, 10**5, (k, k)) / 100).tolist())
    assert profit(A + B, pay) == profit(A, pay) + profit(B, pay)
