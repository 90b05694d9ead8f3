import numpy as np
import pytest
from hypothesis import given, strategies as st

from evcharge.errors import BadClass, EmptyMatrix, LengthMismatch
from evcharge.metrics import (
    RunReport,
    classification_report,
    comparison_table,
    confusion_matrix,
    fingerprint,
    table_csv,
    table_text,
)

labels = st.lists(st.integers(0, 3), min_size=1, max_size=60)


def test_hand_counted_confusion():
    cm = confusion_matrix([0, 0, 1, 1], [0, 1, 1, 1])
    assert (cm[0, 0], cm[0, 1], cm[1, 1]) == (1, 1, 2)
    assert cm.sum() == 4


def test_hand_computed_report():
    r = classification_report(confusion_matrix([0, 0, 1, 1], [0, 1, 1, 1]))
    assert r.precision[0] == 1.0 and r.recall[0] == 0.5
    assert r.precision[1] == pytest.approx(2 / 3) and r.recall[1] == 1.0
    assert r.accuracy == 0.75
    assert r.f1[0] == pytest.approx(2 / 3) and r.f1[1] == pytest.approx(0.8)


def test_absent_class_is_zero():
    r = classification_report(confusion_matrix([0, 1], [0, 1]))
    assert (r.precision[2], r.recall[2], r.f1[2], r.support[2]) == (0.0, 0.0, 0.0, 0)


@given(labels)
def test_perfect_predictions(truth):
    cm = confusion_matrix(truth, truth)
    assert np.array_equal(cm, np.diag(np.diag(cm)))
    assert cm.sum(axis=1).tolist() == [truth.count(c) for c in range(4)]
    r = classification_report(cm)
    assert r.accuracy == 1.0
    for c in set(truth):
        assert r.precision[c] == r.recall[c] == r.f1[c] == 1.0


@given(st.data())
def test_transpose_symmetry(data):
    truth = data.draw(labels)
    pred = data.draw(st.lists(st.integers(0, 3), min_size=len(truth), max_size=len(truth)))
    assert np.array_equal(confusion_matrix(pred, truth), confusion_matrix(truth, pred).T)


def test_confusion_errors():
    with pytest.raises(LengthMismatch):
        confusion_matrix([0, 1], [0])
    with pytest.raises(BadClass):
        confusion_matrix([0, 4], [0, 1])
    with pytest.raises(EmptyMatrix):
        classification_report(np.zeros((4, 4)))


def _report(name, acc_num):
    cm = np.zeros((4, 4), dtype=np.int64)
    cm[0, 0] = acc_num
    cm[0, 1] = 4 - acc_num
    return RunReport(name, {}, "fp", classification_report(cm), cm)


def test_single_report_single_row():
    assert comparison_table([_report("knn", 3)]) == [("knn", 0.75)]


def test_table_orders_and_keeps_ties_stable():
    rows = comparison_table([_report("a", 2), _report("b", 3), _report("c", 2), _report("d", 4)])
    assert rows == [("d", 1.0), ("b", 0.75), ("a", 0.5), ("c", 0.5)]
    assert table_csv(rows).splitlines()[1] == "d,1.0"
    assert "75.00%" in table_text(rows)


def test_run_report_json_round_trip():
    r = _report("tree", 3)
    back = RunReport.from_json(r.to_json())
    assert back.accuracy == r.accuracy and np.array_equal(back.confusion, r.confusion)


def test_fingerprint_is_stable_and_sensitive():
    a = np.arange(5)
    assert fingerprint(a) == fingerprint(a.copy())
    assert fingerprint(a) != fingerprint(a + 1)
