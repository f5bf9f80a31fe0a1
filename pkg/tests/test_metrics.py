import math

import numpy as np
import pytest
from scipy.stats import wasserstein_distance

from fedimb.diffnet import Dense, Network
from fedimb.metrics import (
    ConfusionMatrix,
    accuracy,
    auc,
    auc_trapezoid,
    confusion,
    empirical_wasserstein_1d,
    evaluate,
    g_mean,
    mean_report_values,
    report_from_scores,
    reports_from_csv,
    reports_to_csv,
    sensitivity,
    specificity,
)
from fedimb.dataio import LabeledDataset


def test_confusion_by_definition():
    assert confusion([1, 1, 0, 0], [1, 0, 0, 1]) == ConfusionMatrix(tp=1, tn=1, fp=1, fn=1)


def test_confusion_perfect():
    y = np.random.default_rng(0).integers(0, 2, size=50)
    cm = confusion(y, y)
    assert cm.fp == 0 and cm.fn == 0 and cm.total == 50


def test_confusion_rejects_bad_input():
    with pytest.raises(ValueError):
        confusion([0, 1, 2], [0, 1, 1])
    with pytest.raises(ValueError):
        confusion([0, 1], [0, 1, 1])


def test_rates():
    assert sensitivity(ConfusionMatrix(1, 0, 0, 1)) == 0.5
    assert specificity(ConfusionMatrix(0, 5, 0, 0)) == 1.0
    assert sensitivity(ConfusionMatrix(0, 3, 1, 0)) is None


def test_g_mean_values():
    assert g_mean(ConfusionMatrix(4, 6, 0, 0)) == 1.0
    # sens 0.9, spec 0.4
    assert g_mean(ConfusionMatrix(9, 4, 6, 1)) == pytest.approx(0.6, abs=1e-15)
    assert g_mean(ConfusionMatrix(0, 7, 2, 5)) == 0.0


def test_auc_examples():
    assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == 0.5
    assert auc([0.2, 0.4], [1, 1]) is None


def test_auc_matches_trapezoid_roc():
    rng = np.random.default_rng(1)
    for _ in range(20):
        y = rng.integers(0, 2, size=40)
        y[:2] = (0, 1)
        s = rng.integers(0, 8, size=40) / 7.0
        assert auc(s, y) == pytest.approx(auc_trapezoid(s, y), abs=1e-12)


def _net(fn_bias, weight=0.0):
    layer = Dense(1, 1, "sigmoid")
    layer.weights.value = np.array([[weight]])
    layer.bias.value = np.array([[fn_bias]])
    return Network([layer])


def test_oracle_scores_give_perfect_report():
    y = np.array([0, 1, 1, 0, 1])
    rep = report_from_scores(np.where(y == 1, 1.0, 0.0), y)
    assert (rep.accuracy, rep.auc, rep.g_mean) == (1.0, 1.0, 1.0)
    assert rep.loss < 1e-6


def test_constant_half_classifier_predicts_positive_at_threshold():
    data = LabeledDataset(np.zeros((6, 1)), [0, 1, 0, 1, 0, 1])
    rep = evaluate(_net(0.0), data)
    assert rep.confusion == ConfusionMatrix(tp=3, tn=0, fp=3, fn=0)
    assert rep.accuracy == 0.5 and rep.auc == 0.5


def test_report_matches_standalone_ops():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(60, 1))
    y = (x[:, 0] + rng.normal(0, 0.8, size=60) > 0).astype(int)
    net = _net(0.1, 1.7)
    rep = evaluate(net, LabeledDataset(x, y))
    p = 1 / (1 + np.exp(-(1.7 * x[:, 0] + 0.1)))
    cm = confusion(y, (p >= 0.5).astype(int))
    assert rep.confusion == cm
    assert rep.accuracy == accuracy(cm) and rep.g_mean == g_mean(cm)
    assert rep.auc == pytest.approx(auc(p, y), abs=1e-12)
    assert rep.loss == pytest.approx(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)), rel=1e-12)


def test_report_csv_round_trip():
    rng = np.random.default_rng(4)
    reps = []
    for i in range(3):
        y = rng.integers(0, 2, size=20)
        if i == 2:
            y[:] = 0  # undefined auc and sensitivity
        reps.append(("global", "", i + 1, report_from_scores(rng.uniform(size=20), y)))
    back = reports_from_csv(reports_to_csv(reps))
    assert [r[3] for r in back] == [r[3] for r in reps]


def test_mean_report_values_skips_undefined():
    a = report_from_scores([0.2, 0.9], [0, 1])
    b = report_from_scores([0.2, 0.9], [0, 0])
    m = mean_report_values([a, b])
    assert m["auc"] == 1.0
    assert m["accuracy"] == pytest.approx((a.accuracy + b.accuracy) / 2)


# --- wasserstein ---------------------------------------------------------------------


def test_w1_examples():
    assert empirical_wasserstein_1d([0.3, 0.1], [0.1, 0.3]) == 0.0
    assert empirical_wasserstein_1d([0], [3]) == 3.0
    assert empirical_wasserstein_1d([0, 2], [1, 3]) == 1.0


def test_w1_matches_scipy():
    rng = np.random.default_rng(5)
    for _ in range(50):
        a = rng.normal(size=int(rng.integers(1, 40)))
        b = rng.normal(1.0, 2.0, size=int(rng.integers(1, 40)))
        assert empirical_wasserstein_1d(a, b) == pytest.approx(wasserstein_distance(a, b), rel=1e-12, abs=1e-14)


def test_w1_rejects_empty():
    with pytest.raises(ValueError):
        empirical_wasserstein_1d([], [1.0])


def test_sqrt_is_used_for_g_mean():
    cm = ConfusionMatrix(3, 5, 2, 4)
    assert g_mean(cm) == math.sqrt(sensitivity(cm) * specificity(cm))
