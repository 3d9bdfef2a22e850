import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps
from sklearn.metrics import roc_auc_score

from helpneed.stats import SingleClass, mann_whitney_u, recall, roc_auc, welch_t

X10 = [3.1, 4.5, 2.2, 5.0, 4.5, 3.3, 6.0, 2.9, 4.1, 3.8]
Y10 = [4.0, 5.2, 4.5, 6.1, 5.5, 3.9, 6.6, 5.0, 4.8, 5.9]


def _direct_u(x, y):
    """U by pair counting (ties count half) and its tie-corrected normal approximation."""
    u = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in x for b in y)
    n1, n2 = len(x), len(y)
    n = n1 + n2
    vals = list(x) + list(y)
    ties = sum(c ** 3 - c for c in (vals.count(v) for v in set(vals)))
    sd = math.sqrt(n1 * n2 / 12 * ((n + 1) - ties / (n * (n - 1))))
    z = (abs(u - n1 * n2 / 2) - 0.5) / sd * (1 if u >= n1 * n2 / 2 else -1)
    return u, z, math.erfc(abs(z) / math.sqrt(2))


def test_mann_whitney_direct_oracle():
    res = mann_whitney_u(X10, Y10)
    u, z, p = _direct_u(X10, Y10)
    assert res.statistic == pytest.approx(u, abs=1e-12)
    assert res.z_or_df == pytest.approx(z, abs=1e-12)
    assert res.p_value == pytest.approx(p, abs=1e-12)


def test_mann_whitney_matches_scipy():
    ref = sps.mannwhitneyu(X10, Y10, alternative="two-sided", method="asymptotic")
    res = mann_whitney_u(X10, Y10)
    assert res.statistic == pytest.approx(ref.statistic)
    assert res.p_value == pytest.approx(ref.pvalue, rel=1e-10)


def test_welch_direct_oracle():
    x, y = np.array(X10), np.array(Y10)
    vx, vy = x.var(ddof=1) / 10, y.var(ddof=1) / 10
    t = (x.mean() - y.mean()) / math.sqrt(vx + vy)
    df = (vx + vy) ** 2 / (vx ** 2 / 9 + vy ** 2 / 9)
    res = welch_t(X10, Y10)
    assert res.statistic == pytest.approx(t, abs=1e-12)
    assert res.z_or_df == pytest.approx(df, abs=1e-10)
    assert res.p_value == pytest.approx(2 * sps.t.sf(abs(t), df), rel=1e-10)


samples = st.lists(st.integers(0, 20).map(float), min_size=2, max_size=25)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@given(samples, samples)
def test_tests_agree_with_scipy(x, y):
    mw = mann_whitney_u(x, y)
    ref = sps.mannwhitneyu(x, y, alternative="two-sided", method="asymptotic")
    assert mw.statistic == pytest.approx(ref.statistic)
    if not math.isnan(ref.pvalue):
        assert mw.p_value == pytest.approx(ref.pvalue, rel=1e-8, abs=1e-12)
    if np.var(x) + np.var(y) > 0:
        wt = welch_t(x, y)
        ref_t = sps.ttest_ind(x, y, equal_var=False)
        assert wt.statistic == pytest.approx(ref_t.statistic, rel=1e-9, abs=1e-12)
        assert wt.p_value == pytest.approx(ref_t.pvalue, rel=1e-8, abs=1e-12)


def test_identical_samples_show_no_effect():
    res = mann_whitney_u(X10, X10)
    assert res.p_value == 1.0
    assert welch_t(X10, X10).statistic == 0.0


def test_auc_examples():
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 20_000)
    assert abs(roc_auc(rng.random(20_000), y) - 0.5) < 0.05
    with pytest.raises(SingleClass):
        roc_auc([0.1, 0.2], [1, 1])


@given(st.lists(st.tuples(st.integers(0, 5), st.booleans()), min_size=2, max_size=40))
def test_auc_matches_sklearn(pairs):
    scores = [s for s, _ in pairs]
    labels = [int(b) for _, b in pairs]
    if len(set(labels)) < 2:
        return
    assert roc_auc(scores, labels) == pytest.approx(roc_auc_score(labels, scores), abs=1e-12)


def test_recall():
    assert recall([1, 0, 1], [1, 0, 1]) == 1.0
    assert recall([0, 0, 1], [1, 0, 1]) == 0.5
    with pytest.raises(SingleClass):
        recall([0, 1], [0, 0])
