"""Two-sample tests and rank statistics used for condition comparisons and AUC."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    z_or_df: float


def _ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties given their average rank."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    ranks = np.empty(len(values), dtype=float)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _norm_sf(z: float) -> float:
    return 0.5 * special.erfc(z / math.sqrt(2.0))


def mann_whitney_u(x, y, continuity: bool = True) -> TestResult:
    """Two-sided Mann-Whitney U with the tie-corrected normal approximation.

    Returns U for the first sample, the p-value and the z score.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n1, n2 = len(x), len(y)
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be non-empty")
    ranks = _ranks(np.concatenate([x, y]))
    u1 = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    n = n1 + n2
    mu = n1 * n2 / 2.0
    _, counts = np.unique(np.concatenate([x, y]), return_counts=True)
    tie_term = float(((counts ** 3) - counts).sum())
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1))) if n > 1 else 0.0
    if var <= 0:
        return TestResult(u1, 1.0, 0.0)
    diff = u1 - mu
    if continuity:
        diff = math.copysign(max(abs(diff) - 0.5, 0.0), diff)
    z = diff / math.sqrt(var)
    p = min(1.0, 2.0 * _norm_sf(abs(z)))
    return TestResult(u1, p, z)


def welch_t(x, y) -> TestResult:
    """Welch's unequal-variance t test (two-sided).  Returns t, p and the Welch-Satterthwaite df."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or len(y) < 2:
        raise ValueError("each sample needs at least 2 values")
    vx, vy = x.var(ddof=1) / len(x), y.var(ddof=1) / len(y)
    se2 = vx + vy
    if se2 == 0:
        return TestResult(0.0, 1.0, float(len(x) + len(y) - 2))
    t = float((x.mean() - y.mean()) / math.sqrt(se2))
    df = float(se2 ** 2 / (vx ** 2 / (len(x) - 1) + vy ** 2 / (len(y) - 1)))
    # two-sided p via the regularized incomplete beta function
    p = float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TestResult(t, p, df)


class SingleClass(ValueError):
    pass


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve as the normalized Mann-Whitney statistic (ties count half)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both classes")
    ranks = _ranks(scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def recall(preds, labels) -> float:
    preds = np.asarray(preds).astype(int)
    labels = np.asarray(labels).astype(int)
    pos = labels == 1
    if not pos.any():
        raise SingleClass("recall needs at least one positive label")
    return float((preds[pos] == 1).mean())
