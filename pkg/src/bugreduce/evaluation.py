"""Triage metrics, order-prediction metrics and the Wilcoxon signed-rank test."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm, rankdata

from .corpus import Corpus


@dataclass(frozen=True)
class AccuracyCurve:
    """Top-k accuracy for k = 1..k_max, kept as exact counts."""

    correct: tuple[int, ...]
    total: int

    @property
    def k_max(self) -> int:
        return len(self.correct)

    @property
    def values(self) -> list[float]:
        return [c / self.total for c in self.correct]

    def at(self, k: int) -> float:
        return self.correct[k - 1] / self.total


def accuracy_curve(recommendations: Sequence[Sequence[str]], truths: Sequence[str], k_max: int) -> AccuracyCurve:
    if len(recommendations) != len(truths):
        raise ValueError("recommendations and truths differ in length")
    if not truths:
        raise ValueError("empty test set")
    hits_at = np.zeros(k_max + 1, dtype=np.int64)
    for recs, truth in zip(recommendations, truths):
        recs = list(recs)[:k_max]
        if truth in recs:
            hits_at[recs.index(truth) + 1] += 1
    return AccuracyCurve(tuple(int(v) for v in np.cumsum(hits_at)[1:]), len(truths))


def accuracy_at_k(recommendations: Sequence[Sequence[str]], truths: Sequence[str], k: int) -> float:
    """Share of reports whose true developer is among the first ``k`` recommendations."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return accuracy_curve(recommendations, truths, k).at(k)


def loss_k(origin_acc: float, reduced_acc: float) -> float:
    """Relative accuracy loss; negative when the reduced data does better."""
    if origin_acc == 0:
        raise ValueError("origin accuracy is zero; loss undefined")
    return (origin_acc - reduced_acc) / origin_acc


def f1(precision: float, recall: float) -> float:
    return 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class ClassMetrics:
    classes: tuple[str, ...]
    confusion: np.ndarray  # rows = true class, columns = predicted
    precision: dict[str, float]
    recall: dict[str, float]
    f1: dict[str, float]
    accuracy: float


def class_metrics(confusion, classes: Sequence[str] | None = None) -> ClassMetrics:
    """Per-class precision/recall/F1 and overall accuracy from a confusion matrix."""
    C = np.asarray(confusion, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("confusion matrix must be square")
    if (C < 0).any():
        raise ValueError("confusion counts must be non-negative")
    classes = tuple(classes) if classes is not None else tuple(str(i) for i in range(C.shape[0]))
    prec, rec, f = {}, {}, {}
    for i, c in enumerate(classes):
        tp = C[i, i]
        col, row = C[:, i].sum(), C[i, :].sum()
        prec[c] = tp / col if col else 0.0
        rec[c] = tp / row if row else 0.0
        f[c] = f1(prec[c], rec[c])
    total = C.sum()
    acc = float(np.trace(C) / total) if total else 0.0
    return ClassMetrics(classes, C, prec, rec, f, acc)


def confusion_matrix(truth: Sequence, predicted: Sequence, classes: Sequence) -> np.ndarray:
    index = {c: i for i, c in enumerate(classes)}
    C = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(truth, predicted):
        C[index[t], index[p]] += 1
    return C


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank

EXACT_MAX_N = 12


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    pvalue: float
    n: int
    method: str
    w_plus: float


def wilcoxon_signed_rank(x, y=None, alternative: str = "two-sided") -> WilcoxonResult:
    """Signed-rank test on paired samples (or on differences if ``y`` is None).

    Zero differences are dropped and tied magnitudes get average ranks. For
    n <= 12 the null distribution is enumerated over all 2^n sign vectors;
    above that a normal approximation with tie and continuity corrections is
    used. The reported statistic is min(W+, W-) for the two-sided test and
    W+ otherwise.
    """
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError(f"unknown alternative {alternative!r}")
    x = np.asarray(x, dtype=float)
    if y is None and x.ndim == 2:
        d = x[:, 0] - x[:, 1]
    elif y is None:
        d = x
    else:
        d = x - np.asarray(y, dtype=float)
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise ValueError("degenerate sample: all differences are zero")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    stat = min(w_plus, w_minus) if alternative == "two-sided" else w_plus

    if n <= EXACT_MAX_N:
        # average ranks are multiples of 1/2, so doubled ranks are exact integers
        twice = np.rint(2 * ranks).astype(np.int64)
        signs = (np.arange(2 ** n)[:, None] >> np.arange(n)[None, :]) & 1
        dist = signs @ twice
        obs = int(round(2 * w_plus))
        p_ge = float(np.mean(dist >= obs))
        p_le = float(np.mean(dist <= obs))
        method = "exact"
    else:
        mean = n * (n + 1) / 4.0
        ties = Counter(ranks.tolist()).values()
        var = n * (n + 1) * (2 * n + 1) / 24.0 - sum(t ** 3 - t for t in ties) / 48.0
        sd = math.sqrt(var)
        p_ge = float(norm.sf((w_plus - mean - 0.5) / sd))
        p_le = float(norm.cdf((w_plus - mean + 0.5) / sd))
        method = "normal"
    if alternative == "greater":
        p = p_ge
    elif alternative == "less":
        p = p_le
    else:
        p = min(1.0, 2.0 * min(p_ge, p_le))
    return WilcoxonResult(stat, p, n, method, w_plus)


# ---------------------------------------------------------------------------

def top_s_developer_subset(corpus: Corpus, s: int) -> Corpus:
    """Documents of the ``s`` developers with the most reports (ties by id)."""
    if s < 2:
        raise ValueError("s must be >= 2")
    counts = Counter(corpus.labels)
    if s >= len(counts):
        return corpus
    top = {d for d, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:s]}
    return corpus.subset_docs([i for i, l in enumerate(corpus.labels) if l in top])

