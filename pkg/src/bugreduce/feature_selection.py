"""Word scoring (IG, CH, SU, Relief-F) and top-n_F word selection."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO

import numpy as np
import scipy.sparse as sp

from .corpus import Corpus
from .parallel import parallel_map

FS_ALGORITHMS = ("IG", "CH", "SU", "RF")


@dataclass(frozen=True)
class WordScores:
    algorithm: str
    scores: np.ndarray

    def ranking(self) -> np.ndarray:
        """Column ids by descending score, ties by ascending column id."""
        return np.lexsort((np.arange(len(self.scores)), -self.scores))


@dataclass
class FeatureAudit:
    removed_words: list[str] = field(default_factory=list)
    blank_reports: list[int] = field(default_factory=list)


def _entropy(p: np.ndarray, axis=-1) -> np.ndarray:
    """Base-2 Shannon entropy along ``axis`` with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return terms.sum(axis=axis)


def contingency(train: Corpus) -> tuple[np.ndarray, np.ndarray, int]:
    """Document-presence counts.

    Returns ``A`` (words x classes: documents of the class containing the
    word), the per-class document counts and the number of documents.
    """
    classes = sorted(set(train.labels))
    index = {c: i for i, c in enumerate(classes)}
    y = np.array([index[l] for l in train.labels], dtype=np.int64)
    presence = (train.matrix > 0).astype(float)
    onehot = sp.csr_matrix((np.ones(len(y)), (np.arange(len(y)), y)), shape=(len(y), len(classes)))
    A = np.asarray((presence.T @ onehot).todense())
    class_counts = np.bincount(y, minlength=len(classes)).astype(float)
    return A, class_counts, train.n_docs


def _ig_parts(train: Corpus):
    A, nc, N = contingency(train)
    df = A.sum(axis=1)
    h_c = float(_entropy(nc / N))
    absent = nc[None, :] - A
    n_abs = N - df
    with np.errstate(divide="ignore", invalid="ignore"):
        p_given_t = np.where(df[:, None] > 0, A / np.where(df > 0, df, 1)[:, None], 0.0)
        p_given_not = np.where(n_abs[:, None] > 0, absent / np.where(n_abs > 0, n_abs, 1)[:, None], 0.0)
    cond = (df / N) * _entropy(p_given_t) + (n_abs / N) * _entropy(p_given_not)
    ig = np.maximum(h_c - cond, 0.0)
    h_t = _entropy(np.stack([df / N, n_abs / N], axis=1))
    return ig, h_c, h_t


def score_ig(train: Corpus) -> WordScores:
    ig, _, _ = _ig_parts(train)
    return WordScores("IG", ig)


def score_chi2(train: Corpus) -> WordScores:
    """Max over classes of the 2x2 chi-square statistic; zero marginals score 0."""
    A, nc, N = contingency(train)
    df = A.sum(axis=1, keepdims=True)
    B = df - A
    C = nc[None, :] - A
    D = N - A - B - C
    denom = (A + C) * (B + D) * (A + B) * (C + D)
    with np.errstate(divide="ignore", invalid="ignore"):
        chi = np.where(denom > 0, N * (A * D - C * B) ** 2 / np.where(denom > 0, denom, 1.0), 0.0)
    scores = chi.max(axis=1) if chi.shape[1] else np.zeros(train.n_words)
    return WordScores("CH", scores)


def score_su(train: Corpus) -> WordScores:
    ig, h_c, h_t = _ig_parts(train)
    denom = h_t + h_c
    with np.errstate(divide="ignore", invalid="ignore"):
        su = np.where(denom > 0, 2.0 * ig / np.where(denom > 0, denom, 1.0), 0.0)
    return WordScores("SU", np.clip(su, 0.0, 1.0))


def score_relief_f(
    train: Corpus,
    neighbors: int = 5,
    samples: int | None = None,
    seed: int = 0,
    threads: int = 1,
) -> WordScores:
    """Relief-F with Manhattan distance on min-max normalized frequencies.

    ``samples`` anchors are drawn without replacement (default
    ``min(500, m)``). Hit and miss sets are clamped to the available class
    members; each set contributes its mean difference. Per-anchor updates
    are summed in anchor order so threading never changes the result.
    """
    m, n = train.matrix.shape
    classes = sorted(set(train.labels))
    if len(classes) < 2 or m == 0:
        return WordScores("RF", np.zeros(n))
    index = {c: i for i, c in enumerate(classes)}
    y = np.array([index[l] for l in train.labels], dtype=np.int64)
    prior = np.bincount(y, minlength=len(classes)) / m

    X = train.matrix.toarray().astype(float)
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = hi - lo
    span[span == 0] = 1.0
    X = (X - lo) / span

    samples = min(500, m) if samples is None else min(samples, m)
    rng = np.random.default_rng(seed)
    anchors = rng.choice(m, size=samples, replace=False)
    idx = np.arange(m)

    def contribution(a: int) -> np.ndarray:
        diff = np.abs(X - X[a])
        dist = diff.sum(axis=1)
        order = np.lexsort((idx, dist))
        order = order[order != a]
        ca = y[a]
        delta = np.zeros(n)
        hits = order[y[order] == ca][:neighbors]
        if len(hits):
            delta -= diff[hits].sum(axis=0) / len(hits)
        for c in range(len(classes)):
            if c == ca:
                continue
            misses = order[y[order] == c][:neighbors]
            if len(misses):
                delta += prior[c] / (1.0 - prior[ca]) * diff[misses].sum(axis=0) / len(misses)
        return delta

    weights = np.zeros(n)
    for delta in parallel_map(contribution, anchors.tolist(), threads):
        weights += delta
    return WordScores("RF", weights / samples)


def score_words(train: Corpus, algorithm: str, seed: int = 0, threads: int = 1, **options) -> WordScores:
    algorithm = algorithm.upper()
    if algorithm == "IG":
        return score_ig(train)
    if algorithm == "CH":
        return score_chi2(train)
    if algorithm == "SU":
        return score_su(train)
    if algorithm == "RF":
        return score_relief_f(train, seed=seed, threads=threads, **options)
    raise ValueError(f"unknown feature selection algorithm {algorithm!r}; expected one of {FS_ALGORITHMS}")


def select_top_words(train: Corpus, scores: WordScores, n_F: int) -> tuple[Corpus, FeatureAudit]:
    """Keep the ``n_F`` best words (original column order) and drop blank reports."""
    if not 1 <= n_F <= train.n_words:
        raise ValueError(f"n_F must lie in [1, {train.n_words}], got {n_F}")
    if len(scores.scores) != train.n_words:
        raise ValueError("scores do not match the corpus vocabulary")
    ranking = scores.ranking()
    kept = np.sort(ranking[:n_F])
    dropped = np.sort(ranking[n_F:])
    reduced, blanks = train.subset_words(kept).drop_blank()
    return reduced, FeatureAudit([train.vocabulary[j] for j in dropped], blanks)


def write_scores(fh: IO[str], corpus: Corpus, scores: WordScores) -> None:
    """CSV of (word, score, rank) in rank order; rank starts at 1."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["word", "score", "rank"])
    for rank, j in enumerate(scores.ranking(), start=1):
        writer.writerow([corpus.vocabulary[j], repr(float(scores.scores[j])), rank])
