"""Developer recommenders: multinomial Naive Bayes, cosine KNN, linear SVM.

Every model scores all classes for a document and ``recommend`` turns the
scores into a ranked top-k developer list. Ties are broken by class id
(developers sorted lexicographically) so rankings replay exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .corpus import Corpus
from .parallel import parallel_map

MODEL_FORMAT = "bugreduce-model"
MODEL_VERSION = 1


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class RecommendationList:
    entries: tuple[tuple[str, float], ...]

    @property
    def developers(self) -> list[str]:
        return [d for d, _ in self.entries]

    def __len__(self):
        return len(self.entries)


class TriageModel:
    """Base class; subclasses implement ``decision_scores``."""

    kind = ""

    def __init__(self, classes: Sequence[str], vocabulary: Sequence[str]):
        self.classes = list(classes)
        self.vocabulary = list(vocabulary)
        self.class_index = {c: i for i, c in enumerate(self.classes)}

    def decision_scores(self, X: sp.csr_matrix) -> np.ndarray:
        """Per-class scores for each row of ``X`` (columns = model vocabulary)."""
        raise NotImplementedError

    def _params(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": self.kind,
            "classes": self.classes,
            "vocabulary": self.vocabulary,
            "params": self._params(),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n", encoding="utf-8")


class NaiveBayesModel(TriageModel):
    kind = "NaiveBayes"

    def __init__(self, classes, vocabulary, log_prior, log_likelihood):
        super().__init__(classes, vocabulary)
        self.log_prior = np.asarray(log_prior, dtype=float)
        self.log_likelihood = np.asarray(log_likelihood, dtype=float).reshape(len(self.classes), len(self.vocabulary))

    def decision_scores(self, X):
        X = sp.csr_matrix(X, dtype=float)
        return np.asarray(X @ self.log_likelihood.T) + self.log_prior

    def posteriors(self, X) -> np.ndarray:
        s = self.decision_scores(X)
        s = s - s.max(axis=1, keepdims=True)
        p = np.exp(s)
        return p / p.sum(axis=1, keepdims=True)

    def _params(self):
        return {"log_prior": self.log_prior.tolist(), "log_likelihood": self.log_likelihood.tolist()}


class KNNModel(TriageModel):
    kind = "KNN"

    def __init__(self, classes, vocabulary, train_matrix, train_classes, neighbors):
        super().__init__(classes, vocabulary)
        self.train_matrix = _l2_normalize(sp.csr_matrix(train_matrix, dtype=float))
        self.train_classes = np.asarray(train_classes, dtype=np.int64)
        self.neighbors = int(neighbors)

    def decision_scores(self, X):
        Q = _l2_normalize(sp.csr_matrix(X, dtype=float))
        # rounding lets mathematically equal similarities tie on index
        sims = np.round(np.asarray((Q @ self.train_matrix.T).todense()), SIM_DECIMALS)
        m = sims.shape[1]
        k = min(self.neighbors, m)
        out = np.zeros((sims.shape[0], len(self.classes)))
        idx = np.arange(m)
        for r in range(sims.shape[0]):
            order = np.lexsort((idx, -sims[r]))[:k]
            np.add.at(out[r], self.train_classes[order], sims[r, order])
        return out

    def _params(self):
        m = self.train_matrix
        return {
            "neighbors": self.neighbors,
            "train_classes": self.train_classes.tolist(),
            "indptr": m.indptr.tolist(),
            "indices": m.indices.tolist(),
            "data": m.data.tolist(),
        }


class LinearSVMModel(TriageModel):
    kind = "LinearSVM"

    def __init__(self, classes, vocabulary, weights, bias):
        super().__init__(classes, vocabulary)
        self.weights = np.asarray(weights, dtype=float).reshape(len(self.classes), len(self.vocabulary))
        self.bias = np.asarray(bias, dtype=float)

    def decision_scores(self, X):
        Xn = _l2_normalize(sp.csr_matrix(X, dtype=float))
        return np.asarray(Xn @ self.weights.T) + self.bias

    def _params(self):
        return {"weights": self.weights.tolist(), "bias": self.bias.tolist()}


SIM_DECIMALS = 12


def _l2_normalize(X: sp.csr_matrix) -> sp.csr_matrix:
    X = sp.csr_matrix(X, dtype=float, copy=True)
    norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    norms[norms == 0] = 1.0
    return sp.csr_matrix(sp.diags(1.0 / norms) @ X)


def _class_ids(labels: Sequence[str]) -> tuple[list[str], np.ndarray]:
    classes = sorted(set(labels))
    index = {c: i for i, c in enumerate(classes)}
    return classes, np.array([index[l] for l in labels], dtype=np.int64)


# ---------------------------------------------------------------------------
# training

def train_naive_bayes(train: Corpus, smoothing: float = 1.0) -> NaiveBayesModel:
    """Multinomial NB with additive smoothing; prior = class document share."""
    if train.n_docs == 0:
        raise TrainingError("empty training set")
    if smoothing <= 0:
        raise ValueError("smoothing must be positive")
    classes, y = _class_ids(train.labels)
    n_classes, n_words = len(classes), train.n_words
    indicator = sp.csr_matrix((np.ones(len(y)), (y, np.arange(len(y)))), shape=(n_classes, len(y)))
    counts = np.asarray((indicator @ train.matrix.astype(float)).todense())
    totals = counts.sum(axis=1, keepdims=True)
    log_lik = np.log(counts + smoothing) - np.log(totals + smoothing * n_words)
    prior = np.bincount(y, minlength=n_classes) / len(y)
    return NaiveBayesModel(classes, train.vocabulary, np.log(prior), log_lik)


def train_knn(train: Corpus, neighbors: int = 10) -> KNNModel:
    """Lazy cosine KNN; neighbor count is clamped to the training size."""
    if neighbors < 1:
        raise ValueError("neighbors must be >= 1")
    if train.n_docs == 0:
        raise TrainingError("empty training set")
    classes, y = _class_ids(train.labels)
    return KNNModel(classes, train.vocabulary, train.matrix, y, min(neighbors, train.n_docs))


def _pegasos(X: sp.csr_matrix, target: np.ndarray, reg: float, epochs: int, seed: int) -> tuple[np.ndarray, float]:
    """Hinge-loss SGD (Pegasos step size 1/(reg*t)) on rows of X plus a bias column.

    ``w = scale * v`` keeps the per-step shrinkage O(1).
    """
    m, n = X.shape
    rng = np.random.default_rng(seed)
    v = np.zeros(n)
    vb = 0.0
    scale = 1.0
    indptr, indices, data = X.indptr, X.indices, X.data
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(m):
            t += 1
            eta = 1.0 / (reg * t)
            cols = indices[indptr[i]:indptr[i + 1]]
            vals = data[indptr[i]:indptr[i + 1]]
            margin = target[i] * scale * (v[cols] @ vals + vb)
            shrink = 1.0 - eta * reg
            if shrink <= 0.0:
                v[:] = 0.0
                vb = 0.0
                scale = 1.0
            else:
                scale *= shrink
            if margin < 1.0:
                step = eta * target[i] / scale
                v[cols] += step * vals
                vb += step
    return scale * v, scale * vb


def train_linear_svm(
    train: Corpus, reg: float = 1e-4, epochs: int = 10, seed: int = 0, threads: int = 1
) -> LinearSVMModel:
    """One-vs-rest linear SVMs on L2-normalized documents.

    Class ``c`` is trained with seed ``seed + c``, so the result does not
    depend on ``threads``.
    """
    classes, y = _class_ids(train.labels)
    if len(classes) < 2:
        raise TrainingError("degenerate training set: linear SVM needs at least 2 classes")
    X = _l2_normalize(train.matrix)

    def fit(c):
        target = np.where(y == c, 1.0, -1.0)
        return _pegasos(X, target, reg, epochs, seed + c)

    fitted = parallel_map(fit, range(len(classes)), threads)
    weights = np.vstack([w for w, _ in fitted])
    bias = np.array([b for _, b in fitted])
    return LinearSVMModel(classes, train.vocabulary, weights, bias)


def train_classifier(kind: str, train: Corpus, seed: int = 0, **options) -> TriageModel:
    kind = CLASSIFIER_ALIASES.get(kind.lower(), kind)
    if kind == "NaiveBayes":
        return train_naive_bayes(train, **options)
    if kind == "KNN":
        return train_knn(train, **options)
    if kind == "LinearSVM":
        return train_linear_svm(train, seed=seed, **options)
    raise ValueError(f"unknown classifier {kind!r}")


CLASSIFIER_ALIASES = {
    "nb": "NaiveBayes",
    "naivebayes": "NaiveBayes",
    "naive_bayes": "NaiveBayes",
    "knn": "KNN",
    "svm": "LinearSVM",
    "linearsvm": "LinearSVM",
    "linear_svm": "LinearSVM",
}


# ---------------------------------------------------------------------------
# ranking

def _rank_row(scores: np.ndarray, k: int) -> np.ndarray:
    order = np.lexsort((np.arange(len(scores)), -scores))
    return order[:k]


def recommend(model: TriageModel, document, k: int) -> RecommendationList:
    """Top-k developers for one document (a 1 x |model vocabulary| sparse row)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    row = sp.csr_matrix(document)
    if row.shape[0] != 1 or row.shape[1] != len(model.vocabulary):
        raise ValueError(f"document must be a 1 x {len(model.vocabulary)} row, got {row.shape}")
    scores = model.decision_scores(row)[0]
    top = _rank_row(scores, k)
    return RecommendationList(tuple((model.classes[i], float(scores[i])) for i in top))


def recommend_corpus(model: TriageModel, test: Corpus, k: int) -> list[list[str]]:
    """Top-k developer lists for every document of ``test`` (any vocabulary)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    X = test.project(model.vocabulary).matrix if test.vocabulary != model.vocabulary else test.matrix
    scores = model.decision_scores(X)
    return [[model.classes[i] for i in _rank_row(row, k)] for row in scores]


# ---------------------------------------------------------------------------
# persistence

def model_from_dict(obj: dict) -> TriageModel:
    if obj.get("format") != MODEL_FORMAT or obj.get("version") != MODEL_VERSION:
        raise ValueError(
            f"expected {MODEL_FORMAT} v{MODEL_VERSION}, got {obj.get('format')!r} v{obj.get('version')!r}"
        )
    kind, p = obj["kind"], obj["params"]
    classes, vocab = obj["classes"], obj["vocabulary"]
    if kind == "NaiveBayes":
        return NaiveBayesModel(classes, vocab, p["log_prior"], p["log_likelihood"])
    if kind == "KNN":
        mat = sp.csr_matrix(
            (np.array(p["data"], dtype=float), np.array(p["indices"], dtype=np.int64), np.array(p["indptr"], dtype=np.int64)),
            shape=(len(p["train_classes"]), len(vocab)),
        )
        model = KNNModel(classes, vocab, mat, p["train_classes"], p["neighbors"])
        model.train_matrix = mat  # already normalized when saved
        return model
    if kind == "LinearSVM":
        return LinearSVMModel(classes, vocab, p["weights"], p["bias"])
    raise ValueError(f"unknown model kind {kind!r}")


def load_model(path: str | Path) -> TriageModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
