"""Predicting the better reduction order from dataset-level attributes.

A bug dataset is summarised by 18 attributes (ten about the reports, eight
about the developers). Labelled datasets train a C4.5 tree or an AdaBoost.M1
ensemble of C4.5 trees that chooses between FS->IS and IS->FS.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from collections import Counter
from dataclasses import astuple, dataclass, field
from pathlib import Path
from typing import IO, Sequence

import numpy as np
from scipy.stats import norm

from .corpus import Corpus, chronological_split
from .evaluation import ClassMetrics, class_metrics, confusion_matrix
from .parallel import parallel_map
from .pipeline import FS_THEN_IS, IS_THEN_FS, OrderComparison, ReductionPlan, compare_orders

# tie-break priority: the first class wins ties everywhere
ORDER_CLASSES = (IS_THEN_FS, FS_THEN_IS)
ORDER_MODEL_FORMAT = "bugreduce-order-model"
ORDER_MODEL_VERSION = 1

ATTRIBUTE_NAMES = {
    "B1": "# Bug reports",
    "B2": "# Words",
    "B3": "Length of bug reports",
    "B4": "# Unique words",
    "B5": "Ratio of sparseness",
    "B6": "Entropy of severities",
    "B7": "Entropy of priorities",
    "B8": "Entropy of products",
    "B9": "Entropy of components",
    "B10": "Entropy of words",
    "D1": "# Fixers",
    "D2": "# Bug reports per fixer",
    "D3": "# Words per fixer",
    "D4": "# Reporters",
    "D5": "# Bug reports per reporter",
    "D6": "# Words per reporter",
    "D7": "# Bug reports by top 10% reporters",
    "D8": "Similarity between fixers and reporters",
}
ATTRIBUTE_KEYS = tuple(ATTRIBUTE_NAMES)


# ---------------------------------------------------------------------------
# attributes

@dataclass(frozen=True)
class DatasetAttributes:
    B1: float
    B2: float
    B3: float
    B4: float
    B5: float
    B6: float
    B7: float
    B8: float
    B9: float
    B10: float
    D1: float
    D2: float
    D3: float
    D4: float
    D5: float
    D6: float
    D7: float
    D8: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values) -> "DatasetAttributes":
        return cls(*(float(v) for v in values))


def entropy(values: Sequence) -> float:
    """Base-2 Shannon entropy of the empirical distribution of ``values``."""
    counts = np.array(list(Counter(values).values()), dtype=float)
    if counts.sum() == 0:
        return 0.0
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum())


def _entropy_of_counts(counts: np.ndarray) -> float:
    counts = counts[counts > 0].astype(float)
    if counts.size == 0:
        return 0.0
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum())


def extract_attributes(dataset: Corpus) -> DatasetAttributes:
    if dataset.n_docs == 0:
        raise ValueError("cannot extract attributes from an empty dataset")
    X = dataset.matrix
    m, n = X.shape
    total_words = float(X.sum())
    nnz = float(X.nnz)
    fixers = set(dataset.labels)
    reporters = [meta.reporter for meta in dataset.meta]
    reporter_set = set(reporters)
    per_reporter = Counter(reporters)
    top = math.ceil(0.1 * len(per_reporter))
    ranked = sorted(per_reporter.items(), key=lambda kv: (-kv[1], kv[0]))[:top]
    d1, d4 = float(len(fixers)), float(len(reporter_set))
    return DatasetAttributes(
        B1=float(m),
        B2=float(n),
        B3=total_words / m,
        B4=nnz / m,
        B5=1.0 - nnz / (m * n) if n else 1.0,
        B6=entropy(meta.severity for meta in dataset.meta),
        B7=entropy(meta.priority for meta in dataset.meta),
        B8=entropy(meta.product for meta in dataset.meta),
        B9=entropy(meta.component for meta in dataset.meta),
        B10=_entropy_of_counts(np.asarray(X.sum(axis=0)).ravel()),
        D1=d1,
        D2=m / d1,
        D3=total_words / d1,
        D4=d4,
        D5=m / d4,
        D6=total_words / d4,
        D7=sum(c for _, c in ranked) / m,
        D8=len(fixers & reporter_set) / len(fixers | reporter_set),
    )


@dataclass(frozen=True)
class AttributeBounds:
    lo: np.ndarray
    hi: np.ndarray

    def apply(self, rows) -> np.ndarray:
        """Min-max scale with stored bounds, clamped to [0, 1]; constant columns map to 0."""
        R = _as_matrix(rows)
        span = self.hi - self.lo
        with np.errstate(divide="ignore", invalid="ignore"):
            scaled = np.where(span > 0, (R - self.lo) / np.where(span > 0, span, 1.0), 0.0)
        return np.clip(scaled, 0.0, 1.0)

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_dict(cls, obj) -> "AttributeBounds":
        return cls(np.asarray(obj["lo"], dtype=float), np.asarray(obj["hi"], dtype=float))


def _as_matrix(rows) -> np.ndarray:
    if isinstance(rows, DatasetAttributes):
        return rows.as_array()[None, :]
    rows = list(rows) if not isinstance(rows, np.ndarray) else rows
    if len(rows) and isinstance(rows[0], DatasetAttributes):
        return np.vstack([r.as_array() for r in rows])
    return np.atleast_2d(np.asarray(rows, dtype=float))


def normalize_attributes(rows) -> tuple[np.ndarray, AttributeBounds]:
    R = _as_matrix(rows)
    if R.shape[0] == 0:
        raise ValueError("need at least one row")
    bounds = AttributeBounds(R.min(axis=0), R.max(axis=0))
    return bounds.apply(R), bounds


# ---------------------------------------------------------------------------
# datasets from bug units

def split_bug_units(reports: Sequence, unit_size: int = 5000) -> list[list]:
    """Consecutive blocks of ``unit_size`` reports; the last block may be short."""
    if unit_size < 1:
        raise ValueError("unit_size must be >= 1")
    reports = list(reports)
    return [reports[i:i + unit_size] for i in range(0, len(reports), unit_size)]


def enumerate_windows(n_units: int, max_window: int) -> list[tuple[int, ...]]:
    """Unit-index tuples of every cyclic window of length 1..max_window."""
    if max_window < 1:
        raise ValueError("max_window must be >= 1")
    if max_window > n_units:
        raise ValueError(f"max_window={max_window} exceeds the number of units ({n_units})")
    return [tuple((s + j) % n_units for j in range(w)) for w in range(1, max_window + 1) for s in range(n_units)]


def enumerate_window_datasets(units: Sequence[Sequence], max_window: int) -> list[list]:
    return [[r for u in window for r in units[u]] for window in enumerate_windows(len(units), max_window)]


def label_from_winners(winners: Sequence[str]) -> str:
    """Order with more strict per-k wins; ties fall to IS->FS."""
    fs = sum(1 for w in winners if w == FS_THEN_IS)
    is_ = sum(1 for w in winners if w == IS_THEN_FS)
    return FS_THEN_IS if fs > is_ else IS_THEN_FS


def label_reduction_order(
    dataset: Corpus,
    fs: str = "CH",
    is_: str = "ICF",
    classifier: str = "nb",
    k_max: int = 5,
    word_rate: float = 0.30,
    bug_rate: float = 0.50,
    seed: int = 0,
) -> tuple[str, OrderComparison]:
    train, test = chronological_split(dataset, 0.8)
    plan = ReductionPlan(FS_THEN_IS, fs, is_, word_rate, bug_rate, seed)
    cmp = compare_orders(train, test, plan, classifier, k_max)
    return label_from_winners(cmp.winners), cmp


# ---------------------------------------------------------------------------
# C4.5

@dataclass
class Node:
    counts: np.ndarray  # weighted class totals at this node
    label: int
    attribute: int | None = None
    threshold: float | None = None
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.attribute is None

    def to_dict(self) -> dict:
        d = {"counts": self.counts.tolist(), "label": self.label}
        if not self.is_leaf:
            d.update(attribute=self.attribute, threshold=self.threshold, left=self.left.to_dict(), right=self.right.to_dict())
        return d

    @classmethod
    def from_dict(cls, d) -> "Node":
        node = cls(np.asarray(d["counts"], dtype=float), int(d["label"]))
        if "attribute" in d:
            node.attribute = int(d["attribute"])
            node.threshold = float(d["threshold"])
            node.left = cls.from_dict(d["left"])
            node.right = cls.from_dict(d["right"])
        return node


@dataclass
class DecisionTree:
    root: Node
    classes: tuple

    def predict_index(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(len(X), dtype=np.int64)
        for i, x in enumerate(X):
            node = self.root
            while not node.is_leaf:
                node = node.left if x[node.attribute] <= node.threshold else node.right
            out[i] = node.label
        return out

    def predict(self, X) -> list:
        return [self.classes[i] for i in self.predict_index(X)]

    def nodes_by_level(self, max_level: int) -> list[list[int]]:
        """Split attributes at each depth 0..max_level."""
        levels: list[list[int]] = [[] for _ in range(max_level + 1)]
        stack = [(self.root, 0)]
        while stack:
            node, depth = stack.pop()
            if node.is_leaf or depth > max_level:
                continue
            levels[depth].append(node.attribute)
            stack.append((node.right, depth + 1))
            stack.append((node.left, depth + 1))
        return levels

    def depth(self) -> int:
        def walk(n):
            return 0 if n.is_leaf else 1 + max(walk(n.left), walk(n.right))
        return walk(self.root)

    def to_dict(self) -> dict:
        return {"type": "c45", "classes": list(self.classes), "root": self.root.to_dict()}

    @classmethod
    def from_dict(cls, d) -> "DecisionTree":
        return cls(Node.from_dict(d["root"]), tuple(d["classes"]))


def _info(counts: np.ndarray) -> float:
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum())


def added_errors(N: float, e: float, cf: float = 0.25) -> float:
    """Extra errors predicted at confidence ``cf`` for a leaf with N cases and e errors.

    Upper confidence limit of the binomial error rate as used by C4.5's
    pessimistic pruning.
    """
    if N <= 0:
        return 0.0
    if e < 1e-6:
        return N * (1.0 - math.exp(math.log(cf) / N))
    if e < 0.9999:
        v0 = N * (1.0 - math.exp(math.log(cf) / N))
        return v0 + e * (added_errors(N, 1.0, cf) - v0)
    if e + 0.5 >= N:
        return 0.67 * (N - e)
    z = norm.ppf(1.0 - cf)
    coeff = z * z
    pr = (e + 0.5 + coeff / 2 + math.sqrt(coeff * ((e + 0.5) * (1 - (e + 0.5) / N) + coeff / 4))) / (N + coeff)
    return N * pr - e


def _best_threshold(x: np.ndarray, y: np.ndarray, w: np.ndarray, n_classes: int, min_leaf: float):
    """Best binary split of one attribute by information gain.

    Returns (gain, split_info, threshold) or None when no admissible split exists.
    """
    order = np.argsort(x, kind="stable")
    xs, ys, ws = x[order], y[order], w[order]
    onehot = np.zeros((len(xs), n_classes))
    onehot[np.arange(len(xs)), ys] = ws
    cum = np.cumsum(onehot, axis=0)
    total = cum[-1]
    W = total.sum()
    base = _info(total)
    best = None
    boundaries = np.flatnonzero(xs[1:] > xs[:-1])
    for b in boundaries:
        left = cum[b]
        right = total - left
        wl, wr = left.sum(), right.sum()
        if wl < min_leaf or wr < min_leaf:
            continue
        gain = base - (wl / W) * _info(left) - (wr / W) * _info(right)
        if best is None or gain > best[0] + 1e-12:
            split_info = _info(np.array([wl, wr]))
            best = (gain, split_info, (xs[b] + xs[b + 1]) / 2.0)
    return best


def _grow(X, y, w, n_classes, min_leaf, min_split) -> Node:
    counts = np.bincount(y, weights=w, minlength=n_classes).astype(float)
    node = Node(counts, int(np.argmax(counts)))
    W = counts.sum()
    if W < min_split or np.count_nonzero(counts) <= 1:
        return node
    candidates = []
    for a in range(X.shape[1]):
        res = _best_threshold(X[:, a], y, w, n_classes, min_leaf)
        if res is not None and res[0] > 1e-12:
            candidates.append((a, *res))
    if not candidates:
        return node
    avg_gain = sum(c[1] for c in candidates) / len(candidates)
    best = None
    for a, gain, split_info, thr in candidates:
        if gain < avg_gain - 1e-12 or split_info <= 0:
            continue
        ratio = gain / split_info
        if best is None or ratio > best[0] + 1e-12:
            best = (ratio, a, thr)
    if best is None:
        return node
    _, a, thr = best
    mask = X[:, a] <= thr
    node.attribute, node.threshold = a, float(thr)
    node.left = _grow(X[mask], y[mask], w[mask], n_classes, min_leaf, min_split)
    node.right = _grow(X[~mask], y[~mask], w[~mask], n_classes, min_leaf, min_split)
    return node


def _prune(node: Node, cf: float) -> float:
    """Collapse subtrees whose estimated error is no better than a leaf's; returns estimate."""
    N = node.counts.sum()
    e = N - node.counts[node.label]
    leaf_est = e + added_errors(N, e, cf)
    if node.is_leaf:
        return leaf_est
    subtree_est = _prune(node.left, cf) + _prune(node.right, cf)
    if leaf_est <= subtree_est + 0.1:
        node.attribute = node.threshold = node.left = node.right = None
        return leaf_est
    return subtree_est


def train_c45(
    X,
    y: Sequence,
    weights=None,
    classes: Sequence | None = None,
    min_leaf: float = 2.0,
    min_split: float = 2.0,
    confidence: float = 0.25,
    prune: bool = True,
) -> DecisionTree:
    """Binary-threshold C4.5 on continuous attributes with instance weights.

    ``classes`` fixes the class order; earlier classes win ties in leaf
    majorities. Each branch must carry at least ``min_leaf`` weight.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = list(y)
    if len(y) == 0:
        raise ValueError("need at least one row")
    classes = tuple(classes) if classes is not None else tuple(sorted(set(y)))
    index = {c: i for i, c in enumerate(classes)}
    yi = np.array([index[c] for c in y], dtype=np.int64)
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)
    if (w < 0).any() or w.sum() <= 0:
        raise ValueError("weights must be non-negative and not all zero")
    keep = w > 0
    root = _grow(X[keep], yi[keep], w[keep], len(classes), min_leaf, min_split)
    if prune:
        _prune(root, confidence)
    return DecisionTree(root, classes)


# ---------------------------------------------------------------------------
# AdaBoost.M1

MAX_VOTE = math.log((1 - 1e-10) / 1e-10)


@dataclass
class AdaBoostEnsemble:
    trees: list[DecisionTree]
    votes: list[float]
    variant: str
    classes: tuple
    errors: list[float] = field(default_factory=list)

    def vote_totals(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        totals = np.zeros((len(X), len(self.classes)))
        for tree, alpha in zip(self.trees, self.votes):
            totals[np.arange(len(X)), tree.predict_index(X)] += alpha
        return totals

    def predict_index(self, X) -> np.ndarray:
        return np.argmax(self.vote_totals(X), axis=1)

    def predict(self, X) -> list:
        return [self.classes[i] for i in self.predict_index(X)]

    def to_dict(self) -> dict:
        return {
            "type": "adaboost",
            "variant": self.variant,
            "classes": list(self.classes),
            "votes": self.votes,
            "errors": self.errors,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d) -> "AdaBoostEnsemble":
        return cls([DecisionTree.from_dict(t) for t in d["trees"]], list(d["votes"]), d["variant"],
                   tuple(d["classes"]), list(d.get("errors", [])))


def train_adaboost(
    X,
    y: Sequence,
    variant: str = "reweighting",
    rounds: int = 10,
    seed: int = 0,
    classes: Sequence | None = None,
    **tree_options,
) -> AdaBoostEnsemble:
    """AdaBoost.M1 with C4.5 base trees.

    ``reweighting`` hands the boosting weights (scaled to sum to the row
    count) to the tree learner; ``resampling`` trains each tree on a seeded
    weighted bootstrap. A round with weighted error >= 0.5 is discarded and
    the weights reset; a perfect round ends boosting with a capped vote.
    """
    if variant not in ("reweighting", "resampling"):
        raise ValueError(f"unknown AdaBoost variant {variant!r}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = list(y)
    classes = tuple(classes) if classes is not None else tuple(sorted(set(y)))
    index = {c: i for i, c in enumerate(classes)}
    yi = np.array([index[c] for c in y], dtype=np.int64)
    n = len(y)
    if n < 2 or len(set(yi.tolist())) < 2:
        raise ValueError("AdaBoost needs at least 2 rows and 2 classes")
    rng = np.random.default_rng(seed)
    w = np.full(n, 1.0 / n)
    ens = AdaBoostEnsemble([], [], variant, classes)
    for _ in range(rounds):
        if variant == "reweighting":
            tree = train_c45(X, y, w * n, classes=classes, **tree_options)
        else:
            sample = rng.choice(n, size=n, replace=True, p=w)
            tree = train_c45(X[sample], [y[i] for i in sample], classes=classes, **tree_options)
        wrong = tree.predict_index(X) != yi
        eps = float(w[wrong].sum())
        if eps >= 0.5:
            w = np.full(n, 1.0 / n)
            continue
        if eps <= 0.0:
            ens.trees.append(tree)
            ens.votes.append(MAX_VOTE)
            ens.errors.append(0.0)
            break
        beta = eps / (1.0 - eps)
        ens.trees.append(tree)
        ens.votes.append(math.log(1.0 / beta))
        ens.errors.append(eps)
        w = np.where(wrong, w, w * beta)
        w = w / w.sum()
    if not ens.trees:
        # every round failed; fall back to a single unboosted tree
        ens.trees.append(train_c45(X, y, classes=classes, **tree_options))
        ens.votes.append(1.0)
        ens.errors.append(float(np.mean(ens.trees[0].predict_index(X) != yi)))
    return ens


# ---------------------------------------------------------------------------
# order predictor

@dataclass
class OrderPredictor:
    model: DecisionTree | AdaBoostEnsemble
    bounds: AttributeBounds

    def predict(self, attrs: DatasetAttributes | Sequence[float]) -> str:
        return predict_order(self.model, self.bounds.apply(attrs)[0])

    def to_dict(self) -> dict:
        return {
            "format": ORDER_MODEL_FORMAT,
            "version": ORDER_MODEL_VERSION,
            "attributes": list(ATTRIBUTE_KEYS),
            "bounds": self.bounds.to_dict(),
            "model": self.model.to_dict(),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, d) -> "OrderPredictor":
        if d.get("format") != ORDER_MODEL_FORMAT or d.get("version") != ORDER_MODEL_VERSION:
            raise ValueError(
                f"expected {ORDER_MODEL_FORMAT} v{ORDER_MODEL_VERSION}, got {d.get('format')!r} v{d.get('version')!r}"
            )
        m = d["model"]
        model = DecisionTree.from_dict(m) if m["type"] == "c45" else AdaBoostEnsemble.from_dict(m)
        return cls(model, AttributeBounds.from_dict(d["bounds"]))

    @classmethod
    def load(cls, path: str | Path) -> "OrderPredictor":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def predict_order(model: DecisionTree | AdaBoostEnsemble, attrs) -> str:
    """Label for one normalized attribute vector; vote ties go to IS->FS."""
    x = np.asarray(attrs.as_array() if isinstance(attrs, DatasetAttributes) else attrs, dtype=float)[None, :]
    if isinstance(model, AdaBoostEnsemble):
        totals = model.vote_totals(x)[0]
        best = totals.max()
        tied = [model.classes[i] for i in np.flatnonzero(np.isclose(totals, best, rtol=0, atol=1e-12))]
        return IS_THEN_FS if len(tied) > 1 and IS_THEN_FS in tied else tied[0]
    return model.predict(x)[0]


@dataclass(frozen=True)
class ClassifierConfig:
    kind: str = "c45"  # "c45" or "adaboost"
    variant: str = "reweighting"
    rounds: int = 10

    @property
    def name(self) -> str:
        return "C4.5" if self.kind == "c45" else f"AdaBoost C4.5 {self.variant}"


def train_order_model(X, y, config: ClassifierConfig = ClassifierConfig(), seed: int = 0,
                      classes=ORDER_CLASSES) -> DecisionTree | AdaBoostEnsemble:
    if config.kind == "c45":
        return train_c45(X, y, classes=classes)
    if config.kind == "adaboost":
        return train_adaboost(X, y, config.variant, config.rounds, seed, classes=classes)
    raise ValueError(f"unknown order classifier {config.kind!r}")


@dataclass
class CVResult:
    metrics: ClassMetrics
    predictions: list
    folds: np.ndarray
    models: list
    warnings: list[str]

    @property
    def accuracy(self) -> float:
        return self.metrics.accuracy


def stratified_folds(y: Sequence, folds: int, seed: int, classes: Sequence | None = None) -> np.ndarray:
    """Fold id per row: each class is shuffled and dealt round-robin."""
    y = list(y)
    classes = list(classes) if classes is not None else sorted(set(y))
    rng = np.random.default_rng(seed)
    assignment = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in classes:
        members = np.array([i for i, v in enumerate(y) if v == c], dtype=np.int64)
        members = members[rng.permutation(len(members))]
        assignment[members] = (offset + np.arange(len(members))) % folds
        offset += len(members)
    return assignment


def cross_validate(
    X,
    y: Sequence,
    folds: int = 10,
    config: ClassifierConfig = ClassifierConfig(),
    seed: int = 0,
    classes: Sequence = ORDER_CLASSES,
    threads: int = 1,
) -> CVResult:
    """Stratified k-fold CV pooling held-out predictions into one confusion matrix.

    Attributes are min-max normalized with bounds from each training fold.
    Fold ``f`` trains with seed ``seed + f``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = list(y)
    if len(y) < folds:
        raise ValueError(f"need at least {folds} rows for {folds}-fold CV, got {len(y)}")
    classes = tuple(classes)
    present = [c for c in classes if c in set(y)] + sorted(set(y) - set(classes))
    assignment = stratified_folds(y, folds, seed, present)
    notes: list[str] = []

    def run(f):
        train = assignment != f
        ytr = [y[i] for i in np.flatnonzero(train)]
        msgs = [f"fold {f}: class {c!r} absent from training folds" for c in classes if c not in ytr]
        Xtr, bounds = normalize_attributes(X[train])
        if len(set(ytr)) < 2 and config.kind == "adaboost":
            model = train_c45(Xtr, ytr, classes=classes)
        else:
            model = train_order_model(Xtr, ytr, config, seed + f, classes)
        held = np.flatnonzero(~train)
        Xte = bounds.apply(X[held])
        preds = [predict_order(model, row) if set(classes) == set(ORDER_CLASSES) else model.predict(row[None, :])[0]
                 for row in Xte]
        return model, held, preds, msgs

    predictions: list = [None] * len(y)
    models = []
    for model, held, preds, msgs in parallel_map(run, range(folds), threads):
        models.append(model)
        notes.extend(msgs)
        for i, p in zip(held, preds):
            predictions[i] = p
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    C = confusion_matrix(y, predictions, classes)
    return CVResult(class_metrics(C, classes), predictions, assignment, models, notes)


# ---------------------------------------------------------------------------
# top node analysis

@dataclass(frozen=True)
class TopNode:
    level: int
    frequency: int
    index: str
    name: str


def top_node_analysis(models: Sequence, max_level: int = 2, min_frequency: int = 2) -> list[TopNode]:
    """Count split attributes per tree level across models (ensembles: all members).

    Within each level rows are ordered by descending frequency, then by
    attribute order; counts below ``min_frequency`` are omitted.
    """
    if not models:
        raise ValueError("need at least one tree")
    trees: list[DecisionTree] = []
    for m in models:
        trees.extend(m.trees if isinstance(m, AdaBoostEnsemble) else [m])
    counts = [Counter() for _ in range(max_level + 1)]
    for t in trees:
        for level, attrs in enumerate(t.nodes_by_level(max_level)):
            counts[level].update(attrs)
    rows = []
    for level, ctr in enumerate(counts):
        for a, freq in sorted(ctr.items(), key=lambda kv: (-kv[1], kv[0])):
            if freq >= min_frequency:
                key = ATTRIBUTE_KEYS[a] if a < len(ATTRIBUTE_KEYS) else f"A{a}"
                rows.append(TopNode(level, freq, key, ATTRIBUTE_NAMES.get(key, key)))
    return rows


def write_top_nodes(fh: IO[str], rows: Sequence[TopNode]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["level", "frequency", "index", "name"])
    for r in rows:
        writer.writerow([r.level, r.frequency, r.index, r.name])


# ---------------------------------------------------------------------------
# attribute table I/O

def write_attribute_table(fh: IO[str], rows: Sequence[DatasetAttributes], labels: Sequence[str] | None = None) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(list(ATTRIBUTE_KEYS) + ["label"])
    for i, row in enumerate(rows):
        writer.writerow([repr(v) for v in astuple(row)] + [labels[i] if labels is not None else ""])


def read_attribute_table(fh: IO[str]) -> tuple[list[DatasetAttributes], list[str]]:
    reader = csv.DictReader(fh)
    expected = list(ATTRIBUTE_KEYS) + ["label"]
    if reader.fieldnames != expected:
        raise ValueError(f"attribute table header mismatch: expected {expected}, got {reader.fieldnames}")
    rows, labels = [], []
    for rec in reader:
        rows.append(DatasetAttributes(*(float(rec[k]) for k in ATTRIBUTE_KEYS)))
        labels.append(rec["label"])
    return rows, labels


__all__ = [
    "DatasetAttributes", "extract_attributes", "normalize_attributes", "AttributeBounds", "split_bug_units",
    "enumerate_windows", "enumerate_window_datasets", "label_reduction_order", "label_from_winners", "train_c45",
    "train_adaboost", "predict_order", "cross_validate", "top_node_analysis", "OrderPredictor", "ClassifierConfig",
]
