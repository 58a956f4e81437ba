"""Combined word/report reduction in either order, and order comparison."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, replace

from .classifiers import recommend_corpus, train_classifier
from .corpus import Corpus, CorpusError
from .evaluation import AccuracyCurve, accuracy_curve
from .feature_selection import FS_ALGORITHMS, score_words, select_top_words
from .instance_selection import IS_ALGORITHMS, reduce_instances

FS_THEN_IS = "FS_then_IS"
IS_THEN_FS = "IS_then_FS"
ORDERS = (FS_THEN_IS, IS_THEN_FS)
_ORDER_ALIASES = {
    "fs_then_is": FS_THEN_IS,
    "fs->is": FS_THEN_IS,
    "fsis": FS_THEN_IS,
    "is_then_fs": IS_THEN_FS,
    "is->fs": IS_THEN_FS,
    "isfs": IS_THEN_FS,
}


def parse_order(text: str) -> str:
    try:
        return _ORDER_ALIASES[text.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown reduction order {text!r}; use FS->IS or IS->FS") from None


def order_arrow(order: str) -> str:
    return "FS->IS" if order == FS_THEN_IS else "IS->FS"


def target_size(rate: float, n: int) -> int:
    """``ceil(rate * n)``, at least 1, robust to float noise such as 0.3 * 10."""
    return max(1, math.ceil(round(rate * n, 9)))


@dataclass(frozen=True)
class ReductionPlan:
    order: str = FS_THEN_IS
    fs_algorithm: str = "CH"
    is_algorithm: str = "ICF"
    word_rate: float = 0.30
    bug_rate: float = 0.50
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "order", parse_order(self.order) if self.order not in ORDERS else self.order)
        object.__setattr__(self, "fs_algorithm", self.fs_algorithm.upper())
        object.__setattr__(self, "is_algorithm", self.is_algorithm.upper())
        if self.fs_algorithm not in FS_ALGORITHMS:
            raise ValueError(f"unknown feature selection algorithm {self.fs_algorithm!r}")
        if self.is_algorithm not in IS_ALGORITHMS:
            raise ValueError(f"unknown instance selection algorithm {self.is_algorithm!r}")
        for name in ("word_rate", "bug_rate"):
            rate = getattr(self, name)
            if not 0.0 < rate <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {rate}")

    def with_order(self, order: str) -> "ReductionPlan":
        return replace(self, order=order)


@dataclass
class ReductionAudit:
    removed_words: list[str] = field(default_factory=list)
    removed_instances: list[int] = field(default_factory=list)
    blank_reports: list[int] = field(default_factory=list)
    duplicates_removed: int = 0


@dataclass(frozen=True)
class StageReport:
    stage: str
    algorithm: str
    docs_before: int
    docs_after: int
    words_before: int
    words_after: int
    target: int
    seconds: float


@dataclass
class ReducedCorpus:
    corpus: Corpus
    plan: ReductionPlan
    audit: ReductionAudit
    stages: list[StageReport]
    hit_target: bool

    def report(self, include_timing: bool = True) -> dict:
        stages = [asdict(s) for s in self.stages]
        if not include_timing:
            for s in stages:
                s.pop("seconds")
        return {
            "plan": asdict(self.plan),
            "stages": stages,
            "audit": {
                "removed_words": len(self.audit.removed_words),
                "removed_instances": len(self.audit.removed_instances),
                "blank_reports": len(self.audit.blank_reports),
                "duplicates_removed": self.audit.duplicates_removed,
            },
            "hit_target": self.hit_target,
            "final": {"docs": self.corpus.n_docs, "words": self.corpus.n_words},
        }


def _fs_stage(corpus: Corpus, plan: ReductionPlan, threads: int):
    t0 = time.perf_counter()
    n_F = target_size(plan.word_rate, corpus.n_words)
    scores = score_words(corpus, plan.fs_algorithm, seed=plan.seed, threads=threads)
    reduced, faudit = select_top_words(corpus, scores, n_F)
    if reduced.n_docs == 0:
        raise CorpusError("empty corpus after blank-report removal")
    stage = StageReport("FS", plan.fs_algorithm, corpus.n_docs, reduced.n_docs, corpus.n_words, reduced.n_words, n_F,
                        time.perf_counter() - t0)
    return reduced, faudit, stage


def _is_stage(corpus: Corpus, plan: ReductionPlan, threads: int):
    t0 = time.perf_counter()
    m_I = target_size(plan.bug_rate, corpus.n_docs)
    result = reduce_instances(corpus, plan.is_algorithm, m_I, seed=plan.seed, threads=threads)
    kept = set(result.kept.tolist())
    removed = [corpus.bug_ids[i] for i in range(corpus.n_docs) if i not in kept]
    reduced = corpus.subset_docs(result.kept)
    stage = StageReport("IS", plan.is_algorithm, corpus.n_docs, reduced.n_docs, corpus.n_words, reduced.n_words, m_I,
                        time.perf_counter() - t0)
    return reduced, removed, result.hit_target, stage


def reduce(train: Corpus, plan: ReductionPlan, threads: int = 1) -> ReducedCorpus:
    """Run feature and instance selection in the order given by ``plan``.

    Each stage computes its target from the corpus it receives. Reports
    left without words after feature selection are dropped in both orders.
    """
    if train.n_docs == 0:
        raise CorpusError("empty training corpus")
    audit = ReductionAudit()
    if plan.order == FS_THEN_IS:
        mid, faudit, s1 = _fs_stage(train, plan, threads)
        final, removed, hit, s2 = _is_stage(mid, plan, threads)
    else:
        mid, removed, hit, s1 = _is_stage(train, plan, threads)
        final, faudit, s2 = _fs_stage(mid, plan, threads)
    audit.removed_words = faudit.removed_words
    audit.blank_reports = faudit.blank_reports
    audit.removed_instances = removed
    gone = set(removed) | set(faudit.blank_reports)
    audit.duplicates_removed = sum(
        1 for bug, meta in zip(train.bug_ids, train.meta) if bug in gone and meta.duplicate_of is not None
    )
    return ReducedCorpus(final, plan, audit, [s1, s2], hit)


@dataclass
class OrderComparison:
    curves: dict[str, AccuracyCurve]
    winners: list[str]  # per k: an order name or "tie"
    reduced: dict[str, ReducedCorpus]

    def wins(self, order: str) -> int:
        return sum(1 for w in self.winners if w == order)


def evaluate_corpus(train: Corpus, test: Corpus, classifier: str, k_max: int, seed: int = 0, threads: int = 1) -> AccuracyCurve:
    options = {"threads": threads} if classifier.lower() in ("svm", "linearsvm", "linear_svm") else {}
    model = train_classifier(classifier, train, seed=seed, **options)
    recs = recommend_corpus(model, test, k_max)
    return accuracy_curve(recs, test.labels, k_max)


def compare_orders(
    train: Corpus,
    test: Corpus,
    plan: ReductionPlan,
    classifier: str = "nb",
    k_max: int = 5,
    threads: int = 1,
) -> OrderComparison:
    """Reduce with both orders, train on each and compare top-k accuracy for k = 1..k_max."""
    curves, reduced = {}, {}
    for order in ORDERS:
        red = reduce(train, plan.with_order(order), threads)
        reduced[order] = red
        curves[order] = evaluate_corpus(red.corpus, test, classifier, k_max, plan.seed, threads)
    winners = []
    for k in range(k_max):
        a, b = curves[FS_THEN_IS].correct[k], curves[IS_THEN_FS].correct[k]
        winners.append(FS_THEN_IS if a > b else IS_THEN_FS if b > a else "tie")
    return OrderComparison(curves, winners, reduced)
