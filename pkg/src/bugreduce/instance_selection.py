"""Instance selection: ICF, LVQ, DROP3 and POP.

Each reducer targets ``m_I`` retained documents. ICF, DROP3 and POP can
reach a fixed point above the target; the result then carries
``hit_target=False``. All neighbor computations use cosine distance on
term-frequency vectors and break ties by document index.

The ``*_select`` functions work on a precomputed :class:`NeighborIndex` (or
raw vectors for LVQ/POP) so they can be exercised on small geometric
fixtures; the ``reduce_*`` wrappers take a :class:`Corpus`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np
import scipy.sparse as sp

from .corpus import Corpus
from .parallel import parallel_map

IS_ALGORITHMS = ("ICF", "LVQ", "DROP", "POP")
EDIT_NEIGHBORS = 3
DROP_NEIGHBORS = 3
LVQ_RATE = 0.3
LVQ_PASSES = 10


@dataclass(frozen=True)
class Removal:
    index: int
    removed_by: str
    iteration: int


@dataclass
class ReductionResult:
    kept: np.ndarray
    hit_target: bool
    removals: list[Removal] = field(default_factory=list)

    @property
    def achieved_count(self) -> int:
        return len(self.kept)


class NeighborIndex:
    """Pairwise distances with rows pre-sorted by (distance, index)."""

    def __init__(self, dist: np.ndarray):
        dist = np.asarray(dist, dtype=float)
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
            raise ValueError("distance matrix must be square")
        self.dist = dist
        self.size = dist.shape[0]
        # stable argsort: equal distances keep ascending index order
        self.order = np.argsort(dist, axis=1, kind="stable")

    @classmethod
    def cosine(cls, X, threads: int = 1, block: int = 256) -> "NeighborIndex":
        """Cosine distance ``1 - cos`` between rows of a non-negative matrix.

        Zero rows are at distance 1 from everything but themselves.
        """
        X = sp.csr_matrix(X, dtype=float)
        norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
        inv = np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 0.0)
        Xn = sp.csr_matrix(sp.diags(inv) @ X)
        XnT = sp.csr_matrix(Xn.T)
        m = X.shape[0]
        starts = list(range(0, m, block))

        def rows(s):
            return np.asarray((Xn[s:s + block] @ XnT).todense())

        sims = np.vstack(parallel_map(rows, starts, threads)) if m else np.zeros((0, 0))
        dist = np.clip(np.round(1.0 - sims, 12), 0.0, 1.0)
        upper = np.triu(dist, 1)
        dist = upper + upper.T
        return cls(dist)

    @classmethod
    def euclidean(cls, points) -> "NeighborIndex":
        P = np.asarray(points, dtype=float)
        if P.ndim == 1:
            P = P[:, None]
        diff = P[:, None, :] - P[None, :, :]
        return cls(np.sqrt((diff ** 2).sum(axis=2)))

    def neighbors(self, i: int, active: np.ndarray, k: int, exclude: Sequence[int] = ()) -> np.ndarray:
        """First ``k`` active neighbors of ``i`` (never ``i`` itself)."""
        row = self.order[i]
        mask = active[row] & (row != i)
        for e in exclude:
            mask &= row != e
        return row[mask][:k]


def _vote(labels: np.ndarray, neighbors: np.ndarray):
    """Plurality label among ``neighbors`` (nearest-first); ties go to the nearest."""
    if len(neighbors) == 0:
        return None
    votes: dict[int, int] = {}
    for j in neighbors:
        votes[labels[j]] = votes.get(labels[j], 0) + 1
    best = max(votes.values())
    for j in neighbors:
        if votes[labels[j]] == best:
            return labels[j]


def _encode(labels: Sequence) -> np.ndarray:
    index = {c: i for i, c in enumerate(sorted(set(labels)))}
    return np.array([index[l] for l in labels], dtype=np.int64)


def _identity(m: int) -> ReductionResult:
    return ReductionResult(np.arange(m), True)


def wilson_edit(index: NeighborIndex, y: np.ndarray, active: np.ndarray, k: int = EDIT_NEIGHBORS) -> np.ndarray:
    """Instances misclassified by their ``k`` nearest active neighbors.

    Decisions use the input snapshot. Returns the indices to remove (empty
    if removing them would empty the set).
    """
    wrong = []
    for i in np.flatnonzero(active):
        pred = _vote(y, index.neighbors(i, active, k))
        if pred is not None and pred != y[i]:
            wrong.append(i)
    if len(wrong) == int(active.sum()):
        return np.empty(0, dtype=np.int64)
    return np.array(wrong, dtype=np.int64)


# ---------------------------------------------------------------------------
# ICF

def icf_select(index: NeighborIndex, labels: Sequence, m_I: int) -> ReductionResult:
    if m_I < 1:
        raise ValueError("m_I must be >= 1")
    m = index.size
    if m_I >= m:
        return _identity(m)
    y = _encode(labels)
    active = np.ones(m, dtype=bool)
    removals = []
    edited = wilson_edit(index, y, active)
    active[edited] = False
    removals += [Removal(int(i), "ICF-edit", 0) for i in edited]

    iteration = 0
    while active.sum() > m_I:
        iteration += 1
        S = np.flatnonzero(active)
        D = index.dist[np.ix_(S, S)]
        same = y[S][:, None] == y[S][None, :]
        enemy = np.where(same, np.inf, D).min(axis=1)
        reach = same & (D < enemy[:, None])
        np.fill_diagonal(reach, False)
        n_reach = reach.sum(axis=1)
        n_cover = reach.sum(axis=0)
        drop = S[n_reach > n_cover]
        if len(drop) == 0:
            break
        active[drop] = False
        removals += [Removal(int(i), "ICF", iteration) for i in drop]
    kept = np.flatnonzero(active)
    return ReductionResult(kept, len(kept) <= m_I, removals)


def reduce_icf(train: Corpus, m_I: int, threads: int = 1) -> ReductionResult:
    if m_I >= train.n_docs:
        return _identity(train.n_docs)
    return icf_select(NeighborIndex.cosine(train.matrix, threads), train.labels, m_I)


# ---------------------------------------------------------------------------
# DROP3

def drop3_select(index: NeighborIndex, labels: Sequence, m_I: int, k: int = DROP_NEIGHBORS) -> ReductionResult:
    """DROP3: Wilson editing, then associate-based removal, farthest-from-enemy first.

    Associates are tracked over the full original set (including edited-out
    instances); each instance keeps its ``k + 1`` nearest neighbors in the
    current set so that the "without" vote still has ``k`` voters.
    """
    if m_I < 1:
        raise ValueError("m_I must be >= 1")
    m = index.size
    if m_I >= m:
        return _identity(m)
    y = _encode(labels)
    active = np.ones(m, dtype=bool)
    removals = []
    edited = wilson_edit(index, y, active)
    active[edited] = False
    removals += [Removal(int(i), "DROP-edit", 0) for i in edited]
    if active.sum() <= m_I:
        kept = np.flatnonzero(active)
        return ReductionResult(kept, True, removals)

    S = np.flatnonzero(active)
    D = index.dist[np.ix_(S, S)]
    enemy = np.where(y[S][:, None] == y[S][None, :], np.inf, D).min(axis=1)
    # descending enemy distance, ties by ascending index
    order = S[np.lexsort((S, -enemy))]

    nbrs = [index.neighbors(a, active, k + 1) for a in range(m)]
    assoc: list[set[int]] = [set() for _ in range(m)]
    for a in range(m):
        for j in nbrs[a][:k]:
            assoc[j].add(a)

    for x in order:
        if active.sum() <= m_I:
            break
        with_ok = without_ok = 0
        for a in sorted(assoc[x]):
            if _vote(y, nbrs[a][:k]) == y[a]:
                with_ok += 1
            without = nbrs[a][nbrs[a] != x][:k]
            if _vote(y, without) == y[a]:
                without_ok += 1
        if without_ok < with_ok:
            continue
        active[x] = False
        removals.append(Removal(int(x), "DROP", 1))
        for a in range(m):
            if x in nbrs[a]:
                for j in nbrs[a][:k]:
                    assoc[j].discard(a)
                nbrs[a] = index.neighbors(a, active, k + 1)
                for j in nbrs[a][:k]:
                    assoc[j].add(a)
    kept = np.flatnonzero(active)
    return ReductionResult(kept, len(kept) <= m_I, removals)


def reduce_drop(train: Corpus, m_I: int, threads: int = 1) -> ReductionResult:
    if m_I >= train.n_docs:
        return _identity(train.n_docs)
    return drop3_select(NeighborIndex.cosine(train.matrix, threads), train.labels, m_I)


# ---------------------------------------------------------------------------
# LVQ

def _allocate(class_sizes: np.ndarray, total: int) -> np.ndarray:
    """Codebooks per class: at least one each, the rest proportional to size."""
    quota = total * class_sizes / class_sizes.sum()
    alloc = np.ones(len(class_sizes), dtype=np.int64)
    while alloc.sum() < total:
        room = alloc < class_sizes
        gap = np.where(room, quota - alloc, -np.inf)
        alloc[int(np.argmax(gap))] += 1
    return alloc


def _distances(codebooks: np.ndarray, x: np.ndarray, metric: str) -> np.ndarray:
    if metric == "cosine":
        norms = np.linalg.norm(codebooks, axis=1) * np.linalg.norm(x)
        dots = codebooks @ x
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(norms > 0, 1.0 - dots / np.where(norms > 0, norms, 1.0), 1.0)
    return np.linalg.norm(codebooks - x, axis=1)


def lvq_select(
    X,
    labels: Sequence,
    m_I: int,
    seed: int = 0,
    rate: float = LVQ_RATE,
    passes: int = LVQ_PASSES,
    metric: str = "cosine",
) -> ReductionResult:
    """LVQ1 codebook training, then each codebook's nearest unused same-class instance."""
    X = np.asarray(X.toarray() if sp.issparse(X) else X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    m = X.shape[0]
    y = _encode(labels)
    n_classes = len(set(y.tolist()))
    if m_I < n_classes:
        raise ValueError(f"m_I={m_I} is smaller than the number of classes ({n_classes})")
    if m_I >= m:
        return _identity(m)
    if metric == "cosine":
        norms = np.linalg.norm(X, axis=1, keepdims=True)
        X = X / np.where(norms > 0, norms, 1.0)
    rng = np.random.default_rng(seed)
    sizes = np.bincount(y, minlength=n_classes)
    alloc = _allocate(sizes, m_I)
    chosen, cb_labels = [], []
    for c in range(n_classes):
        members = np.flatnonzero(y == c)
        chosen.extend(rng.choice(members, size=alloc[c], replace=False).tolist())
        cb_labels.extend([c] * alloc[c])
    codebooks = X[chosen].copy()
    cb_labels = np.array(cb_labels)

    total_steps = passes * m
    step = 0
    for _ in range(passes):
        for i in rng.permutation(m):
            alpha = rate * (1.0 - step / total_steps)
            step += 1
            w = int(np.argmin(_distances(codebooks, X[i], metric)))
            if cb_labels[w] == y[i]:
                codebooks[w] += alpha * (X[i] - codebooks[w])
            else:
                codebooks[w] -= alpha * (X[i] - codebooks[w])

    taken = np.zeros(m, dtype=bool)
    idx = np.arange(m)
    for j in range(len(codebooks)):
        members = np.flatnonzero((y == cb_labels[j]) & ~taken)
        d = _distances(X[members], codebooks[j], metric)
        pick = members[np.lexsort((idx[members], d))[0]]
        taken[pick] = True
    kept = np.flatnonzero(taken)
    removed = [Removal(int(i), "LVQ", passes) for i in np.flatnonzero(~taken)]
    return ReductionResult(kept, True, removed)


def reduce_lvq(train: Corpus, m_I: int, seed: int = 0, rate: float = LVQ_RATE, passes: int = LVQ_PASSES) -> ReductionResult:
    if m_I >= train.n_docs:
        return _identity(train.n_docs)
    return lvq_select(train.matrix, train.labels, m_I, seed=seed, rate=rate, passes=passes)


# ---------------------------------------------------------------------------
# POP

def pop_weakness(X, labels: Sequence) -> np.ndarray:
    """Times each instance sits strictly inside a same-class run of a projection.

    Each feature column is sorted by (value, index); absent sparse entries
    count as 0.
    """
    X = np.asarray(X.toarray() if sp.issparse(X) else X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    m = X.shape[0]
    y = _encode(labels)
    weakness = np.zeros(m, dtype=np.int64)
    if m < 3:
        return weakness
    idx = np.arange(m)
    for j in range(X.shape[1]):
        order = np.lexsort((idx, X[:, j]))
        lab = y[order]
        change = lab[1:] != lab[:-1]
        first = np.concatenate(([True], change))
        last = np.concatenate((change, [True]))
        weakness[order[~first & ~last]] += 1
    return weakness


def pop_select(X, labels: Sequence, m_I: int) -> ReductionResult:
    if m_I < 1:
        raise ValueError("m_I must be >= 1")
    m = len(labels)
    if m_I >= m:
        return _identity(m)
    weakness = pop_weakness(X, labels)
    idx = np.arange(m)
    order = np.lexsort((-idx, -weakness))
    removable = order[weakness[order] > 0]
    need = m - m_I
    drop = removable[:need]
    active = np.ones(m, dtype=bool)
    active[drop] = False
    kept = np.flatnonzero(active)
    removals = [Removal(int(i), "POP", int(weakness[i])) for i in drop]
    return ReductionResult(kept, len(kept) <= m_I, removals)


def reduce_pop(train: Corpus, m_I: int) -> ReductionResult:
    return pop_select(train.matrix, train.labels, m_I)


# ---------------------------------------------------------------------------

def reduce_instances(train: Corpus, algorithm: str, m_I: int, seed: int = 0, threads: int = 1) -> ReductionResult:
    algorithm = algorithm.upper()
    if algorithm == "ICF":
        return reduce_icf(train, m_I, threads)
    if algorithm == "LVQ":
        return reduce_lvq(train, m_I, seed)
    if algorithm == "DROP":
        return reduce_drop(train, m_I, threads)
    if algorithm == "POP":
        return reduce_pop(train, m_I)
    raise ValueError(f"unknown instance selection algorithm {algorithm!r}; expected one of {IS_ALGORITHMS}")


def write_removals(fh: IO[str], corpus: Corpus, result: ReductionResult) -> None:
    """CSV audit of (bug_id, removed_by, iteration)."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["bug_id", "removed_by", "iteration"])
    for r in result.removals:
        writer.writerow([corpus.bug_ids[r.index], r.removed_by, r.iteration])
