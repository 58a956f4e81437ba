import io

import numpy as np
import pytest
from conftest import make_corpus, random_corpus
from hypothesis import given, settings
from hypothesis import strategies as st

from bugreduce.instance_selection import (
    IS_ALGORITHMS,
    NeighborIndex,
    drop3_select,
    icf_select,
    lvq_select,
    pop_select,
    pop_weakness,
    reduce_drop,
    reduce_icf,
    reduce_instances,
    reduce_lvq,
    reduce_pop,
    wilson_edit,
    write_removals,
)


def naive_knn(dist, i, active, k):
    cands = sorted((dist[i, j], j) for j in range(len(dist)) if active[j] and j != i)
    return [j for _, j in cands[:k]]


def naive_vote(y, nbrs):
    if not nbrs:
        return None
    counts = {}
    for j in nbrs:
        counts[y[j]] = counts.get(y[j], 0) + 1
    best = max(counts.values())
    return next(y[j] for j in nbrs if counts[y[j]] == best)


def naive_drop3(dist, y, m_I, k=3):
    """DROP3 recomputing every neighbor list and associate set from scratch."""
    m = len(y)
    active = [True] * m
    wrong = [i for i in range(m) if naive_vote(y, naive_knn(dist, i, active, k)) not in (None, y[i])]
    if len(wrong) < m:
        for i in wrong:
            active[i] = False
    if sum(active) <= m_I:
        return [i for i in range(m) if active[i]]
    S = [i for i in range(m) if active[i]]
    enemy = {i: min((dist[i, j] for j in S if y[j] != y[i]), default=np.inf) for i in S}
    order = sorted(S, key=lambda i: (-enemy[i], i))
    for x in order:
        if sum(active) <= m_I:
            break
        lists = {a: naive_knn(dist, a, active, k + 1) for a in range(m)}
        assoc = [a for a in range(m) if x in lists[a][:k]]
        with_ok = sum(naive_vote(y, lists[a][:k]) == y[a] for a in assoc)
        without_ok = sum(naive_vote(y, [j for j in lists[a] if j != x][:k]) == y[a] for a in assoc)
        if without_ok >= with_ok:
            active[x] = False
    return [i for i in range(m) if active[i]]


class TestNeighborIndex:
    def test_cosine_properties(self, rng):
        c = random_corpus(rng, 30, 12)
        idx = NeighborIndex.cosine(c.matrix)
        D = idx.dist
        assert np.allclose(D, D.T) and np.all(np.diag(D) == 0)
        assert D.min() >= 0 and D.max() <= 1
        X = c.matrix.toarray().astype(float)
        n = np.linalg.norm(X, axis=1)
        expect = 1 - (X @ X.T) / np.outer(n, n)
        np.fill_diagonal(expect, 0)
        assert np.allclose(D, np.clip(expect, 0, 1), atol=1e-12)

    def test_blocked_threads_identical(self, rng):
        c = random_corpus(rng, 50, 20)
        a = NeighborIndex.cosine(c.matrix, threads=1, block=256).dist
        b = NeighborIndex.cosine(c.matrix, threads=4, block=7).dist
        assert np.array_equal(a, b)

    def test_ties_by_index(self):
        idx = NeighborIndex.euclidean([0.0, 1.0, -1.0, 2.0])
        active = np.ones(4, dtype=bool)
        assert idx.neighbors(0, active, 3).tolist() == [1, 2, 3]


class TestWilson:
    def test_flipped_point_removed(self):
        # a "B" label inside the A cluster
        pts = [0.0, 0.1, 0.2, 0.3, 5.0, 5.1, 5.2, 5.3]
        y = np.array([0, 0, 1, 0, 1, 1, 1, 1])
        removed = wilson_edit(NeighborIndex.euclidean(pts), y, np.ones(8, dtype=bool))
        assert removed.tolist() == [2]


class TestICF:
    # A at 0..4, B at 6..10; hand trace: reachable/coverage of
    # A0=(4,2), A1=(4,3), A2=(4,3), A3=(3,4), A4=(1,4), mirrored for B
    PTS = [0, 1, 2, 3, 4, 6, 7, 8, 9, 10]
    Y = list("AAAAABBBBB")

    def test_interior_removed_first(self):
        res = icf_select(NeighborIndex.euclidean(self.PTS), self.Y, 4)
        assert res.kept.tolist() == [3, 4, 5, 6]
        assert res.hit_target
        assert sorted(r.index for r in res.removals) == [0, 1, 2, 7, 8, 9]
        assert {r.iteration for r in res.removals} == {1}

    def test_fixed_point_flags_miss(self):
        res = icf_select(NeighborIndex.euclidean(self.PTS), self.Y, 1)
        assert res.kept.tolist() == [3, 4, 5, 6]
        assert not res.hit_target

    def test_identity(self, rng):
        c = random_corpus(rng, 12, 6)
        res = reduce_icf(c, c.n_docs)
        assert res.kept.tolist() == list(range(c.n_docs)) and res.hit_target


class TestDROP3:
    # hand trace: point 3 (B at 3) is edited out; order by enemy distance is
    # [0, 1, 5, 2, 4]; 0 and 1 survive, then 5, 2 and 4 are dropped
    PTS = [0, 1, 2, 3, 4, 5]
    Y = list("AAABBB")

    def test_manual_trace_full(self):
        res = drop3_select(NeighborIndex.euclidean(self.PTS), self.Y, 1)
        assert res.kept.tolist() == [0, 1]
        assert [(r.index, r.removed_by) for r in res.removals] == [
            (3, "DROP-edit"), (5, "DROP"), (2, "DROP"), (4, "DROP")]
        assert not res.hit_target

    def test_manual_trace_stops_at_target(self):
        res = drop3_select(NeighborIndex.euclidean(self.PTS), self.Y, 3)
        assert res.kept.tolist() == [0, 1, 4]
        assert res.hit_target

    def test_flipped_point_filtered(self):
        pts = [0.0, 0.1, 0.2, 0.3, 5.0, 5.1, 5.2, 5.3]
        res = drop3_select(NeighborIndex.euclidean(pts), list("AABABBBB"), 7)
        assert res.removals[0].index == 2 and res.removals[0].removed_by == "DROP-edit"

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_matches_naive_oracle(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(4, 16))
        pts = rng.integers(0, 12, size=(m, 2)).astype(float)
        y = rng.integers(0, 3, size=m).tolist()
        m_I = int(rng.integers(1, m + 1))
        idx = NeighborIndex.euclidean(pts)
        got = drop3_select(idx, y, m_I).kept.tolist()
        want = list(range(m)) if m_I >= m else naive_drop3(idx.dist, y, m_I)
        assert got == want


class TestLVQ:
    def test_two_clusters(self):
        pts = np.array([0, 1, 2, 3, 4, 100, 101, 102, 103, 104], dtype=float)
        y = list("AAAAABBBBB")
        res = lvq_select(pts, y, 2, seed=3, metric="euclidean")
        a, b = res.kept.tolist()
        assert a < 5 <= b
        assert abs(pts[a] - 2) <= 1 and abs(pts[b] - 102) <= 1

    def test_deterministic(self, rng):
        c = random_corpus(rng, 40, 15)
        r1, r2 = reduce_lvq(c, 12, seed=5), reduce_lvq(c, 12, seed=5)
        assert r1.kept.tolist() == r2.kept.tolist()
        assert r1.achieved_count == 12

    def test_every_class_kept(self, rng):
        c = random_corpus(rng, 40, 15, n_classes=4)
        kept = reduce_lvq(c, 4, seed=0).kept
        assert {c.labels[i] for i in kept} == set(c.labels)

    def test_too_small_target(self, rng):
        c = random_corpus(rng, 20, 8, n_classes=3)
        with pytest.raises(ValueError):
            reduce_lvq(c, 2)

    def test_identity(self, rng):
        c = random_corpus(rng, 10, 5)
        assert reduce_lvq(c, c.n_docs).kept.tolist() == list(range(c.n_docs))


class TestPOP:
    def test_projection_trace(self):
        # runs AA | BBB: only the value-4 instance is interior
        w = pop_weakness(np.array([1, 2, 3, 4, 5.0]), list("AABBB"))
        assert w.tolist() == [0, 0, 0, 1, 0]

    def test_identical_instances(self):
        X = np.zeros((7, 2))
        w = pop_weakness(X, list("AAAABBB"))
        # ties sort by index, so each feature gives runs 0-3 and 4-6
        assert w.tolist() == [0, 2, 2, 0, 0, 2, 0]
        res = pop_select(X, list("AAAABBB"), 1)
        assert res.kept.tolist() == [0, 3, 4, 6] and not res.hit_target

    def test_removal_order(self):
        X = np.array([[0, 0], [1, 1], [2, 2], [3, 3], [4, 9]], dtype=float)
        y = list("AAAAA")
        # weakness [0, 2, 2, 2, 0]; ties go to the higher index first
        res = pop_select(X, y, 3)
        assert [r.index for r in res.removals] == [3, 2]
        assert res.kept.tolist() == [0, 1, 4]

    def test_identity(self, rng):
        c = random_corpus(rng, 10, 5)
        res = reduce_pop(c, c.n_docs)
        assert res.hit_target and res.kept.tolist() == list(range(c.n_docs))


class TestDispatch:
    def test_unknown(self, rng):
        with pytest.raises(ValueError):
            reduce_instances(random_corpus(rng), "CNN", 3)

    @pytest.mark.parametrize("alg", IS_ALGORITHMS)
    def test_invariants_random(self, alg):
        rng = np.random.default_rng(7)
        for _ in range(10):
            c = random_corpus(rng, 40, 20)
            m_I = max(len(set(c.labels)), int(rng.integers(1, c.n_docs + 1)))
            r1 = reduce_instances(c, alg, m_I, seed=2, threads=1)
            r2 = reduce_instances(c, alg, m_I, seed=2, threads=3)
            assert np.array_equal(r1.kept, r2.kept)
            assert set(r1.kept.tolist()) <= set(range(c.n_docs))
            assert r1.achieved_count == len(r1.kept)
            assert r1.achieved_count <= m_I or not r1.hit_target
            assert r1.hit_target == (r1.achieved_count <= m_I)
            assert len(r1.removals) == c.n_docs - r1.achieved_count

    def test_write_removals(self):
        c = make_corpus([[1, 0], [1, 0], [0, 1], [1, 1]], list("aabb"), bug_ids=[10, 20, 30, 40])
        res = pop_select(c.matrix, c.labels, 3)
        buf = io.StringIO()
        write_removals(buf, c, res)
        assert buf.getvalue().splitlines()[0] == "bug_id,removed_by,iteration"
