import io
import math

import numpy as np
import pytest
from conftest import make_corpus
from hypothesis import assume, given, settings
from hypothesis import strategies as st

import bugreduce.order_prediction as op
from bugreduce.corpus import DocMeta, build_corpus, generate_synthetic_corpus
from bugreduce.order_prediction import (
    ATTRIBUTE_KEYS,
    FS_THEN_IS,
    IS_THEN_FS,
    MAX_VOTE,
    ORDER_CLASSES,
    AdaBoostEnsemble,
    ClassifierConfig,
    DatasetAttributes,
    DecisionTree,
    Node,
    OrderPredictor,
    TopNode,
    added_errors,
    cross_validate,
    enumerate_window_datasets,
    enumerate_windows,
    extract_attributes,
    label_from_winners,
    label_reduction_order,
    normalize_attributes,
    predict_order,
    read_attribute_table,
    split_bug_units,
    stratified_folds,
    top_node_analysis,
    train_adaboost,
    train_c45,
    write_attribute_table,
    write_top_nodes,
)


def H(*p):
    return -sum(v * math.log2(v) for v in p if v > 0)


class TestAttributes:
    def sheet(self):
        # vocab a b c
        dense = [[2, 1, 0], [0, 1, 0], [1, 0, 3], [0, 0, 1]]
        fixers = ["alice", "bob", "alice", "dave"]
        meta = [
            DocMeta("alice", "X", "UI", "major", "P1", 1),
            DocMeta("carol", "X", "UI", "major", "P2", 2),
            DocMeta("carol", "Y", "Core", "minor", "P2", 3),
            DocMeta("erin", "X", "Net", "major", "P2", 4),
        ]
        return make_corpus(dense, fixers, vocabulary=list("abc"), meta=meta)

    def test_hand_sheet(self):
        a = extract_attributes(self.sheet())
        want = dict(
            B1=4, B2=3, B3=9 / 4, B4=6 / 4, B5=1 - 6 / 12,
            B6=H(3 / 4, 1 / 4), B7=H(1 / 4, 3 / 4), B8=H(3 / 4, 1 / 4), B9=H(1 / 2, 1 / 4, 1 / 4),
            B10=H(3 / 9, 2 / 9, 4 / 9),
            D1=3, D2=4 / 3, D3=9 / 3, D4=3, D5=4 / 3, D6=9 / 3,
            D7=2 / 4,  # ceil(0.3) = 1 reporter: carol with 2 of 4 reports
            D8=1 / 5,  # {alice} / {alice, bob, dave, carol, erin}
        )
        for k, v in want.items():
            assert getattr(a, k) == pytest.approx(v, abs=1e-12), k
        assert a.D2 * a.D1 == a.B1

    def test_single_category_and_tanimoto(self):
        meta = [DocMeta(r, "P", "C", "normal", "P3", i) for i, r in enumerate(["x", "y"])]
        same = make_corpus([[1], [2]], ["x", "y"], meta=meta)
        a = extract_attributes(same)
        assert a.B6 == 0.0 and a.D8 == 1.0
        assert extract_attributes(make_corpus([[1], [2]], ["p", "q"], meta=meta)).D8 == 0.0

    def test_document_order_invariant(self):
        c = build_corpus(generate_synthetic_corpus(3, 4, 8, 6, 0.3, duplicate_rate=0.2))
        perm = np.random.default_rng(0).permutation(c.n_docs)
        np.testing.assert_allclose(extract_attributes(c).as_array(), extract_attributes(c.subset_docs(perm)).as_array(),
                                   atol=1e-12)

    def test_ranges(self):
        c = build_corpus(generate_synthetic_corpus(5, 5, 6, 6, 0.4))
        a = extract_attributes(c)
        assert 0 <= a.B5 <= 1 and 0 <= a.D7 <= 1 and 0 <= a.D8 <= 1
        assert min(a.B6, a.B7, a.B8, a.B9, a.B10) >= 0

    def test_array_round_trip(self):
        a = extract_attributes(self.sheet())
        assert DatasetAttributes.from_array(a.as_array()) == a
        assert len(ATTRIBUTE_KEYS) == 18


class TestNormalize:
    def test_hand(self):
        rows = np.zeros((3, 18))
        rows[:, 0] = [2, 4, 6]
        rows[:, 1] = 7
        norm, bounds = normalize_attributes(rows)
        assert norm[:, 0].tolist() == [0.0, 0.5, 1.0]
        assert norm[:, 1].tolist() == [0.0, 0.0, 0.0]
        new = np.zeros((1, 18))
        new[0, 0] = 10
        new[0, 1] = 3
        out = bounds.apply(new)
        assert out[0, 0] == 1.0 and out[0, 1] == 0.0
        new[0, 0] = -5
        assert bounds.apply(new)[0, 0] == 0.0

    def test_in_unit_interval(self, rng):
        norm, _ = normalize_attributes(rng.normal(size=(20, 18)) * 100)
        assert norm.min() >= 0 and norm.max() <= 1


class TestUnits:
    @pytest.mark.parametrize("m,units,last", [(298_785, 60, 3785), (281_180, 57, 1180), (4_999, 1, 4999), (5_000, 1, 5000)])
    def test_counts(self, m, units, last):
        out = split_bug_units(range(m))
        assert len(out) == units and len(out[-1]) == last
        assert [r for u in out for r in u] == list(range(m))

    @pytest.mark.parametrize("n,w,total", [(60, 5, 300), (57, 7, 399), (1, 1, 1)])
    def test_windows(self, n, w, total):
        wins = enumerate_windows(n, w)
        assert len(wins) == total == len(set(wins))
        if n > 1:
            assert (n - 1, 0) in wins

    def test_window_contents(self):
        units = [[1, 2], [3], [4, 5]]
        assert enumerate_window_datasets(units, 2) == [[1, 2], [3], [4, 5], [1, 2, 3], [3, 4, 5], [4, 5, 1, 2]]

    def test_window_too_long(self):
        with pytest.raises(ValueError):
            enumerate_windows(3, 4)


class TestLabels:
    @pytest.mark.parametrize("winners,want", [
        ([FS_THEN_IS] * 5, FS_THEN_IS),
        ([IS_THEN_FS] * 5, IS_THEN_FS),
        ([FS_THEN_IS, IS_THEN_FS, FS_THEN_IS, IS_THEN_FS, FS_THEN_IS], FS_THEN_IS),
        ([IS_THEN_FS, IS_THEN_FS, FS_THEN_IS, FS_THEN_IS, IS_THEN_FS], IS_THEN_FS),
        ([FS_THEN_IS, FS_THEN_IS, "tie", IS_THEN_FS, IS_THEN_FS], IS_THEN_FS),
        (["tie"] * 5, IS_THEN_FS),
    ])
    def test_from_winners(self, winners, want):
        assert label_from_winners(winners) == want

    def test_label_reduction_order(self):
        c = build_corpus(generate_synthetic_corpus(2, 4, 10, 6, 0.3))
        label, cmp_ = label_reduction_order(c, "CH", "POP", "nb", 5)
        assert len(cmp_.winners) == 5 and label == label_from_winners(cmp_.winners)


def exhaustive_best_threshold(x, y):
    """Midpoint with the highest information gain over all adjacent distinct values."""
    xs = sorted(set(x))
    best = None
    for a, b in zip(xs, xs[1:]):
        t = (a + b) / 2
        left = [c for v, c in zip(x, y) if v <= t]
        right = [c for v, c in zip(x, y) if v > t]
        if len(left) < 2 or len(right) < 2:
            continue
        info = lambda s: H(*(s.count(c) / len(s) for c in set(s)))
        gain = info(list(y)) - len(left) / len(y) * info(left) - len(right) / len(y) * info(right)
        if best is None or gain > best[0] + 1e-12:
            best = (gain, t)
    return best[1]


class TestC45:
    def test_pure_is_leaf(self):
        t = train_c45([[1.0], [2.0], [3.0]], ["a", "a", "a"])
        assert t.root.is_leaf and t.predict([[9.0]]) == ["a"]

    def test_one_dimensional_midpoint(self):
        t = train_c45([[1], [2], [3], [10], [11], [12]], list("aaabbb"))
        assert t.depth() == 1 and t.root.threshold == 6.5 and t.root.attribute == 0

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(0, 1000), min_size=4, max_size=30, unique=True), st.integers(2, 28))
    def test_separable_threshold_oracle(self, xs, cut):
        xs = sorted(xs)
        cut = min(max(cut, 2), len(xs) - 2)
        y = ["a"] * cut + ["b"] * (len(xs) - cut)
        t = train_c45([[v] for v in xs], y)
        assert t.depth() == 1
        assert t.root.threshold == exhaustive_best_threshold(xs, y) == (xs[cut - 1] + xs[cut]) / 2

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_weight_two_equals_duplicate(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.integers(0, 6, size=(25, 3)).astype(float)
        y = rng.choice(["a", "b"], 25).tolist()
        i = int(rng.integers(25))
        w = np.ones(25)
        w[i] = 2
        a = train_c45(X, y, weights=w)
        b = train_c45(np.vstack([X, X[i]]), y + [y[i]])
        assert a.to_dict() == b.to_dict()

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_monotone_transform_invariant(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.random((30, 4))
        y = np.where(X[:, 1] + 0.3 * rng.random(30) > 0.6, "p", "q").tolist()
        Z = X.copy()
        Z[:, 1] = np.exp(5 * Z[:, 1]) ** 3
        a, b = train_c45(X, y), train_c45(Z, y)
        assert a.predict(X) == b.predict(Z)

    def test_added_errors(self):
        # zero errors: N * (1 - cf^(1/N))
        assert added_errors(6, 0) == pytest.approx(6 * (1 - 0.25 ** (1 / 6)))
        assert added_errors(4, 3.7) == pytest.approx(0.67 * 0.3)
        assert added_errors(20, 3) > 0

    def test_pruning_collapses_noise(self):
        rng = np.random.default_rng(1)
        X = rng.random((40, 2))
        y = rng.choice(["a", "b"], 40, p=[0.9, 0.1]).tolist()
        assert train_c45(X, y).depth() <= train_c45(X, y, prune=False).depth()

    def test_bad_weights(self):
        with pytest.raises(ValueError):
            train_c45([[1], [2]], ["a", "b"], weights=[0, 0])


class TestAdaBoost:
    def test_perfect_first_round(self):
        ens = train_adaboost([[1], [2], [3], [10], [11], [12]], list("aaabbb"))
        assert len(ens.trees) == 1 and ens.votes == [MAX_VOTE] and ens.errors == [0.0]

    def test_hand_weight_update(self, monkeypatch):
        seen = []
        real = op.train_c45

        def spy(X, y, weights=None, **kw):
            seen.append(None if weights is None else np.array(weights))
            return real(X, y, weights, **kw)

        monkeypatch.setattr(op, "train_c45", spy)
        X = [[1], [2], [3], [4]]
        ens = train_adaboost(X, ["a", "a", "b", "a"], rounds=2)
        assert ens.errors[0] == pytest.approx(0.25)
        assert ens.votes[0] == pytest.approx(math.log(3))
        share = seen[1] / seen[1].sum()
        assert share[2] == pytest.approx(0.5) and share[[0, 1, 3]] == pytest.approx([1 / 6] * 3)

    def test_resampling_deterministic(self, rng):
        X = rng.random((40, 5))
        y = np.where(X[:, 0] + X[:, 1] > 1, "p", "q").tolist()
        a = train_adaboost(X, y, "resampling", seed=3)
        b = train_adaboost(X, y, "resampling", seed=3)
        assert a.to_dict() == b.to_dict()

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from(["reweighting", "resampling"]))
    def test_training_error_bound(self, seed, variant):
        rng = np.random.default_rng(seed)
        X = rng.random((40, 3))
        y = np.where(X[:, 0] + 0.5 * rng.random(40) > 0.8, "p", "q").tolist()
        assume(len(set(y)) == 2)
        ens = train_adaboost(X, y, variant, rounds=6, seed=seed)
        # no discarded rounds, so the classical bound applies
        assume(len(ens.trees) == 6 or ens.errors[-1] == 0.0)
        err = np.mean(np.array(ens.predict(X)) != np.array(y))
        bound = np.prod([2 * math.sqrt(e * (1 - e)) for e in ens.errors])
        assert err <= bound + 1e-12
        assert all(v > 0 for v in ens.votes)

    def test_needs_two_classes(self):
        with pytest.raises(ValueError):
            train_adaboost([[1], [2]], ["a", "a"])


def leaf(label, n=2):
    counts = np.zeros(2)
    counts[label] = n
    return Node(counts, label)


def stump(attr, thr, left_label, right_label):
    return DecisionTree(Node(np.array([2.0, 2.0]), 0, attr, thr, leaf(left_label), leaf(right_label)), ORDER_CLASSES)


class TestPredictOrder:
    def test_single_leaf(self, rng):
        t = DecisionTree(leaf(1), ORDER_CLASSES)
        for _ in range(5):
            assert predict_order(t, rng.random(18)) == ORDER_CLASSES[1]

    def test_stump(self):
        t = stump(2, 0.5, 1, 0)
        x = np.zeros(18)
        assert predict_order(t, x) == FS_THEN_IS
        x[2] = 0.9
        assert predict_order(t, x) == IS_THEN_FS

    def test_weighted_vote(self):
        trees = [stump(0, 0.5, 1, 1), stump(0, 0.5, 1, 1), stump(0, 0.5, 0, 0)]
        x = np.zeros(18)
        assert predict_order(AdaBoostEnsemble(trees, [1.0, 1.0, 1.0], "reweighting", ORDER_CLASSES), x) == FS_THEN_IS
        assert predict_order(AdaBoostEnsemble(trees, [0.5, 0.5, 2.0], "reweighting", ORDER_CLASSES), x) == IS_THEN_FS
        assert predict_order(AdaBoostEnsemble(trees, [0.5, 0.5, 1.0], "reweighting", ORDER_CLASSES), x) == IS_THEN_FS


def separable_rows(rng, n=60):
    X = rng.random((n, 18)) * 10
    y = np.where(X[:, 4] > 5, FS_THEN_IS, IS_THEN_FS)
    X[:, 4] += np.where(X[:, 4] > 5, 1, -1)
    return X, y.tolist()


class TestCrossValidation:
    def test_partition(self):
        y = ["a"] * 13 + ["b"] * 7
        f = stratified_folds(y, 5, seed=2)
        assert sorted(np.bincount(f).tolist()) == [4] * 5
        for c in "ab":
            per = np.bincount(f[[i for i, v in enumerate(y) if v == c]], minlength=5)
            assert per.max() - per.min() <= 1

    @pytest.mark.parametrize("config", [ClassifierConfig("c45"), ClassifierConfig("adaboost", "resampling"),
                                        ClassifierConfig("adaboost", "reweighting")])
    def test_separable(self, config, rng):
        X, y = separable_rows(rng)
        res = cross_validate(X, y, 10, config, seed=1)
        assert res.accuracy == 1.0 and len(res.models) == 10

    def test_metrics_oracle(self, rng):
        X = rng.random((50, 18))
        y = np.where(X[:, 0] + 0.6 * rng.random(50) > 0.8, FS_THEN_IS, IS_THEN_FS).tolist()
        res = cross_validate(X, y, 5, ClassifierConfig("c45"), seed=4)
        for c in ORDER_CLASSES:
            tp = sum(1 for t, p in zip(y, res.predictions) if t == c and p == c)
            pred = sum(1 for p in res.predictions if p == c)
            true = sum(1 for t in y if t == c)
            P = tp / pred if pred else 0.0
            R = tp / true if true else 0.0
            assert res.metrics.precision[c] == pytest.approx(P)
            assert res.metrics.recall[c] == pytest.approx(R)
            assert res.metrics.f1[c] == pytest.approx(2 * P * R / (P + R) if P + R else 0.0)
        assert res.accuracy == pytest.approx(np.mean(np.array(y) == np.array(res.predictions)))

    def test_leave_one_out(self, rng):
        X = rng.random((12, 18))
        y = np.where(X[:, 3] > 0.5, FS_THEN_IS, IS_THEN_FS).tolist()
        res = cross_validate(X, y, 12, ClassifierConfig("c45"))
        for i in range(12):
            rest = [j for j in range(12) if j != i]
            Xtr, bounds = normalize_attributes(X[rest])
            t = train_c45(Xtr, [y[j] for j in rest], classes=ORDER_CLASSES)
            assert res.predictions[i] == predict_order(t, bounds.apply(X[i])[0])

    def test_absent_class_warning(self, rng):
        X = rng.random((10, 18))
        y = [IS_THEN_FS] * 9 + [FS_THEN_IS]
        with pytest.warns(RuntimeWarning, match="absent"):
            res = cross_validate(X, y, 5, ClassifierConfig("adaboost"))
        assert len(res.warnings) == 1 and len(res.predictions) == 10

    def test_thread_invariant(self, rng):
        X, y = separable_rows(rng, 40)
        cfg = ClassifierConfig("adaboost", "resampling")
        a, b = cross_validate(X, y, 5, cfg, 2, threads=1), cross_validate(X, y, 5, cfg, 2, threads=4)
        assert a.predictions == b.predictions and [m.to_dict() for m in a.models] == [m.to_dict() for m in b.models]

    def test_too_few_rows(self):
        with pytest.raises(ValueError):
            cross_validate(np.zeros((3, 18)), [FS_THEN_IS] * 3, 10)


class TestTopNodes:
    def test_single_tree_omitted(self):
        assert top_node_analysis([stump(2, 0.5, 0, 1)]) == []

    def test_two_trees(self):
        rows = top_node_analysis([stump(2, 0.5, 0, 1), stump(2, 0.1, 1, 0)])
        assert rows == [TopNode(0, 2, "B3", op.ATTRIBUTE_NAMES["B3"])]

    def test_ensemble_members_counted(self):
        ens = AdaBoostEnsemble([stump(17, 0.5, 0, 1)] * 3, [1.0] * 3, "resampling", ORDER_CLASSES)
        rows = top_node_analysis([ens, stump(0, 0.5, 0, 1)])
        assert [(r.level, r.frequency, r.index) for r in rows] == [(0, 3, "D8")]

    def test_levels_and_schema(self):
        deep = DecisionTree(Node(np.ones(2), 0, 0, 0.5, stump(1, 0.5, 0, 1).root, stump(1, 0.2, 1, 0).root), ORDER_CLASSES)
        rows = top_node_analysis([deep, deep])
        assert [(r.level, r.frequency, r.index) for r in rows] == [(0, 2, "B1"), (1, 4, "B2")]
        buf = io.StringIO()
        write_top_nodes(buf, rows)
        assert buf.getvalue().splitlines()[0] == "level,frequency,index,name"


class TestPersistence:
    def test_model_round_trip(self, rng, tmp_path):
        X, y = separable_rows(rng, 30)
        Xn, bounds = normalize_attributes(X)
        for model in (train_c45(Xn, y, classes=ORDER_CLASSES), train_adaboost(Xn, y, "resampling", classes=ORDER_CLASSES)):
            pred = OrderPredictor(model, bounds)
            pred.save(tmp_path / "m.json")
            back = OrderPredictor.load(tmp_path / "m.json")
            assert [back.predict(r) for r in X] == [pred.predict(r) for r in X]

    def test_wrong_format(self):
        with pytest.raises(ValueError, match="expected bugreduce-order-model v1"):
            OrderPredictor.from_dict({"format": "other", "version": 1})

    def test_attribute_table_round_trip(self, rng):
        rows = [DatasetAttributes.from_array(rng.random(18) * 1e3) for _ in range(4)]
        labels = [FS_THEN_IS, IS_THEN_FS, IS_THEN_FS, FS_THEN_IS]
        buf = io.StringIO()
        write_attribute_table(buf, rows, labels)
        buf.seek(0)
        assert read_attribute_table(buf) == (rows, labels)

    def test_attribute_table_bad_header(self):
        with pytest.raises(ValueError, match="header"):
            read_attribute_table(io.StringIO("B1,B2\n1,2\n"))
