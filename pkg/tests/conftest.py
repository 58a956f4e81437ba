import numpy as np
import pytest
import scipy.sparse as sp

from bugreduce.corpus import Corpus, DocMeta, RawBugReport


def make_report(bug_id, summary="", description="", dev="alice", resolution="FIXED", **kw):
    fields = dict(
        id=bug_id,
        summary=summary,
        description=description,
        status="RESOLVED",
        resolution=resolution,
        assigned_to=dev,
        reporter=kw.pop("reporter", "rep"),
        product=kw.pop("product", "P"),
        component=kw.pop("component", "C"),
        severity=kw.pop("severity", "normal"),
        priority=kw.pop("priority", "P3"),
        opened_at=kw.pop("opened_at", 1000 + bug_id),
        duplicate_of=kw.pop("duplicate_of", None),
    )
    assert not kw, kw
    return RawBugReport(**fields)


def make_corpus(dense, labels, vocabulary=None, meta=None, bug_ids=None):
    """Corpus from a dense count array; vocabulary defaults to w0, w1, ..."""
    X = np.asarray(dense, dtype=np.int64)
    m, n = X.shape
    vocabulary = vocabulary or [f"w{j}" for j in range(n)]
    bug_ids = bug_ids or list(range(1, m + 1))
    meta = meta or [DocMeta("rep", "P", "C", "normal", "P3", 1000 + i) for i in range(m)]
    return Corpus(list(vocabulary), sp.csr_matrix(X), list(labels), list(bug_ids), list(meta))


def random_corpus(rng, max_docs=50, max_words=30, n_classes=None, density=0.3):
    """Random small corpus with at least two classes and no blank rows."""
    m = int(rng.integers(4, max_docs + 1))
    n = int(rng.integers(2, max_words + 1))
    k = n_classes or int(rng.integers(2, 5))
    X = (rng.random((m, n)) < density) * rng.integers(1, 4, size=(m, n))
    for i in np.flatnonzero(X.sum(axis=1) == 0):
        X[i, rng.integers(n)] = 1
    labels = [f"d{i % k}" for i in range(m)]
    rng.shuffle(labels)
    return make_corpus(X, labels)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria register here and get one summary line each
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {status} {detail}")
