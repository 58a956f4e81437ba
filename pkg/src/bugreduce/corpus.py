"""Bug report ingestion and the sparse vector-space corpus.

Reports come in as JSON Lines, get filtered to fixed/duplicate reports of
active developers, and are tokenized into a document-term count matrix
whose rows are labelled with the assigned developer.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

CORPUS_FORMAT = "bugreduce-corpus"
CORPUS_VERSION = 1

_LETTER_RUN = re.compile(r"[A-Za-z]+")


class CorpusError(ValueError):
    """Raised when a corpus cannot be built or loaded."""


@dataclass(frozen=True)
class RawBugReport:
    id: int
    summary: str
    description: str
    status: str
    resolution: str
    assigned_to: str
    reporter: str
    product: str
    component: str
    severity: str
    priority: str
    opened_at: int
    duplicate_of: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ParseError:
    line: int
    message: str


@dataclass(frozen=True)
class FilterPolicy:
    keep_resolutions: frozenset = frozenset({"FIXED", "DUPLICATE"})
    min_fixes_per_developer: int = 10

    def __post_init__(self):
        if self.min_fixes_per_developer < 0:
            raise ValueError("min_fixes_per_developer must be >= 0")
        object.__setattr__(self, "keep_resolutions", frozenset(self.keep_resolutions))


@dataclass(frozen=True)
class DocMeta:
    reporter: str
    product: str
    component: str
    severity: str
    priority: str
    opened_at: int
    duplicate_of: int | None = None


@dataclass(frozen=True)
class AuditEntry:
    bug_id: int
    reason: str


# ---------------------------------------------------------------------------
# parsing and filtering

_REQUIRED = ("id", "summary", "assigned_to", "reporter", "opened_at")
_TEXT_FIELDS = ("description", "status", "resolution", "product", "component", "severity", "priority")


def _report_from_obj(obj) -> RawBugReport:
    if not isinstance(obj, dict):
        raise ValueError("record is not a JSON object")
    missing = [k for k in _REQUIRED if obj.get(k) is None]
    if missing:
        raise ValueError(f"missing required field(s): {', '.join(missing)}")
    bug_id = obj["id"]
    if isinstance(bug_id, bool) or not isinstance(bug_id, int) or bug_id <= 0:
        raise ValueError(f"id must be a positive integer, got {bug_id!r}")
    if not isinstance(obj["summary"], str):
        raise ValueError("summary must be a string")
    for dev_field in ("assigned_to", "reporter"):
        val = obj[dev_field]
        if not isinstance(val, str) or not val.strip():
            raise ValueError(f"{dev_field} must be a non-empty string")
    opened = obj["opened_at"]
    if isinstance(opened, bool) or not isinstance(opened, int):
        raise ValueError("opened_at must be integer epoch seconds")
    texts = {}
    for name in _TEXT_FIELDS:
        val = obj.get(name)
        if val is None:
            val = ""
        if not isinstance(val, str):
            raise ValueError(f"{name} must be a string or null")
        texts[name] = val
    dup = obj.get("duplicate_of")
    if dup is not None and (isinstance(dup, bool) or not isinstance(dup, int) or dup <= 0):
        raise ValueError("duplicate_of must be a positive integer or null")
    return RawBugReport(
        id=bug_id,
        summary=obj["summary"],
        assigned_to=obj["assigned_to"],
        reporter=obj["reporter"],
        opened_at=opened,
        duplicate_of=dup,
        **texts,
    )


def parse_reports(stream: Iterable[str]) -> tuple[list[RawBugReport], list[ParseError]]:
    """Parse JSON Lines bug reports.

    Returns the well-formed reports in file order together with one
    ``ParseError`` per malformed line (1-based line numbers). Blank lines are
    skipped silently.
    """
    reports: list[RawBugReport] = []
    errors: list[ParseError] = []
    seen: set[int] = set()
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            report = _report_from_obj(json.loads(line))
        except (json.JSONDecodeError, ValueError, TypeError) as exc:
            errors.append(ParseError(lineno, str(exc)))
            continue
        if report.id in seen:
            errors.append(ParseError(lineno, f"duplicate id {report.id}"))
            continue
        seen.add(report.id)
        reports.append(report)
    return reports, errors


def read_reports(path: str | Path) -> tuple[list[RawBugReport], list[ParseError]]:
    with open(path, encoding="utf-8") as fh:
        return parse_reports(fh)


def write_reports(reports: Iterable[RawBugReport], fh: IO[str]) -> None:
    for r in reports:
        fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def filter_reports(reports: Sequence[RawBugReport], policy: FilterPolicy = FilterPolicy()) -> list[RawBugReport]:
    """Keep fixed/duplicate reports, then drop developers with too few of them."""
    kept = [r for r in reports if r.resolution in policy.keep_resolutions]
    counts: dict[str, int] = {}
    for r in kept:
        counts[r.assigned_to] = counts.get(r.assigned_to, 0) + 1
    return [r for r in kept if counts[r.assigned_to] >= policy.min_fixes_per_developer]


# ---------------------------------------------------------------------------
# tokenization

def load_stop_list(path: str | Path | None = None) -> frozenset[str]:
    """Load a stop list (one word per line, ``#`` comments). Defaults to SMART."""
    if path is None:
        text = resources.files("bugreduce").joinpath("data/smart_stoplist.txt").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    words = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip().lower()
        if line:
            words.add(line)
    return frozenset(words)


SMART_STOP_WORDS = load_stop_list()


def tokenize(text: str, stop_list: frozenset[str] = SMART_STOP_WORDS) -> dict[str, int]:
    """Split on non-letters, lowercase, drop stop words and 1-letter shards.

    Returns an insertion-ordered word -> count mapping.
    """
    counts: dict[str, int] = {}
    for tok in _LETTER_RUN.findall(text):
        tok = tok.lower()
        if len(tok) < 2 or tok in stop_list:
            continue
        counts[tok] = counts.get(tok, 0) + 1
    return counts


# ---------------------------------------------------------------------------
# corpus

@dataclass
class Corpus:
    """Sparse document-term count matrix with developer labels.

    ``matrix`` is CSR with one row per document and one column per entry of
    ``vocabulary``. Treat instances as immutable; all transforms return new
    corpora.
    """

    vocabulary: list[str]
    matrix: sp.csr_matrix
    labels: list[str]
    bug_ids: list[int]
    meta: list[DocMeta]
    _word_index: dict[str, int] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=np.int64)
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        self.matrix = m
        n_docs = m.shape[0]
        if m.shape[1] != len(self.vocabulary):
            raise CorpusError(f"matrix has {m.shape[1]} columns but vocabulary has {len(self.vocabulary)} words")
        if not (len(self.labels) == len(self.bug_ids) == len(self.meta) == n_docs):
            raise CorpusError("labels, bug_ids and meta must each have one entry per document")
        if m.nnz and m.data.min() < 1:
            raise CorpusError("term frequencies must be positive")

    @property
    def n_docs(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_words(self) -> int:
        return self.matrix.shape[1]

    @property
    def word_index(self) -> dict[str, int]:
        if self._word_index is None:
            self._word_index = {w: i for i, w in enumerate(self.vocabulary)}
        return self._word_index

    def developers(self) -> list[str]:
        return sorted(set(self.labels))

    def doc_counts(self, i: int) -> dict[str, int]:
        row = self.matrix[i]
        return {self.vocabulary[j]: int(c) for j, c in zip(row.indices, row.data)}

    def subset_docs(self, indices: Sequence[int]) -> "Corpus":
        idx = np.asarray(indices, dtype=np.int64)
        return Corpus(
            vocabulary=list(self.vocabulary),
            matrix=self.matrix[idx],
            labels=[self.labels[i] for i in idx],
            bug_ids=[self.bug_ids[i] for i in idx],
            meta=[self.meta[i] for i in idx],
        )

    def subset_words(self, columns: Sequence[int]) -> "Corpus":
        cols = np.asarray(columns, dtype=np.int64)
        return Corpus(
            vocabulary=[self.vocabulary[j] for j in cols],
            matrix=self.matrix[:, cols],
            labels=list(self.labels),
            bug_ids=list(self.bug_ids),
            meta=list(self.meta),
        )

    def project(self, vocabulary: Sequence[str]) -> "Corpus":
        """Re-express documents over another vocabulary; unknown words are dropped."""
        target = {w: i for i, w in enumerate(vocabulary)}
        mapping = np.array([target.get(w, -1) for w in self.vocabulary], dtype=np.int64)
        coo = self.matrix.tocoo()
        new_cols = mapping[coo.col] if coo.nnz else np.empty(0, dtype=np.int64)
        keep = new_cols >= 0
        mat = sp.csr_matrix(
            (coo.data[keep], (coo.row[keep], new_cols[keep])),
            shape=(self.n_docs, len(vocabulary)),
        )
        return Corpus(list(vocabulary), mat, list(self.labels), list(self.bug_ids), list(self.meta))

    def drop_blank(self) -> tuple["Corpus", list[int]]:
        """Remove zero-word documents; return the corpus and removed bug ids."""
        lengths = np.diff(self.matrix.indptr)
        blank = np.flatnonzero(lengths == 0)
        if len(blank) == 0:
            return self, []
        keep = np.flatnonzero(lengths > 0)
        return self.subset_docs(keep), [self.bug_ids[i] for i in blank]

    # serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        rows = []
        for i in range(self.n_docs):
            s, e = self.matrix.indptr[i], self.matrix.indptr[i + 1]
            rows.append([self.matrix.indices[s:e].tolist(), self.matrix.data[s:e].tolist()])
        return {
            "format": CORPUS_FORMAT,
            "version": CORPUS_VERSION,
            "vocabulary": self.vocabulary,
            "bug_ids": self.bug_ids,
            "labels": self.labels,
            "meta": [asdict(m) for m in self.meta],
            "rows": rows,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Corpus":
        if obj.get("format") != CORPUS_FORMAT:
            raise CorpusError(f"not a corpus file (format={obj.get('format')!r})")
        if obj.get("version") != CORPUS_VERSION:
            raise CorpusError(f"unsupported corpus version {obj.get('version')!r}, expected {CORPUS_VERSION}")
        n = len(obj["vocabulary"])
        indptr = [0]
        indices: list[int] = []
        data: list[int] = []
        for cols, counts in obj["rows"]:
            indices.extend(cols)
            data.extend(counts)
            indptr.append(len(indices))
        mat = sp.csr_matrix(
            (np.array(data, dtype=np.int64), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
            shape=(len(obj["rows"]), n),
        )
        return cls(
            vocabulary=list(obj["vocabulary"]),
            matrix=mat,
            labels=list(obj["labels"]),
            bug_ids=[int(b) for b in obj["bug_ids"]],
            meta=[DocMeta(**m) for m in obj["meta"]],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Corpus":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_corpus(
    reports: Sequence[RawBugReport],
    stop_list: frozenset[str] = SMART_STOP_WORDS,
    audit: list[AuditEntry] | None = None,
) -> Corpus:
    """Tokenize summary + description of every report into a count matrix.

    Columns follow first-appearance order. Reports with no surviving token
    are skipped and, if ``audit`` is given, recorded there.
    """
    vocab: dict[str, int] = {}
    indptr = [0]
    indices: list[int] = []
    data: list[int] = []
    labels, ids, meta = [], [], []
    for r in reports:
        counts = tokenize(r.summary + "\n" + r.description, stop_list)
        if not counts:
            if audit is not None:
                audit.append(AuditEntry(r.id, "empty after tokenization"))
            continue
        for word, c in counts.items():
            col = vocab.setdefault(word, len(vocab))
            indices.append(col)
            data.append(c)
        indptr.append(len(indices))
        labels.append(r.assigned_to)
        ids.append(r.id)
        meta.append(DocMeta(r.reporter, r.product, r.component, r.severity, r.priority, r.opened_at, r.duplicate_of))
    if not labels:
        raise CorpusError("empty corpus")
    mat = sp.csr_matrix(
        (np.array(data, dtype=np.int64), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(len(labels), len(vocab)),
    )
    return Corpus(list(vocab), mat, labels, ids, meta)


def chronological_split(corpus: Corpus, train_fraction: float = 0.8) -> tuple[Corpus, Corpus]:
    """Oldest ``floor(fraction * m)`` reports train, the rest test.

    Documents are stably sorted by ``opened_at`` first. The train vocabulary
    keeps only words that occur in training documents; the test corpus is
    projected onto it.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    order = sorted(range(corpus.n_docs), key=lambda i: corpus.meta[i].opened_at)
    n_train = int(math.floor(train_fraction * corpus.n_docs))
    train = corpus.subset_docs(order[:n_train])
    test = corpus.subset_docs(order[n_train:])
    used = np.flatnonzero(np.asarray(train.matrix.sum(axis=0)).ravel() > 0)
    train = train.subset_words(used)
    return train, test.project(train.vocabulary)


def write_audit(entries: Iterable[AuditEntry], fh: IO[str]) -> None:
    for e in entries:
        fh.write(json.dumps({"bug_id": e.bug_id, "reason": e.reason}) + "\n")


# ---------------------------------------------------------------------------
# synthetic data

_SEVERITIES = ["blocker", "critical", "major", "normal", "minor", "trivial", "enhancement"]
_SEVERITY_P = [0.02, 0.05, 0.15, 0.6, 0.1, 0.03, 0.05]
_PRIORITIES = ["P1", "P2", "P3", "P4", "P5"]
_PRIORITY_P = [0.05, 0.15, 0.65, 0.1, 0.05]
_PRODUCTS = ["Platform", "JDT", "PDE", "CDT", "WTP"]


def _letters(n: int) -> str:
    """Bijective base-26 spelling of a non-negative integer (0 -> 'a')."""
    out = []
    n += 1
    while n:
        n, r = divmod(n - 1, 26)
        out.append(chr(ord("a") + r))
    return "".join(reversed(out))


def generate_synthetic_corpus(
    seed: int,
    n_classes: int,
    docs_per_class: int,
    vocab_per_class: int,
    noise_rate: float,
    *,
    noise_vocab: int = 30,
    duplicate_rate: float = 0.0,
    doc_length: tuple[int, int] = (2, 12),
    n_reporters: int | None = None,
) -> list[RawBugReport]:
    """Seeded reports with one disjoint signature vocabulary per developer.

    Each token is a shared noise word with probability ``noise_rate`` and a
    word from the developer's signature vocabulary otherwise; within either
    vocabulary the j-th word is drawn with probability proportional to 1/j. With
    ``duplicate_rate`` > 0 some reports copy an earlier report of the same
    developer and point at it through ``duplicate_of``.
    """
    if n_classes <= 0 or vocab_per_class <= 0 or docs_per_class < 0:
        raise ValueError("n_classes and vocab_per_class must be positive, docs_per_class >= 0")
    if not 0.0 <= noise_rate <= 1.0 or not 0.0 <= duplicate_rate <= 1.0:
        raise ValueError("noise_rate and duplicate_rate must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    devs = [f"dev{_letters(c)}@example.org" for c in range(n_classes)]
    signature = [[f"zq{_letters(c)}w{_letters(j)}" for j in range(vocab_per_class)] for c in range(n_classes)]
    noise = [f"nz{_letters(j)}" for j in range(max(noise_vocab, 1))]
    n_reporters = n_reporters or max(2, n_classes + n_classes // 2)
    # a few developers also report bugs so fixer/reporter sets overlap
    reporters = devs[: max(1, n_classes // 2)] + [f"user{_letters(i)}@example.org" for i in range(n_reporters)]
    reporter_p = 1.0 / np.arange(1, len(reporters) + 1)
    reporter_p /= reporter_p.sum()
    comp_of = [f"comp{_letters(c % 7)}" for c in range(n_classes)]
    prod_of = [_PRODUCTS[c % len(_PRODUCTS)] for c in range(n_classes)]

    # Zipf-like word frequencies within each vocabulary, as in natural text
    sig_p = 1.0 / np.arange(1, vocab_per_class + 1)
    sig_p /= sig_p.sum()
    noise_p = 1.0 / np.arange(1, len(noise) + 1)
    noise_p /= noise_p.sum()

    slots = np.repeat(np.arange(n_classes), docs_per_class)
    rng.shuffle(slots)
    lo, hi = doc_length
    history: dict[int, list[tuple[int, str, str]]] = {}
    reports = []
    t0 = 1_200_000_000
    for i, c in enumerate(slots.tolist()):
        bug_id = i + 1
        dup_of = None
        if duplicate_rate and history.get(c) and rng.random() < duplicate_rate:
            j = int(rng.integers(len(history[c])))
            dup_of, summary, description = history[c][j]
        else:
            length = int(rng.integers(lo, hi + 1))
            is_noise = rng.random(length) < noise_rate
            sig_pick = rng.choice(vocab_per_class, size=length, p=sig_p)
            noise_pick = rng.choice(len(noise), size=length, p=noise_p)
            toks = [noise[n] if flag else signature[c][s] for flag, s, n in zip(is_noise, sig_pick, noise_pick)]
            cut = min(3, length)
            summary, description = " ".join(toks[:cut]), " ".join(toks[cut:])
            history.setdefault(c, []).append((bug_id, summary, description))
        reports.append(
            RawBugReport(
                id=bug_id,
                summary=summary,
                description=description,
                status="RESOLVED",
                resolution="DUPLICATE" if dup_of is not None else "FIXED",
                assigned_to=devs[c],
                reporter=reporters[int(rng.choice(len(reporters), p=reporter_p))],
                product=prod_of[c],
                component=comp_of[c] if rng.random() < 0.8 else comp_of[(c + 1) % n_classes],
                severity=_SEVERITIES[int(rng.choice(len(_SEVERITIES), p=_SEVERITY_P))],
                priority=_PRIORITIES[int(rng.choice(len(_PRIORITIES), p=_PRIORITY_P))],
                opened_at=t0 + 3600 * i + int(rng.integers(0, 1800)),
                duplicate_of=dup_of,
            )
        )
    return reports
