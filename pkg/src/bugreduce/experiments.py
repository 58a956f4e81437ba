"""Config-driven experiment runner producing CSV tables and a JSON manifest.

Tables are pure functions of (input data, config, seed). Wall-clock timings
go to ``timing.csv`` and the manifest only, so reruns give byte-identical
tables.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from . import __version__
from .classifiers import train_classifier
from .corpus import (
    Corpus,
    CorpusError,
    FilterPolicy,
    build_corpus,
    chronological_split,
    filter_reports,
    generate_synthetic_corpus,
    read_reports,
)
from .evaluation import loss_k, top_s_developer_subset
from .feature_selection import FS_ALGORITHMS, score_words, select_top_words
from .instance_selection import IS_ALGORITHMS, reduce_instances
from .order_prediction import (
    ORDER_CLASSES,
    ClassifierConfig,
    OrderPredictor,
    cross_validate,
    enumerate_window_datasets,
    extract_attributes,
    label_reduction_order,
    normalize_attributes,
    read_attribute_table,
    split_bug_units,
    top_node_analysis,
    train_order_model,
    write_attribute_table,
    write_top_nodes,
)
from .parallel import parallel_map
from .pipeline import (
    FS_THEN_IS,
    IS_THEN_FS,
    ORDERS,
    ReductionPlan,
    evaluate_corpus,
    order_arrow,
    parse_order,
    reduce,
    target_size,
)

TASKS = ("rate_sweep", "algorithm_matrix", "order_comparison", "loss_curve", "timing", "order_cv", "top_nodes")
SWEEP_BUG_RATES = (0.3, 0.5, 0.7)
SWEEP_WORD_RATES = (0.1, 0.3, 0.5)
MANIFEST_FORMAT = "bugreduce-manifest"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def _str_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _int_list(text: str) -> list[int]:
    out = []
    for part in _str_list(text):
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _rate(text: str) -> float:
    v = float(text)
    if not 0.0 < v <= 1.0:
        raise ValueError("must lie in (0, 1]")
    return v


def _pos_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise ValueError("must be >= 1")
    return v


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text
    return parse


def _tasks(text: str) -> list[str]:
    tasks = _str_list(text)
    bad = [t for t in tasks if t not in TASKS]
    if bad:
        raise ValueError(f"unknown task(s) {bad}; known: {', '.join(TASKS)}")
    return tasks


def _fs(text: str) -> str:
    return _choice(*FS_ALGORITHMS)(text.upper())


def _is(text: str) -> str:
    return _choice(*IS_ALGORITHMS)(text.upper())


def _order(text: str) -> str:
    return parse_order(text)


# key -> (parser, default text)
CONFIG_KEYS: dict[str, tuple[Callable[[str], Any], str]] = {
    "seed": (int, "0"),
    "corpus.path": (str, ""),
    "corpus.min_fixes": (int, "10"),
    "synth.classes": (_pos_int, "6"),
    "synth.docs_per_class": (_pos_int, "30"),
    "synth.vocab_per_class": (_pos_int, "12"),
    "synth.noise_rate": (float, "0.3"),
    "synth.noise_vocab": (_pos_int, "30"),
    "synth.duplicate_rate": (float, "0.1"),
    "reduce.order": (_order, "FS_then_IS"),
    "reduce.fs": (_fs, "CH"),
    "reduce.is": (_is, "ICF"),
    "reduce.word_rate": (_rate, "0.3"),
    "reduce.bug_rate": (_rate, "0.5"),
    "triage.classifier": (_choice("nb", "knn", "svm"), "nb"),
    "triage.classifiers": (_str_list, "svm,knn,nb"),
    "triage.k_max": (_pos_int, "5"),
    "loss.s": (_int_list, "2..10"),
    "order.folds": (_pos_int, "10"),
    "order.variant": (_choice("reweighting", "resampling"), "reweighting"),
    "order.rounds": (_pos_int, "10"),
    "order.unit_size": (_pos_int, "5000"),
    "order.max_window": (_pos_int, "5"),
    "order.attributes": (str, ""),
    "experiment.tasks": (_tasks, ",".join(TASKS)),
    "output.dir": (str, "bugreduce-out"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict[str, Any]
    raw: dict[str, str]

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def canonical_text(self) -> str:
        return "".join(f"{k} = {self.raw[k]}\n" for k in sorted(self.raw))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        raw[key] = value
    return raw


def load_config(path: str | Path | None = None, overrides: dict[str, str] | None = None,
                base_dir: Path | None = None) -> ExperimentConfig:
    raw: dict[str, str] = {}
    source = "<overrides>"
    if path is not None:
        path = Path(path)
        source = str(path)
        raw.update(parse_config_text(path.read_text(encoding="utf-8"), source))
        base_dir = base_dir or path.parent
    raw.update(overrides or {})
    merged = {k: d for k, (_, d) in CONFIG_KEYS.items()}
    for key, value in raw.items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{source}: {key}: unknown config key")
        merged[key] = value
    values = {}
    for key, text in merged.items():
        try:
            values[key] = CONFIG_KEYS[key][0](text)
        except ValueError as exc:
            raise ConfigError(f"{source}: {key}: invalid value {text!r} ({exc})") from None
    if values["corpus.path"] and base_dir is not None and not Path(values["corpus.path"]).is_absolute():
        values["corpus.path"] = str(base_dir / values["corpus.path"])
    if values["order.attributes"] and base_dir is not None and not Path(values["order.attributes"]).is_absolute():
        values["order.attributes"] = str(base_dir / values["order.attributes"])
    for c in values["triage.classifiers"]:
        if c not in ("nb", "knn", "svm"):
            raise ConfigError(f"{source}: triage.classifiers: unknown classifier {c!r}")
    if min(values["loss.s"], default=2) < 2:
        raise ConfigError(f"{source}: loss.s: every s must be >= 2")
    return ExperimentConfig(values, merged)


def bundled_config_path() -> Path:
    return Path(__file__).with_name("data") / "desk.conf"


# ---------------------------------------------------------------------------
# helpers

def _load_reports(cfg: ExperimentConfig):
    if cfg["corpus.path"]:
        reports, errors = read_reports(cfg["corpus.path"])
        if errors:
            first = errors[0]
            raise CorpusError(f"{cfg['corpus.path']}:{first.line}: {first.message}")
    else:
        reports = generate_synthetic_corpus(
            cfg["seed"], cfg["synth.classes"], cfg["synth.docs_per_class"], cfg["synth.vocab_per_class"],
            cfg["synth.noise_rate"], noise_vocab=cfg["synth.noise_vocab"], duplicate_rate=cfg["synth.duplicate_rate"],
        )
    policy = FilterPolicy(min_fixes_per_developer=cfg["corpus.min_fixes"])
    return sorted(filter_reports(reports, policy), key=lambda r: r.id)


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def _is_only(train: Corpus, algorithm: str, rate: float, seed: int, threads: int) -> Corpus:
    res = reduce_instances(train, algorithm, target_size(rate, train.n_docs), seed=seed, threads=threads)
    return train.subset_docs(res.kept)


def _fs_only(train: Corpus, algorithm: str, rate: float, seed: int, threads: int) -> Corpus:
    scores = score_words(train, algorithm, seed=seed, threads=threads)
    return select_top_words(train, scores, target_size(rate, train.n_words))[0]


def _plan(cfg: ExperimentConfig, **changes) -> ReductionPlan:
    args = dict(order=cfg["reduce.order"], fs_algorithm=cfg["reduce.fs"], is_algorithm=cfg["reduce.is"],
                word_rate=cfg["reduce.word_rate"], bug_rate=cfg["reduce.bug_rate"], seed=cfg["seed"])
    args.update(changes)
    return ReductionPlan(**args)


# ---------------------------------------------------------------------------
# tasks; each returns {file name: csv text}

def task_rate_sweep(ctx) -> dict[str, str]:
    cfg, train, test = ctx.cfg, ctx.train, ctx.test
    k_max, clf = cfg["triage.k_max"], cfg["triage.classifier"]
    cells = [(b, w) for b in SWEEP_BUG_RATES for w in SWEEP_WORD_RATES]

    def run(cell):
        b, w = cell
        red = reduce(train, _plan(cfg, bug_rate=b, word_rate=w))
        return evaluate_corpus(red.corpus, test, clf, k_max, cfg["seed"])

    rows = []
    origin = evaluate_corpus(train, test, clf, k_max, cfg["seed"])
    for (b, w), curve in [((1.0, 1.0), origin)] + list(zip(cells, parallel_map(run, cells, ctx.threads))):
        for k in range(1, k_max + 1):
            rows.append([cfg["reduce.fs"], cfg["reduce.is"], order_arrow(cfg["reduce.order"]), b, w, k,
                         curve.correct[k - 1], curve.total, _fmt(curve.at(k))])
    header = ["fs", "is", "order", "bug_rate", "word_rate", "k", "correct", "total", "accuracy"]
    return {"rate_sweep.csv": _csv_text(header, rows)}


def task_algorithm_matrix(ctx) -> dict[str, str]:
    cfg, train, test = ctx.cfg, ctx.train, ctx.test
    k_max, clf, seed = cfg["triage.k_max"], cfg["triage.classifier"], cfg["seed"]
    cells = [("origin", None)] + [("IS", a) for a in IS_ALGORITHMS] + [("FS", a) for a in FS_ALGORITHMS]

    def run(cell):
        kind, alg = cell
        if kind == "origin":
            data = train
        elif kind == "IS":
            data = _is_only(train, alg, cfg["reduce.bug_rate"], seed, 1)
        else:
            data = _fs_only(train, alg, cfg["reduce.word_rate"], seed, 1)
        return evaluate_corpus(data, test, clf, k_max, seed)

    curves = parallel_map(run, cells, ctx.threads)
    header = ["k", "Origin"] + [f"IS:{a}" for a in IS_ALGORITHMS] + [f"FS:{a}" for a in FS_ALGORITHMS]
    rows = [[k] + [_fmt(c.at(k)) for c in curves] for k in range(1, k_max + 1)]
    return {"algorithm_matrix.csv": _csv_text(header, rows)}


def task_order_comparison(ctx) -> dict[str, str]:
    cfg, train, test = ctx.cfg, ctx.train, ctx.test
    k_max, seed = cfg["triage.k_max"], cfg["seed"]
    reduced = {o: ctx.reduced(o) for o in ORDERS}
    cells = [(c, data) for c in cfg["triage.classifiers"] for data in ("origin",) + ORDERS]

    def run(cell):
        clf, data = cell
        corpus = train if data == "origin" else reduced[data].corpus
        return evaluate_corpus(corpus, test, clf, k_max, seed)

    curves = dict(zip(cells, parallel_map(run, cells, ctx.threads)))
    header = ["k"]
    for c in cfg["triage.classifiers"]:
        header += [f"{c}:Origin", f"{c}:FS->IS", f"{c}:IS->FS", f"{c}:winner"]
    rows = []
    for k in range(1, k_max + 1):
        row: list = [k]
        for c in cfg["triage.classifiers"]:
            a, b = curves[(c, FS_THEN_IS)].correct[k - 1], curves[(c, IS_THEN_FS)].correct[k - 1]
            winner = "FS->IS" if a > b else "IS->FS" if b > a else "tie"
            row += [_fmt(curves[(c, "origin")].at(k)), _fmt(curves[(c, FS_THEN_IS)].at(k)),
                    _fmt(curves[(c, IS_THEN_FS)].at(k)), winner]
        rows.append(row)
    audit_rows = []
    for o in ORDERS:
        rep = reduced[o].report(include_timing=False)
        a = rep["audit"]
        audit_rows.append([order_arrow(o), rep["final"]["docs"], rep["final"]["words"], a["removed_words"],
                           a["removed_instances"], a["blank_reports"], a["duplicates_removed"], reduced[o].hit_target])
    audit_header = ["order", "docs", "words", "removed_words", "removed_instances", "blank_reports",
                    "duplicates_removed", "hit_target"]
    return {"order_comparison.csv": _csv_text(header, rows), "reduction_audit.csv": _csv_text(audit_header, audit_rows)}


def task_loss_curve(ctx) -> dict[str, str]:
    cfg, train, test = ctx.cfg, ctx.train, ctx.test
    k_max, clf, seed = cfg["triage.k_max"], cfg["triage.classifier"], cfg["seed"]

    def run(s):
        sub = top_s_developer_subset(train, s)
        devs = set(sub.labels)
        keep = [i for i, l in enumerate(test.labels) if l in devs]
        if not keep:
            return None
        sub_test = test.subset_docs(keep)
        origin = evaluate_corpus(sub, sub_test, clf, k_max, seed)
        reduced = evaluate_corpus(_is_only(sub, cfg["reduce.is"], cfg["reduce.bug_rate"], seed, 1), sub_test, clf,
                                  k_max, seed)
        return origin, reduced

    rows = []
    for s, res in zip(cfg["loss.s"], parallel_map(run, cfg["loss.s"], ctx.threads)):
        if res is None:
            continue
        origin, red = res
        for k in range(1, k_max + 1):
            o, r = origin.at(k), red.at(k)
            loss = _fmt(loss_k(o, r)) if o > 0 else "nan"
            rows.append([s, k, _fmt(o), _fmt(r), loss])
    return {"loss_curve.csv": _csv_text(["s", "k", "origin", "reduced", "loss"], rows)}


def task_timing(ctx) -> dict[str, str]:
    """Wall-clock per stage; this table is the only non-deterministic output."""
    cfg = ctx.cfg
    k_max, clf, seed = cfg["triage.k_max"], cfg["triage.classifier"], cfg["seed"]
    rows = []
    for label in ("Origin",) + ORDERS:
        t0 = time.perf_counter()
        corpus = build_corpus(ctx.reports)
        train, test = chronological_split(corpus, 0.8)
        t_pre = time.perf_counter() - t0
        t_red = 0.0
        if label != "Origin":
            t1 = time.perf_counter()
            train = reduce(train, _plan(cfg, order=label)).corpus
            t_red = time.perf_counter() - t1
        t2 = time.perf_counter()
        evaluate_corpus(train, test, clf, k_max, seed)
        t_clf = time.perf_counter() - t2
        name = label if label == "Origin" else order_arrow(label)
        rows.append([name, _fmt(t_pre), _fmt(t_red), _fmt(t_clf), _fmt(t_pre + t_red + t_clf)])
    return {"timing.csv": _csv_text(["data", "preprocessing", "data_reduction", "classification", "sum"], rows)}


def _order_rows(ctx):
    """Attribute rows and labels, from a table on disk or built from bug-unit windows."""
    cfg = ctx.cfg
    if cfg["order.attributes"]:
        with open(cfg["order.attributes"], encoding="utf-8", newline="") as fh:
            return read_attribute_table(fh)
    units = split_bug_units(ctx.reports, cfg["order.unit_size"])
    datasets = enumerate_window_datasets(units, min(cfg["order.max_window"], len(units)))

    def run(reports):
        corpus = build_corpus(reports)
        label, _ = label_reduction_order(corpus, cfg["reduce.fs"], cfg["reduce.is"], cfg["triage.classifier"],
                                         cfg["triage.k_max"], cfg["reduce.word_rate"], cfg["reduce.bug_rate"],
                                         cfg["seed"])
        return extract_attributes(corpus), label

    out = parallel_map(run, datasets, ctx.threads)
    return [a for a, _ in out], [l for _, l in out]


def _order_configs(cfg) -> list[ClassifierConfig]:
    return [ClassifierConfig("c45"), ClassifierConfig("adaboost", "resampling", cfg["order.rounds"]),
            ClassifierConfig("adaboost", "reweighting", cfg["order.rounds"])]


def task_order_cv(ctx) -> dict[str, str]:
    cfg = ctx.cfg
    rows, labels = ctx.order_rows()
    X = [r.as_array() for r in rows]
    out_rows = []
    for conf in _order_configs(cfg):
        res = ctx.order_cv(conf, X, labels)
        m = res.metrics
        row = [conf.name]
        for c in ORDER_CLASSES:
            row += [_fmt(m.precision[c]), _fmt(m.recall[c]), _fmt(m.f1[c])]
        out_rows.append(row + [_fmt(m.accuracy)])
    header = ["classifier"]
    for c in ORDER_CLASSES:
        a = order_arrow(c)
        header += [f"{a}:precision", f"{a}:recall", f"{a}:f1"]
    header.append("accuracy")
    buf = io.StringIO()
    write_attribute_table(buf, rows, labels)
    final_conf = ClassifierConfig("adaboost", cfg["order.variant"], cfg["order.rounds"])
    Xn, bounds = normalize_attributes(rows)
    model = train_order_model(Xn, labels, final_conf, cfg["seed"]) if len(set(labels)) > 1 else \
        train_order_model(Xn, labels, ClassifierConfig("c45"), cfg["seed"])
    ctx.artifacts["order_model.json"] = json.dumps(OrderPredictor(model, bounds).to_dict(), indent=1,
                                                   sort_keys=True) + "\n"
    return {"order_attributes.csv": buf.getvalue(), "order_cv.csv": _csv_text(header, out_rows)}


def task_top_nodes(ctx) -> dict[str, str]:
    cfg = ctx.cfg
    rows, labels = ctx.order_rows()
    X = [r.as_array() for r in rows]
    res = ctx.order_cv(ClassifierConfig("adaboost", cfg["order.variant"], cfg["order.rounds"]), X, labels)
    buf = io.StringIO()
    write_top_nodes(buf, top_node_analysis(res.models, max_level=2))
    return {"top_nodes.csv": buf.getvalue()}


TASK_FUNCS = {
    "rate_sweep": task_rate_sweep,
    "algorithm_matrix": task_algorithm_matrix,
    "order_comparison": task_order_comparison,
    "loss_curve": task_loss_curve,
    "timing": task_timing,
    "order_cv": task_order_cv,
    "top_nodes": task_top_nodes,
}


class _Context:
    def __init__(self, cfg: ExperimentConfig, threads: int):
        self.cfg = cfg
        self.threads = threads
        self.reports = _load_reports(cfg)
        corpus = build_corpus(self.reports)
        self.corpus = corpus
        self.train, self.test = chronological_split(corpus, 0.8)
        self.artifacts: dict[str, str] = {}
        self._reduced: dict = {}
        self._rows = None
        self._cv: dict = {}

    def reduced(self, order: str):
        if order not in self._reduced:
            self._reduced[order] = reduce(self.train, _plan(self.cfg, order=order), self.threads)
        return self._reduced[order]

    def order_rows(self):
        if self._rows is None:
            self._rows = _order_rows(self)
        return self._rows

    def order_cv(self, conf: ClassifierConfig, X, labels):
        if conf not in self._cv:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                self._cv[conf] = cross_validate(X, labels, self.cfg["order.folds"], conf, self.cfg["seed"],
                                                threads=self.threads)
        return self._cv[conf]


@dataclass
class ExperimentResult:
    out_dir: Path
    tables: dict[str, str]
    manifest: dict


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None, threads: int = 1) -> ExperimentResult:
    """Run every configured task and write tables, artifacts and ``manifest.json``."""
    out = Path(out_dir if out_dir is not None else cfg["output.dir"])
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    ctx = _Context(cfg, threads)
    timings["load"] = time.perf_counter() - t0

    tables: dict[str, str] = {}
    for task in cfg["experiment.tasks"]:
        t = time.perf_counter()
        tables.update(TASK_FUNCS[task](ctx))
        timings[task] = time.perf_counter() - t

    # reduced corpora and the triage model trained on the configured reduction
    artifacts = dict(ctx.artifacts)
    for o in ORDERS:
        artifacts[f"reduced_{o}.json"] = json.dumps(ctx.reduced(o).corpus.to_dict(), sort_keys=True,
                                                    separators=(",", ":")) + "\n"
    model = train_classifier(cfg["triage.classifier"], ctx.reduced(cfg["reduce.order"]).corpus, seed=cfg["seed"])
    artifacts["triage_model.json"] = json.dumps(model.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"

    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, text in {**tables, **artifacts}.items():
        (out / name).write_text(text, encoding="utf-8")
        files[name] = {
            "sha256": hashlib.sha256(text.encode("utf-8")).hexdigest(),
            "deterministic": name != "timing.csv",
        }
    (out / "config.conf").write_text(cfg.canonical_text(), encoding="utf-8")
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": 1,
        "package_version": __version__,
        "seed": cfg["seed"],
        "config_hash": cfg.hash,
        "tasks": list(cfg["experiment.tasks"]),
        "corpus": {"reports": len(ctx.reports), "train_docs": ctx.train.n_docs, "test_docs": ctx.test.n_docs,
                   "words": ctx.train.n_words, "developers": len(ctx.corpus.developers())},
        "files": files,
        "timings_seconds": timings,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return ExperimentResult(out, tables, manifest)


def validate_manifest(out_dir: str | Path) -> list[str]:
    """Problems found when checking a run directory against its manifest (empty if valid)."""
    out = Path(out_dir)
    problems = []
    try:
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        return [f"manifest.json: {exc}"]
    for key in ("format", "version", "seed", "config_hash", "tasks", "files", "timings_seconds"):
        if key not in manifest:
            problems.append(f"manifest.json: missing key {key!r}")
    if manifest.get("format") != MANIFEST_FORMAT:
        problems.append(f"manifest.json: format {manifest.get('format')!r} != {MANIFEST_FORMAT!r}")
    for name, info in manifest.get("files", {}).items():
        path = out / name
        if not path.exists():
            problems.append(f"{name}: missing")
            continue
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        if digest != info.get("sha256"):
            problems.append(f"{name}: checksum mismatch")
    return problems


__all__ = ["ConfigError", "ExperimentConfig", "load_config", "run_experiment", "validate_manifest", "TASKS",
           "bundled_config_path", "CONFIG_KEYS"]
