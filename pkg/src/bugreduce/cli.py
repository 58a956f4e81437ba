"""``bugreduce`` command line: one subcommand per pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
violation. Machine-readable output goes to files or stdout, human summaries
to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings
from pathlib import Path

from . import __version__
from .classifiers import TrainingError, load_model, recommend_corpus, train_classifier
from .corpus import (
    AuditEntry,
    Corpus,
    CorpusError,
    FilterPolicy,
    build_corpus,
    chronological_split,
    filter_reports,
    generate_synthetic_corpus,
    load_stop_list,
    read_reports,
    write_audit,
    write_reports,
)
from .evaluation import accuracy_curve
from .experiments import ConfigError, bundled_config_path, load_config, run_experiment, validate_manifest
from .order_prediction import (
    ORDER_CLASSES,
    AdaBoostEnsemble,
    ClassifierConfig,
    OrderPredictor,
    cross_validate,
    enumerate_window_datasets,
    extract_attributes,
    label_reduction_order,
    normalize_attributes,
    read_attribute_table,
    split_bug_units,
    train_order_model,
    write_attribute_table,
)
from .parallel import default_threads, parallel_map
from .pipeline import ReductionPlan, order_arrow, reduce

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
CONFIG_ENV = "BUGREDUCE_CONFIG"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _info(msg: str) -> None:
    print(msg, file=sys.stderr)


def _rate(text: str) -> float:
    v = float(text)
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError(f"rate must lie in (0, 1], got {text}")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _load_corpus(path: str) -> Corpus:
    try:
        return Corpus.load(path)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not JSON ({exc})") from None
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: corpus schema mismatch (missing or malformed field {exc})") from None


def _open_out(path: str | None):
    if path in (None, "-"):
        return _NoClose(sys.stdout)
    return open(path, "w", encoding="utf-8", newline="")


class _NoClose:
    def __init__(self, fh):
        self.fh = fh

    def __enter__(self):
        return self.fh

    def __exit__(self, *exc):
        self.fh.flush()


# ---------------------------------------------------------------------------
# subcommands

def cmd_ingest(args) -> int:
    reports, errors = read_reports(args.input)
    audit: list[AuditEntry] = []
    for e in errors:
        _info(f"{args.input}:{e.line}: {e.message}")
    keep = frozenset(s.strip() for s in args.keep_resolutions.split(",") if s.strip())
    policy = FilterPolicy(keep_resolutions=keep, min_fixes_per_developer=args.min_fixes)
    kept = filter_reports(reports, policy)
    kept_ids = {r.id for r in kept}
    for r in reports:
        if r.id in kept_ids:
            continue
        if r.resolution not in keep:
            audit.append(AuditEntry(r.id, f"resolution {r.resolution!r} not kept"))
        else:
            audit.append(AuditEntry(r.id, f"developer fixed fewer than {args.min_fixes} bugs"))
    stop = load_stop_list(args.stop_list) if args.stop_list else load_stop_list()
    try:
        corpus = build_corpus(kept, stop, audit)
    finally:
        if args.audit:
            with open(args.audit, "w", encoding="utf-8") as fh:
                write_audit(audit, fh)
    corpus.save(args.output)
    _info(f"reports={corpus.n_docs}, words={corpus.n_words}, developers={len(corpus.developers())}")
    if errors:
        _info(f"{len(errors)} malformed line(s) skipped")
    return EXIT_OK


def cmd_synth(args) -> int:
    reports = generate_synthetic_corpus(
        args.seed, args.classes, args.docs_per_class, args.vocab_per_class, args.noise_rate,
        noise_vocab=args.noise_vocab, duplicate_rate=args.duplicate_rate,
    )
    with _open_out(args.output) as fh:
        write_reports(reports, fh)
    _info(f"reports={len(reports)}")
    return EXIT_OK


def cmd_split(args) -> int:
    corpus = _load_corpus(args.corpus)
    train, test = chronological_split(corpus, args.train_fraction)
    train.save(args.train)
    test.save(args.test)
    _info(f"train={train.n_docs}, test={test.n_docs}, words={train.n_words}")
    return EXIT_OK


def cmd_reduce(args) -> int:
    corpus = _load_corpus(args.corpus)
    plan = ReductionPlan(args.order, args.fs, args.is_, args.word_rate, args.bug_rate, args.seed)
    result = reduce(corpus, plan, threads=args.threads)
    result.corpus.save(args.output)
    report = result.report(include_timing=args.timing)
    with _open_out(args.report) as fh:
        fh.write(json.dumps(report, indent=1, sort_keys=True) + "\n")
    _info(f"{order_arrow(plan.order)}: docs {corpus.n_docs} -> {result.corpus.n_docs}, "
          f"words {corpus.n_words} -> {result.corpus.n_words}, hit_target={result.hit_target}")
    return EXIT_OK


def cmd_triage(args) -> int:
    train = _load_corpus(args.corpus)
    options = {"threads": args.threads} if args.classifier == "svm" else {}
    model = train_classifier(args.classifier, train, seed=args.seed, **options)
    model.save(args.output)
    _info(f"trained {type(model).__name__} on {train.n_docs} reports, {len(model.classes)} developers")
    if args.recommend:
        test = _load_corpus(args.recommend)
        recs = recommend_corpus(model, test, args.k)
        with _open_out(args.recommendations) as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["bug_id", "truth"] + [f"rank{i}" for i in range(1, args.k + 1)])
            for bug, truth, rec in zip(test.bug_ids, test.labels, recs):
                writer.writerow([bug, truth] + list(rec) + [""] * (args.k - len(rec)))
    return EXIT_OK


def _load_triage_model(path: str):
    try:
        return load_model(path)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not JSON ({exc})") from None
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: model schema mismatch (missing or malformed field {exc})") from None
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def cmd_eval(args) -> int:
    model = _load_triage_model(args.model)
    test = _load_corpus(args.test)
    curve = accuracy_curve(recommend_corpus(model, test, args.k_max), test.labels, args.k_max)
    with _open_out(args.output) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "correct", "total", "accuracy"])
        for k in range(1, curve.k_max + 1):
            writer.writerow([k, curve.correct[k - 1], curve.total, f"{curve.at(k):.6f}"])
    _info(f"accuracy@1={curve.at(1):.4f}, accuracy@{curve.k_max}={curve.at(curve.k_max):.4f}")
    return EXIT_OK


def cmd_attrs(args) -> int:
    rows = [extract_attributes(_load_corpus(p)) for p in args.corpora]
    with _open_out(args.output) as fh:
        write_attribute_table(fh, rows, args.labels.split(",") if args.labels else None)
    return EXIT_OK


def cmd_label_orders(args) -> int:
    reports, errors = read_reports(args.reports)
    if errors:
        raise DataError(f"{args.reports}:{errors[0].line}: {errors[0].message}")
    policy = FilterPolicy(min_fixes_per_developer=args.min_fixes)
    reports = sorted(filter_reports(reports, policy), key=lambda r: r.id)
    units = split_bug_units(reports, args.unit_size)
    datasets = enumerate_window_datasets(units, args.max_window)

    def run(ds):
        corpus = build_corpus(ds)
        label, _ = label_reduction_order(corpus, args.fs, args.is_, args.classifier, args.k_max,
                                         args.word_rate, args.bug_rate, args.seed)
        return extract_attributes(corpus), label

    out = parallel_map(run, datasets, args.threads)
    with _open_out(args.output) as fh:
        write_attribute_table(fh, [a for a, _ in out], [l for _, l in out])
    counts = {c: sum(1 for _, l in out if l == c) for c in ORDER_CLASSES}
    _info(f"datasets={len(out)}, " + ", ".join(f"{order_arrow(c)}={n}" for c, n in counts.items()))
    return EXIT_OK


def _read_table(path: str):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            return read_attribute_table(fh)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def cmd_train_order(args) -> int:
    rows, labels = _read_table(args.attributes)
    bad = sorted(set(labels) - set(ORDER_CLASSES))
    if bad:
        raise DataError(f"{args.attributes}: unknown label(s) {bad}; expected {list(ORDER_CLASSES)}")
    config = ClassifierConfig(args.classifier, args.variant, args.rounds)
    if args.cv:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RuntimeWarning)
            res = cross_validate([r.as_array() for r in rows], labels, args.cv, config, args.seed,
                                 threads=args.threads)
        for w in caught:
            _info(f"warning: {w.message}")
        m = res.metrics
        parts = [f"{order_arrow(c)}: P={m.precision[c]:.3f} R={m.recall[c]:.3f} F1={m.f1[c]:.3f}" for c in ORDER_CLASSES]
        _info(f"{config.name} {args.cv}-fold CV accuracy={m.accuracy:.3f}; " + "; ".join(parts))
    X, bounds = normalize_attributes(rows)
    model = train_order_model(X, labels, config, args.seed)
    OrderPredictor(model, bounds).save(args.output)
    return EXIT_OK


def cmd_predict_order(args) -> int:
    try:
        predictor = OrderPredictor.load(args.model)
    except json.JSONDecodeError as exc:
        raise DataError(f"{args.model}: not JSON ({exc})") from None
    except (KeyError, TypeError) as exc:
        raise DataError(f"{args.model}: order model schema mismatch (missing field {exc})") from None
    except ValueError as exc:
        raise DataError(f"{args.model}: {exc}") from None
    if args.input.endswith(".csv"):
        rows, _ = _read_table(args.input)
        if not rows:
            raise DataError(f"{args.input}: no attribute rows")
        attrs = rows[0]
    else:
        attrs = extract_attributes(_load_corpus(args.input))
    label = predictor.predict(attrs)
    print(order_arrow(label))
    if args.verbose >= 1:
        x = predictor.bounds.apply(attrs)
        model = predictor.model
        if isinstance(model, AdaBoostEnsemble):
            totals = model.vote_totals(x)[0]
            _info("votes: " + ", ".join(f"{order_arrow(c)}={t:.4f}" for c, t in zip(model.classes, totals)))
        else:
            _info(f"tree vote: {order_arrow(label)}=1")
    return EXIT_OK


def cmd_experiment(args) -> int:
    path = args.config or os.environ.get(CONFIG_ENV) or str(bundled_config_path())
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if not Path(path).exists():
        raise UsageError(f"config file {path} not found")
    cfg = load_config(path, overrides)
    result = run_experiment(cfg, args.output, threads=args.threads)
    problems = validate_manifest(result.out_dir)
    if problems:
        raise AssertionError("manifest does not validate: " + "; ".join(problems))
    _info(f"wrote {len(result.manifest['files'])} files to {result.out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bugreduce", description="Data reduction and reduction-order prediction for bug triage.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for every random choice (default 0)")
    common.add_argument("--threads", type=int, default=default_threads(),
                        help="worker threads; results do not depend on it (default: CPU count)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common], help="JSON Lines reports -> corpus file")
    p.add_argument("input", help="bug reports, one JSON object per line")
    p.add_argument("-o", "--output", required=True, help="corpus JSON to write")
    p.add_argument("--audit", help="JSON Lines audit of excluded reports")
    p.add_argument("--min-fixes", type=int, default=10, help="minimum kept reports per developer (default 10)")
    p.add_argument("--keep-resolutions", default="FIXED,DUPLICATE", help="comma-separated resolutions to keep")
    p.add_argument("--stop-list", help="stop word file (default: bundled SMART list)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", parents=[common], help="write a seeded synthetic report dump")
    p.add_argument("-o", "--output", default="-", help="JSON Lines output (default stdout)")
    p.add_argument("--classes", type=_positive, default=6)
    p.add_argument("--docs-per-class", type=int, default=30)
    p.add_argument("--vocab-per-class", type=_positive, default=12)
    p.add_argument("--noise-rate", type=float, default=0.3)
    p.add_argument("--noise-vocab", type=_positive, default=30)
    p.add_argument("--duplicate-rate", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", parents=[common], help="chronological train/test split of a corpus")
    p.add_argument("corpus")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("reduce", parents=[common], help="feature + instance selection in a chosen order")
    p.add_argument("corpus", help="training corpus JSON")
    p.add_argument("-o", "--output", required=True, help="reduced corpus JSON")
    p.add_argument("--report", default="-", help="reduction report JSON (default stdout)")
    p.add_argument("--order", default="FS_then_IS", help="FS->IS or IS->FS (default FS->IS)")
    p.add_argument("--fs", default="CH", choices=["IG", "CH", "SU", "RF"])
    p.add_argument("--is", dest="is_", default="ICF", choices=["ICF", "LVQ", "DROP", "POP"])
    p.add_argument("--word-rate", type=_rate, default=0.30)
    p.add_argument("--bug-rate", type=_rate, default=0.50)
    p.add_argument("--timing", action="store_true", help="include wall-clock seconds in the report")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("triage", parents=[common], help="train a developer recommender")
    p.add_argument("corpus", help="training corpus JSON")
    p.add_argument("-o", "--output", required=True, help="model JSON")
    p.add_argument("--classifier", default="nb", choices=["nb", "knn", "svm"])
    p.add_argument("--recommend", metavar="TEST", help="also write top-k lists for this corpus")
    p.add_argument("--recommendations", default="-", help="CSV for --recommend (default stdout)")
    p.add_argument("-k", type=_positive, default=5)
    p.set_defaults(func=cmd_triage)

    p = sub.add_parser("eval", parents=[common], help="top-k accuracy of a model on a test corpus")
    p.add_argument("model")
    p.add_argument("test")
    p.add_argument("--k-max", type=_positive, default=5)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("attrs", parents=[common], help="18 dataset attributes per corpus")
    p.add_argument("corpora", nargs="+")
    p.add_argument("--labels", help="comma-separated labels, one per corpus")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_attrs)

    p = sub.add_parser("label-orders", parents=[common], help="label bug-unit window datasets with their better order")
    p.add_argument("reports", help="JSON Lines reports")
    p.add_argument("-o", "--output", default="-", help="attribute table CSV")
    p.add_argument("--unit-size", type=_positive, default=5000)
    p.add_argument("--max-window", type=_positive, default=5)
    p.add_argument("--min-fixes", type=int, default=10)
    p.add_argument("--fs", default="CH", choices=["IG", "CH", "SU", "RF"])
    p.add_argument("--is", dest="is_", default="ICF", choices=["ICF", "LVQ", "DROP", "POP"])
    p.add_argument("--classifier", default="nb", choices=["nb", "knn", "svm"])
    p.add_argument("--k-max", type=_positive, default=5)
    p.add_argument("--word-rate", type=_rate, default=0.30)
    p.add_argument("--bug-rate", type=_rate, default=0.50)
    p.set_defaults(func=cmd_label_orders)

    p = sub.add_parser("train-order", parents=[common], help="train a reduction-order predictor")
    p.add_argument("attributes", help="attribute table CSV with labels")
    p.add_argument("-o", "--output", required=True, help="order model JSON")
    p.add_argument("--classifier", default="adaboost", choices=["c45", "adaboost"])
    p.add_argument("--variant", default="reweighting", choices=["reweighting", "resampling"])
    p.add_argument("--rounds", type=_positive, default=10)
    p.add_argument("--cv", type=_positive, metavar="FOLDS", help="also report k-fold CV metrics")
    p.set_defaults(func=cmd_train_order)

    p = sub.add_parser("predict-order", parents=[common], help="print FS->IS or IS->FS for a dataset")
    p.add_argument("model", help="order model JSON")
    p.add_argument("input", help="corpus JSON, or attribute CSV (first row used)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.set_defaults(func=cmd_predict_order)

    p = sub.add_parser("experiment", help="run a configured experiment")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--threads", type=int, default=default_threads(), help="worker threads (default: CPU count)")
    p.add_argument("--config", help=f"config file (default: ${CONFIG_ENV}, else the bundled desk config)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    p.add_argument("-o", "--output", help="output directory (default: output.dir)")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        _info(f"bugreduce: error: {exc}")
        return EXIT_USAGE
    except (DataError, CorpusError, TrainingError, OSError, json.JSONDecodeError, ValueError) as exc:
        _info(f"bugreduce: error: {exc}")
        return EXIT_DATA
    except Exception as exc:  # invariant violations and bugs
        _info(f"bugreduce: internal error: {type(exc).__name__}: {exc}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
