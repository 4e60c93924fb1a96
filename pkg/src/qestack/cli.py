"""``qe-stack``: one binary binding all pipelines.

Every subcommand is a thin adapter over the library; no metric or
optimization logic lives here. Exit codes: 0 success, 1 validation/usage
error, 2 I/O error. All randomized steps consume one root seed and every
file-producing run writes an effective-config snapshot next to its outputs.
"""

from __future__ import annotations

import argparse
import functools
import os
import sys

from . import __version__, corpus, doclevel, ensemble, labeler, linearqe, metrics
from .config import load_config_file, resolve_config, write_snapshot
from .corpus import Stream, Tag
from .errors import LengthMismatch, QEStackError


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _emit(pairs, fmt):
    if fmt == "kv":
        for key, value in pairs:
            print(f"{key}={value}")
    else:
        width = max(len(key) for key, _ in pairs)
        for key, value in pairs:
            print(f"{key:<{width}}  {value}")


def _load_file_config(args):
    return load_config_file(args.config) if args.config else {}


def _snapshot(path, command, values, extra=None):
    merged = dict(values)
    if extra:
        merged.update(extra)
    write_snapshot(path, command, merged, __version__)


# ---------------------------------------------------------------------------
# Stream slicing of tag/probability files
# ---------------------------------------------------------------------------

_EVAL_STREAMS = ("target", "words", "gaps", "source", "sentence")


def _slice_interleaved(rows, stream, path):
    out = []
    for i, row in enumerate(rows, 1):
        if len(row) < 3 or len(row) % 2 == 0:
            raise LengthMismatch(
                f"interleaved line must hold 2N+1 entries, got {len(row)}", file=str(path), line=i
            )
        if stream == "words":
            out.append(row[1::2])
        elif stream == "gaps":
            out.append(row[0::2])
        else:
            out.append(list(row))
    return out


def _read_pred_rows(path, stream):
    """A prediction file holds either tags (sliced like the gold) or
    per-stream probabilities."""
    probs = corpus._tags_as_probs(path)
    if probs is not None:
        tag_rows = corpus.read_tag_lines(path)
        if stream in ("words", "gaps", "target"):
            return "tags", _slice_interleaved(tag_rows, stream, path)
        return "tags", tag_rows
    return "probs", corpus.read_prob_lines(path)


def _cmd_evaluate(args):
    values = resolve_config(
        {"threshold": ("float", 0.5)}, _load_file_config(args), {"threshold": args.threshold}
    )
    if args.stream == "sentence":
        gold = corpus.read_score_lines(args.gold)
        pred = corpus.read_score_lines(args.pred)
        if len(gold) != len(pred):
            raise LengthMismatch(f"gold has {len(gold)} lines, prediction has {len(pred)}", file=args.pred)
        _emit([("pearson", f"{metrics.pearson(gold, pred):.6f}")], args.format)
        return 0

    gold_rows = corpus.read_tag_lines(args.gold)
    if args.stream in ("target", "words", "gaps"):
        gold_rows = _slice_interleaved(gold_rows, args.stream, args.gold)
    kind, pred_rows = _read_pred_rows(args.pred, args.stream)
    if len(pred_rows) != len(gold_rows):
        raise LengthMismatch(
            f"gold has {len(gold_rows)} lines, prediction has {len(pred_rows)}", file=args.pred
        )
    gold_flat: list[Tag] = []
    pred_flat: list[Tag] = []
    for i, (gold_row, pred_row) in enumerate(zip(gold_rows, pred_rows), 1):
        if len(pred_row) != len(gold_row):
            raise LengthMismatch(
                f"expected {len(gold_row)} entries, got {len(pred_row)}", file=str(args.pred), line=i
            )
        gold_flat.extend(gold_row)
        if kind == "probs":
            pred_flat.extend(metrics.threshold(pred_row, values["threshold"]))
        else:
            pred_flat.extend(pred_row)
    scores = metrics.f1_mult(gold_flat, pred_flat)
    pairs = [
        ("f1_ok", f"{scores.f1_ok:.6f}"),
        ("f1_bad", f"{scores.f1_bad:.6f}"),
        ("f1_mult", f"{scores.f1_mult:.6f}"),
        ("mcc", f"{metrics.mcc(gold_flat, pred_flat):.6f}"),
    ]
    _emit(pairs, args.format)
    return 0


def _cmd_make_labels(args):
    values = resolve_config(
        {"cap_hter": ("bool", True)},
        _load_file_config(args),
        {"cap_hter": False if args.no_cap else None},
    )
    loaded = corpus.load_corpus(mt=args.mt, pe=args.pe, src=args.src, align=args.align)
    labeled = labeler.label_corpus(loaded, cap=values["cap_hter"])
    prefix = args.out_prefix
    corpus.write_tags([e.target_tags for e in labeled], f"{prefix}.tags", interleaved=True)
    corpus.write_scores([e.hter for e in labeled], f"{prefix}.hter")
    if args.src is not None and args.align is not None:
        corpus.write_tags([e.source_tags for e in labeled], f"{prefix}.source_tags")
    _snapshot(f"{prefix}.run.cfg", "make-labels", values, {"seed": args.seed})
    return 0


# ---------------------------------------------------------------------------
# linear train | predict | jackknife
# ---------------------------------------------------------------------------

_LINEAR_SCHEMA = {
    "epochs": ("int", 5),
    "C": ("float", 1.0),
    "seed": ("int", None),
    "bins": ("int", 10),
    "average": ("bool", True),
    "gamma": ("float", 1.0),
    "k": ("int", 10),
    "use_bias": ("bool", True),
    "use_word": ("bool", True),
    "use_context": ("bool", True),
    "use_aligned": ("bool", True),
    "use_extra": ("bool", True),
    "use_stacked": ("bool", True),
    "use_bigram": ("bool", True),
}


def _linear_values(args):
    overrides = {
        "epochs": args.epochs,
        "C": args.C,
        "k": getattr(args, "k", None),
        "gamma": getattr(args, "gamma", None),
    }
    values = resolve_config(_LINEAR_SCHEMA, _load_file_config(args), overrides)
    if values["seed"] is None:
        values["seed"] = args.seed
    return values


def _feature_config(values) -> linearqe.FeatureConfig:
    return linearqe.FeatureConfig(
        bins=values["bins"],
        use_bias=values["use_bias"],
        use_word=values["use_word"],
        use_context=values["use_context"],
        use_aligned=values["use_aligned"],
        use_extra=values["use_extra"],
        use_stacked=values["use_stacked"],
        use_bigram=values["use_bigram"],
    )


def _linear_corpus(args, need_gold):
    stream = Stream(args.stream)
    kwargs = {"mt": args.mt, "src": args.src, "align": args.align}
    if need_gold:
        if stream is Stream.SOURCE:
            if args.source_tags is None or args.src is None:
                raise QEStackError("source stream training needs --src and --source-tags")
            kwargs["source_tags"] = args.source_tags
        else:
            if args.tags is None:
                raise QEStackError("training needs --tags (interleaved gold tags)")
            kwargs["tags"] = args.tags
    loaded = corpus.load_corpus(**kwargs)
    predictions = corpus.read_manifest(args.stacked, loaded) if args.stacked else ()
    extra = []
    for path in args.extra or ():
        extra.append([line.split() for line in corpus._read_lines(path)])
        if len(extra[-1]) != len(loaded):
            raise LengthMismatch(
                f"extra column has {len(extra[-1])} lines, corpus has {len(loaded)}", file=str(path)
            )
    instances = linearqe.build_instances(loaded, stream, predictions=predictions, extra_columns=extra)
    golds = linearqe.gold_tags(loaded, stream) if need_gold else None
    return stream, loaded, instances, golds


def _train_model(instances, golds, values):
    return linearqe.mira_train(
        instances,
        golds,
        epochs=values["epochs"],
        C=values["C"],
        seed=values["seed"],
        config=_feature_config(values),
        average=values["average"],
    )


def _write_stream_predictions(prefix, tags_rows, probs_rows):
    corpus.write_tags(tags_rows, f"{prefix}.tags", interleaved=False)
    corpus.write_probs(probs_rows, f"{prefix}.probs")


def _cmd_linear_train(args):
    values = _linear_values(args)
    _, _, instances, golds = _linear_corpus(args, need_gold=True)
    model = _train_model(instances, golds, values)
    linearqe.save_model(model, args.model)
    _snapshot(f"{args.model}.run.cfg", "linear train", values, {"stream": args.stream})
    return 0


def _cmd_linear_predict(args):
    values = _linear_values(args)
    _, _, instances, _ = _linear_corpus(args, need_gold=False)
    model = linearqe.load_model(args.model, config=_feature_config(values))
    tags_rows = []
    probs_rows = []
    for inst in instances:
        tags_rows.append(linearqe.viterbi(inst, model)[0])
        probs_rows.append(linearqe.predict_probs(inst, model, gamma=values["gamma"]))
    _write_stream_predictions(args.out_prefix, tags_rows, probs_rows)
    _snapshot(f"{args.out_prefix}.run.cfg", "linear predict", values, {"stream": args.stream})
    return 0


def _cmd_linear_jackknife(args):
    values = _linear_values(args)
    _, _, instances, golds = _linear_corpus(args, need_gold=True)
    train_fn = functools.partial(
        linearqe.mira_train,
        epochs=values["epochs"],
        C=values["C"],
        seed=values["seed"],
        config=_feature_config(values),
        average=values["average"],
    )
    tags_rows, probs_rows = linearqe.jackknife(
        instances, golds, values["k"], train_fn, gamma=values["gamma"], jobs=args.jobs
    )
    _write_stream_predictions(args.out_prefix, tags_rows, probs_rows)
    _snapshot(f"{args.out_prefix}.run.cfg", "linear jackknife", values, {"stream": args.stream})
    return 0


# ---------------------------------------------------------------------------
# ensemble-word fit | apply | kfold
# ---------------------------------------------------------------------------

_ENSEMBLE_WORD_SCHEMA = {
    "threshold": ("float", 0.5),
    "optimize_threshold": ("bool", False),
    "tol": ("float", 1e-6),
    "max_cycles": ("int", 20),
    "line_samples": ("int", 51),
    "k": ("int", 10),
}


def _load_gold_stream(path, stream: Stream, loaded) -> list[list[Tag]]:
    rows = corpus.read_tag_lines(path)
    if len(rows) != len(loaded):
        raise LengthMismatch(f"gold has {len(rows)} lines, corpus has {len(loaded)}", file=str(path))
    if stream in (Stream.WORDS, Stream.GAPS):
        rows = _slice_interleaved(rows, stream.value, path)
    for i, (row, entry) in enumerate(zip(rows, loaded), 1):
        expected = {
            Stream.WORDS: len(entry.mt),
            Stream.GAPS: len(entry.mt) + 1,
            Stream.SOURCE: len(entry.src) if entry.src else None,
        }[stream]
        if expected is not None and len(row) != expected:
            raise LengthMismatch(f"expected {expected} tags, got {len(row)}", file=str(path), line=i)
    return rows


def _ensemble_inputs(args, need_gold):
    stream = Stream(args.stream)
    loaded = corpus.load_corpus(mt=args.mt, src=args.src)
    preds = corpus.read_manifest(args.manifest, loaded)
    golds = _load_gold_stream(args.gold, stream, loaded) if need_gold else None
    return stream, loaded, preds, golds


def _cmd_ensemble_word_fit(args):
    values = resolve_config(
        _ENSEMBLE_WORD_SCHEMA, _load_file_config(args), {"threshold": args.threshold}
    )
    stream, _, preds, golds = _ensemble_inputs(args, need_gold=True)
    fit = ensemble.fit_word_ensemble(
        preds,
        golds,
        stream,
        threshold=values["threshold"],
        optimize_threshold=values["optimize_threshold"],
        tol=values["tol"],
        max_cycles=values["max_cycles"],
        line_samples=values["line_samples"],
    )
    ensemble.save_weights([p.system_id for p in preds], fit.weights, args.out)
    _snapshot(
        f"{args.out}.run.cfg",
        "ensemble-word fit",
        values,
        {"stream": args.stream, "fitted_threshold": fit.threshold, "dev_f1_mult": fit.f1, "seed": args.seed},
    )
    _emit([("dev_f1_mult", f"{fit.f1:.6f}"), ("threshold", fit.threshold)], args.format)
    return 0


def _cmd_ensemble_word_apply(args):
    stream, _, preds, _ = _ensemble_inputs(args, need_gold=False)
    ids, weights = ensemble.load_weights(args.weights, stream)
    if ids != [p.system_id for p in preds]:
        raise QEStackError("weights file lists different systems than the manifest")
    combined = ensemble.combine_word(preds, weights, stream)
    corpus.write_probs(combined, args.out)
    _snapshot(f"{args.out}.run.cfg", "ensemble-word apply", {}, {"stream": args.stream, "weights": args.weights})
    return 0


def _cmd_ensemble_word_kfold(args):
    values = resolve_config(
        _ENSEMBLE_WORD_SCHEMA, _load_file_config(args), {"threshold": args.threshold, "k": args.k}
    )
    stream, _, preds, golds = _ensemble_inputs(args, need_gold=True)
    plan = ensemble.FoldPlan.contiguous(len(golds), values["k"])
    estimate = ensemble.kfold_estimate(
        preds,
        golds,
        plan,
        stream,
        threshold=values["threshold"],
        optimize_threshold=values["optimize_threshold"],
        tol=values["tol"],
        max_cycles=values["max_cycles"],
        line_samples=values["line_samples"],
    )
    _emit([("kfold_f1_mult", f"{estimate:.6f}"), ("k", values["k"])], args.format)
    return 0


# ---------------------------------------------------------------------------
# ensemble-sent fit | apply
# ---------------------------------------------------------------------------

_ENSEMBLE_SENT_SCHEMA = {
    "lambda_grid": ("floats", (0.01, 0.1, 1.0, 10.0, 100.0)),
    "cv_k": ("int", 5),
    "seed": ("int", None),
}


def _cmd_ensemble_sent_fit(args):
    values = resolve_config(_ENSEMBLE_SENT_SCHEMA, _load_file_config(args), {})
    if values["seed"] is None:
        values["seed"] = args.seed
    loaded = corpus.load_corpus(mt=args.mt, src=args.src, hter=args.gold_scores)
    preds = corpus.read_manifest(args.manifest, loaded)
    X, names = ensemble.sentence_features(preds)
    y = [e.hter for e in loaded]
    lam, model = ensemble.ridge_cv(
        X, y, values["lambda_grid"], values["cv_k"], values["seed"], feature_names=names
    )
    ensemble.save_ridge_model(model, args.out)
    _snapshot(f"{args.out}.run.cfg", "ensemble-sent fit", values, {"chosen_lambda": lam})
    _emit([("chosen_lambda", lam)], args.format)
    return 0


def _cmd_ensemble_sent_apply(args):
    loaded = corpus.load_corpus(mt=args.mt, src=args.src)
    preds = corpus.read_manifest(args.manifest, loaded)
    model = ensemble.load_ridge_model(args.model)
    X, names = ensemble.sentence_features(preds)
    if names != model.feature_names:
        raise QEStackError("manifest features do not match the fitted model")
    predictions = [min(1.0, max(0.0, float(v))) for v in model.predict(X)]
    corpus.write_scores(predictions, args.out)
    _snapshot(f"{args.out}.run.cfg", "ensemble-sent apply", {}, {"model": args.model})
    return 0


# ---------------------------------------------------------------------------
# doc tags | spans | mqm | features | fit | apply | eval
# ---------------------------------------------------------------------------

_DOC_SCHEMA = {
    "severity": ("str", "major"),
    "minor_weight": ("float", 1.0),
    "major_weight": ("float", 5.0),
    "critical_weight": ("float", 10.0),
    "floor": ("optfloat", None),
    "lambda": ("float", 0.0),
}


def _doc_values(args):
    return resolve_config(_DOC_SCHEMA, _load_file_config(args), {})


def _severity_weights(values):
    return {
        doclevel.Severity.MINOR: values["minor_weight"],
        doclevel.Severity.MAJOR: values["major_weight"],
        doclevel.Severity.CRITICAL: values["critical_weight"],
    }


def _read_doc_tags(tags_dir, doc_id, doc):
    path = os.path.join(tags_dir, f"{doc_id}.tags")
    rows = corpus.read_tag_lines(path)
    if len(rows) != len(doc):
        raise LengthMismatch(f"document {doc_id} has {len(doc)} sentences, got {len(rows)} tag lines", file=path)
    tags = []
    for i, (row, offsets) in enumerate(zip(rows, doc.token_offsets), 1):
        expected = 2 * len(offsets) + 1
        if len(row) != expected:
            raise LengthMismatch(f"expected {expected} interleaved tags, got {len(row)}", file=path, line=i)
        tags.append(corpus.TargetTags.from_interleaved(row, file=path, line=i))
    return tags


def _cmd_doc_tags(args):
    values = _doc_values(args)
    docs = doclevel.read_document_manifest(args.docs)
    annotations = doclevel.read_annotations(args.annotations)
    os.makedirs(args.out_dir, exist_ok=True)
    for doc_id, doc in docs.items():
        tags = doclevel.annotations_to_tags(doc, annotations.get(doc_id, []))
        corpus.write_tags(tags, os.path.join(args.out_dir, f"{doc_id}.tags"), interleaved=True)
    _snapshot(os.path.join(args.out_dir, "run.cfg"), "doc tags", values)
    return 0


def _cmd_doc_spans(args):
    values = _doc_values(args)
    docs = doclevel.read_document_manifest(args.docs)
    severity = doclevel.Severity.parse(values["severity"])
    by_doc = {}
    for doc_id, doc in docs.items():
        tags = _read_doc_tags(args.tags_dir, doc_id, doc)
        by_doc[doc_id] = doclevel.tags_to_annotations(doc, tags, default_severity=severity)
    doclevel.write_annotations(by_doc, args.out)
    _snapshot(f"{args.out}.run.cfg", "doc spans", values)
    return 0


def _cmd_doc_mqm(args):
    values = _doc_values(args)
    docs = doclevel.read_document_manifest(args.docs)
    annotations = doclevel.read_annotations(args.annotations)
    weights = _severity_weights(values)
    with open(args.out, "w", encoding="utf-8") as handle:
        for doc_id, doc in docs.items():
            counts = {s: 0 for s in doclevel.Severity}
            for ann in annotations.get(doc_id, []):
                counts[ann.severity] += 1
            score = doclevel.mqm_closed_form(counts, doc.n_words(), weights, floor=values["floor"])
            handle.write(f"{doc_id}\t{score!r}\n")
    _snapshot(f"{args.out}.run.cfg", "doc mqm", values)
    return 0


def _cmd_doc_features(args):
    values = _doc_values(args)
    docs = doclevel.read_document_manifest(args.docs)
    with open(args.out, "w", encoding="utf-8") as handle:
        for doc_id, doc in docs.items():
            tags = _read_doc_tags(args.tags_dir, doc_id, doc)
            mqms = corpus.read_score_lines(os.path.join(args.sent_mqm_dir, f"{doc_id}.mqm"))
            if len(mqms) != len(doc):
                raise LengthMismatch(
                    f"document {doc_id} has {len(doc)} sentences but {len(mqms)} sentence MQMs"
                )
            row = doclevel.doc_mqm_features(tags, mqms)
            handle.write(doc_id + "\t" + "\t".join(repr(v) for v in row) + "\n")
    _snapshot(f"{args.out}.run.cfg", "doc features", values)
    return 0


def _read_doc_table(path, n_columns=None):
    table = {}
    with open(path, "r", encoding="utf-8") as handle:
        for i, line in enumerate(handle, 1):
            fields = line.rstrip("\n").split("\t")
            if len(fields) < 2 or (n_columns is not None and len(fields) != n_columns + 1):
                raise QEStackError(f"{path}:{i}: malformed row")
            table[fields[0]] = [float(v) for v in fields[1:]]
    return table


def _cmd_doc_fit(args):
    values = _doc_values(args)
    features = _read_doc_table(args.features, n_columns=4)
    gold = _read_doc_table(args.gold, n_columns=1)
    missing = set(features) ^ set(gold)
    if missing:
        raise QEStackError(f"documents missing from features or gold: {', '.join(sorted(missing))}")
    doc_ids = list(features)
    model = doclevel.fit_doc_mqm(
        [features[d] for d in doc_ids], [gold[d][0] for d in doc_ids], lam=values["lambda"]
    )
    ensemble.save_ridge_model(model, args.out)
    _snapshot(f"{args.out}.run.cfg", "doc fit", values)
    return 0


def _cmd_doc_apply(args):
    features = _read_doc_table(args.features, n_columns=4)
    model = ensemble.load_ridge_model(args.model)
    with open(args.out, "w", encoding="utf-8") as handle:
        for doc_id, row in features.items():
            handle.write(f"{doc_id}\t{doclevel.predict_doc_mqm(model, row)!r}\n")
    _snapshot(f"{args.out}.run.cfg", "doc apply", {}, {"model": args.model})
    return 0


def _cmd_doc_eval(args):
    pairs = []
    if args.gold_annotations and args.pred_annotations:
        docs = doclevel.read_document_manifest(args.docs)
        gold = doclevel.read_annotations(args.gold_annotations)
        pred = doclevel.read_annotations(args.pred_annotations)
        doc_ids = list(docs)
        score = doclevel.annotation_f1(
            [gold.get(d, []) for d in doc_ids],
            [pred.get(d, []) for d in doc_ids],
            [docs[d] for d in doc_ids],
        )
        pairs.append(("f1_ann", f"{score:.6f}"))
    if args.gold_mqm and args.pred_mqm:
        gold = _read_doc_table(args.gold_mqm, n_columns=1)
        pred = _read_doc_table(args.pred_mqm, n_columns=1)
        if set(gold) != set(pred):
            raise QEStackError("gold and predicted MQM tables list different documents")
        doc_ids = sorted(gold)
        score = metrics.pearson([gold[d][0] for d in doc_ids], [pred[d][0] for d in doc_ids])
        pairs.append(("mqm_pearson", f"{score:.6f}"))
    if not pairs:
        raise QEStackError("nothing to evaluate: pass annotation files and/or MQM tables")
    _emit(pairs, args.format)
    return 0


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------


def _add_global_flags(parser, *, suppress=False):
    # registered on the root parser and on every subparser so the flags are
    # accepted on either side of the subcommand; the subparser copies use
    # SUPPRESS defaults so they never overwrite a value parsed at the root
    kwargs = {"default": argparse.SUPPRESS} if suppress else {}
    parser.add_argument(
        "--jobs", type=int, help="worker processes for fold-parallel steps",
        **(kwargs if suppress else {"default": 1}),
    )
    parser.add_argument(
        "--seed", type=int, help="root seed for all randomized steps",
        **(kwargs if suppress else {"default": 1}),
    )
    parser.add_argument("--config", help="key=value config file", **kwargs)
    parser.add_argument(
        "--format", choices=("text", "kv"), help="output format",
        **(kwargs if suppress else {"default": "text"}),
    )


def _leaf(group, name, **kwargs):
    sub = group.add_parser(name, **kwargs)
    _add_global_flags(sub, suppress=True)
    return sub


def build_parser() -> _Parser:
    parser = _Parser(prog="qe-stack", description=__doc__)
    parser.add_argument("--version", action="version", version=f"qe-stack {__version__}")
    _add_global_flags(parser)
    parser.set_defaults(config=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = _leaf(sub, "evaluate", help="score predictions against gold tags or scores")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--stream", choices=_EVAL_STREAMS, default="target")
    p.set_defaults(handler=_cmd_evaluate)

    p = _leaf(sub, "make-labels", help="derive tags, source tags and HTER from post-edits")
    p.add_argument("--mt", required=True)
    p.add_argument("--pe", required=True)
    p.add_argument("--src")
    p.add_argument("--align")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--no-cap", action="store_true", help="do not clamp HTER to [0, 1]")
    p.set_defaults(handler=_cmd_make_labels)

    linear = _leaf(sub, "linear", help="linear sequential QE model").add_subparsers(
        dest="subcommand", required=True
    )
    for name, handler, needs in (
        ("train", _cmd_linear_train, "train"),
        ("predict", _cmd_linear_predict, "predict"),
        ("jackknife", _cmd_linear_jackknife, "jackknife"),
    ):
        p = _leaf(linear, name)
        p.add_argument("--mt", required=True)
        p.add_argument("--src")
        p.add_argument("--align")
        p.add_argument("--tags")
        p.add_argument("--source-tags")
        p.add_argument("--stream", choices=("words", "gaps", "source"), default="words")
        p.add_argument("--stacked", help="manifest of stacked prediction features")
        p.add_argument("--extra", action="append", help="extra annotation column file (repeatable)")
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--C", type=float, default=None)
        if needs == "train":
            p.add_argument("--model", required=True)
        elif needs == "predict":
            p.add_argument("--model", required=True)
            p.add_argument("--out-prefix", required=True)
            p.add_argument("--gamma", type=float, default=None)
        else:
            p.add_argument("--k", type=int, default=None)
            p.add_argument("--out-prefix", required=True)
            p.add_argument("--gamma", type=float, default=None)
        p.set_defaults(handler=handler)

    word = _leaf(sub, "ensemble-word", help="convex-combination word-level ensembling").add_subparsers(
        dest="subcommand", required=True
    )
    p = _leaf(word, "fit")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mt", required=True)
    p.add_argument("--src")
    p.add_argument("--gold", required=True)
    p.add_argument("--stream", choices=("words", "gaps", "source"), default="words")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_ensemble_word_fit)
    p = _leaf(word, "apply")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mt", required=True)
    p.add_argument("--src")
    p.add_argument("--weights", required=True)
    p.add_argument("--stream", choices=("words", "gaps", "source"), default="words")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_ensemble_word_apply)
    p = _leaf(word, "kfold")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mt", required=True)
    p.add_argument("--src")
    p.add_argument("--gold", required=True)
    p.add_argument("--stream", choices=("words", "gaps", "source"), default="words")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--k", type=int, default=None)
    p.set_defaults(handler=_cmd_ensemble_word_kfold)

    sent = _leaf(sub, "ensemble-sent", help="sentence-level ridge stacking").add_subparsers(
        dest="subcommand", required=True
    )
    p = _leaf(sent, "fit")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mt", required=True)
    p.add_argument("--src")
    p.add_argument("--gold-scores", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_ensemble_sent_fit)
    p = _leaf(sent, "apply")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mt", required=True)
    p.add_argument("--src")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_ensemble_sent_apply)

    doc = _leaf(sub, "doc", help="document-level pipeline").add_subparsers(
        dest="subcommand", required=True
    )
    p = _leaf(doc, "tags")
    p.add_argument("--docs", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=_cmd_doc_tags)
    p = _leaf(doc, "spans")
    p.add_argument("--docs", required=True)
    p.add_argument("--tags-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_doc_spans)
    p = _leaf(doc, "mqm")
    p.add_argument("--docs", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_doc_mqm)
    p = _leaf(doc, "features")
    p.add_argument("--docs", required=True)
    p.add_argument("--tags-dir", required=True)
    p.add_argument("--sent-mqm-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_doc_features)
    p = _leaf(doc, "fit")
    p.add_argument("--features", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_doc_fit)
    p = _leaf(doc, "apply")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_doc_apply)
    p = _leaf(doc, "eval")
    p.add_argument("--docs")
    p.add_argument("--gold-annotations")
    p.add_argument("--pred-annotations")
    p.add_argument("--gold-mqm")
    p.add_argument("--pred-mqm")
    p.set_defaults(handler=_cmd_doc_eval)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.handler(args)
    except SystemExit as exc:
        code = exc.code
        if code is None:
            return 0
        return code if isinstance(code, int) else 1
    except QEStackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
