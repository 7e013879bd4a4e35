"""Command-line driver for the extraction pipeline.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import evaluation, pipeline, session as session_mod
from .corpus import Corpus, dump_corpus, ingest_documents, load_chat_messages, segment_chat_instances
from .errors import ElicitError
from .evaluation import deferral_curve, deferral_curve_csv, load_gold, weighted_precision_recall
from .labelmodel import ABSTAIN
from .schema import DeferralPolicy, load_project, schema_summary

USAGE_ERROR = 1
DATA_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(USAGE_ERROR)


def _load_corpus(path: str) -> Corpus:
    p = Path(path)
    return ingest_documents(p, format="plain_text_dir" if p.is_dir() else "jsonl")


def _load_session(args, readonly: bool = False):
    config = load_project(args.config)
    if getattr(args, "seed", None) is not None:
        config = dataclasses.replace(config, seed=args.seed)
    corpus = _load_corpus(args.corpus)
    candidates = pipeline.candidates_from_jsonl(args.candidates)
    groups = pipeline.build_groups(config, candidates)
    fits = pipeline.load_fits(args.fit) if getattr(args, "fit", None) else None
    pipeline.score_all(config, groups, fits)
    fitted = fits is not None
    log = Path(args.log)
    has_events = log.exists() and log.stat().st_size > 0
    if readonly:
        events = session_mod.read_events(log) if has_events else []
        sess = session_mod.replay(config, corpus, groups, events, fitted=fitted)
    elif has_events:
        sess = session_mod.resume(config, corpus, groups, log, fitted=fitted)
    else:
        sess = session_mod.Session(config, corpus, groups, log_path=log, fitted=fitted)
    return config, corpus, groups, sess


def _cmd_ingest(args) -> int:
    if args.format == "chat_jsonl":
        messages = load_chat_messages(args.input)
        docs = segment_chat_instances(messages, gap_seconds=args.gap_seconds)
        corpus = Corpus(docs)
    else:
        corpus = ingest_documents(args.input, format=args.format)
    dump_corpus(corpus, args.out)
    print(f"ingested {len(corpus)} documents -> {args.out}")
    return 0


def _cmd_schema(args) -> int:
    config = load_project(args.config)
    sys.stdout.write(schema_summary(config))
    return 0


def _cmd_run_lfs(args) -> int:
    config = load_project(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    corpus = _load_corpus(args.corpus)
    candidates = pipeline.run_labeling_functions(config, corpus, max_in_flight=args.max_in_flight)
    pipeline.candidates_to_jsonl(candidates, args.out)
    print(f"wrote {len(candidates)} candidates -> {args.out}")
    return 0


def _cmd_fit(args) -> int:
    config = load_project(args.config)
    candidates = pipeline.candidates_from_jsonl(args.candidates)
    groups = pipeline.build_groups(config, candidates)
    records = []
    if args.log and Path(args.log).exists():
        events = session_mod.read_events(args.log)
        records = [
            session_mod.ValidationRecord.from_dict(e["record"])
            for e in events
            if e.get("type") == "validation"
        ]
    fits = pipeline.fit_all(config, groups, records=records, alpha=args.alpha)
    pipeline.save_fits(fits, args.out)
    refit = " (penalised refit)" if records and (args.alpha or config.alpha) > 0 else ""
    print(f"fitted {len(fits)} variables{refit} -> {args.out}")
    return 0


def _cmd_plan(args) -> int:
    config, _, _, sess = _load_session(args)
    if args.mode is None:
        policy = config.deferral
    elif args.mode == "none":
        policy = None
    else:
        policy = DeferralPolicy(mode=args.mode, q=args.q, tau=args.tau)
    human, auto = sess.apply_deferral(policy)
    sess.close()
    print(f"deferred {len(human)} items to human, {len(auto)} auto-accepted")
    return 0


def _cmd_serve(args) -> int:
    from .api import serve

    _, _, _, sess = _load_session(args)
    serve(sess, host=args.host, port=args.port)
    return 0


def _cmd_export(args) -> int:
    _, _, _, sess = _load_session(args, readonly=True)
    payload = sess.export_dataset(format=args.format)
    Path(args.out).write_bytes(payload)
    if args.provenance:
        Path(args.provenance).write_bytes(sess.export_provenance())
    print(f"exported -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    import csv as csv_mod

    gold = load_gold(args.gold)
    predictions = {}
    with open(args.predictions, encoding="utf-8", newline="") as fh:
        reader = csv_mod.DictReader(fh)
        for row in reader:
            doc_id = row.pop("doc_id")
            for variable_id, value in row.items():
                key = (doc_id, variable_id)
                if key in gold:
                    predictions[key] = value if value else ABSTAIN
    report = weighted_precision_recall(predictions, gold)
    out = Path(args.out)
    if out.suffix == ".csv":
        out.write_text(report.to_csv(), encoding="utf-8")
    else:
        out.write_text(report.to_json() + "\n", encoding="utf-8")
    print(
        f"precision={report.precision:.4f} recall={report.recall:.4f} "
        f"f1={report.f1:.4f} -> {args.out}"
    )
    return 0


def _cmd_simulate(args) -> int:
    config = load_project(args.config)
    candidates = pipeline.candidates_from_jsonl(args.candidates)
    groups = pipeline.build_groups(config, candidates)
    fits = pipeline.load_fits(args.fit) if args.fit else None
    pipeline.score_all(config, groups, fits)
    corpus = _load_corpus(args.corpus)
    gold = load_gold(args.gold)
    by_item = {}
    for g in groups:
        by_item.setdefault((g.doc_id, g.variable_id), []).append(g)
    items = [
        (key, by_item.get(key, []))
        for key in sorted(gold)
        if key[0] in corpus
    ]
    budgets = [float(b) for b in args.budgets.split(",")]
    rows = deferral_curve(
        items,
        gold,
        config,
        budgets=budgets,
        p=args.p,
        seed=args.seed if args.seed is not None else config.seed,
        fitted=fits is not None,
    )
    Path(args.out).write_text(deferral_curve_csv(rows), encoding="utf-8")
    print(f"wrote {len(rows)} curve points -> {args.out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="elicit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="normalise raw documents or chats into a corpus file")
    p.add_argument("--input", required=True)
    p.add_argument("--format", default="plain_text_dir",
                   choices=["plain_text_dir", "jsonl", "chat_jsonl"])
    p.add_argument("--gap-seconds", type=float, default=3600.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("schema", help="print a summary of a project config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_schema)

    p = sub.add_parser("run-lfs", help="run the labeling-function ensemble over a corpus")
    p.add_argument("--config", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-in-flight", type=int, default=1)
    p.set_defaults(func=_cmd_run_lfs)

    p = sub.add_parser("fit", help="fit per-variable labeling-function weights")
    p.add_argument("--config", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--log", default=None, help="session log; validations trigger a penalised refit")
    p.add_argument("--alpha", type=float, default=None, help="disagreement penalty weight")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("plan", help="apply a deferral policy to the session")
    p.add_argument("--config", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--fit", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", choices=["budget", "threshold", "none"], default=None)
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("serve", help="serve the validation API")
    p.add_argument("--config", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--fit", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("export", help="export the validated dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--fit", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    p.add_argument("--out", required=True)
    p.add_argument("--provenance", default=None)
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("eval", help="score an exported dataset against gold labels")
    p.add_argument("--gold", required=True)
    p.add_argument("--predictions", required=True, help="CSV produced by export")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("simulate", help="sweep deferral budgets with a simulated annotator")
    p.add_argument("--config", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--fit", default=None)
    p.add_argument("--budgets", default="0.0,0.2,0.4,0.6,0.8,1.0")
    p.add_argument("--p", type=float, default=0.98)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_ERROR
    try:
        return args.func(args)
    except ElicitError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return DATA_ERROR
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return DATA_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
