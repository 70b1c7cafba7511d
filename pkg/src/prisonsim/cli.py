"""Command-line pipeline: plan, run, validate, score, annotate, metrics, analyze, report.

Exit codes: 0 success, 1 partial failure (e.g. aborted conversations),
2 configuration or usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from importlib import resources
from pathlib import Path

from prisonsim import analysis
from prisonsim.errors import AnnotationError, ConfigurationError, PrisonSimError
from prisonsim.gateway import (
    HttpScorer,
    Lexicon,
    LexiconScorer,
    MockChatBackend,
    ModerationClient,
    ScoreRecord,
    ToxicityClient,
    backend_from_spec,
)
from prisonsim.gateway.ratelimit import TokenBucket
from prisonsim.gateway.scoring import PROXIES
from prisonsim.integrity import (
    ResolvedLabel,
    ValidityVerdict,
    agreement_table,
    apply_human_overrides,
    build_analysis_sets,
    detect_role_switch,
    import_annotations,
    parse_annotation,
    resolve_all,
)
from prisonsim.matrix import (
    DEFAULT_REPETITIONS,
    DecodingParams,
    RunSpec,
    enumerate_scenarios,
    expand_runs,
    scenarios_per_model,
)
from prisonsim.metrics import SCOPES, THRESHOLD, factor_row
from prisonsim.orchestrator import (
    Conversation,
    Limits,
    SpeakerSelection,
    Status,
    logical_clock,
    run_plan,
    wall_clock,
)
from prisonsim.stats.timeseries import TimeSeriesWarning
from prisonsim.store import Kind, Store, encode

log = logging.getLogger("prisonsim")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2


def _resource(name: str) -> Path:
    return Path(str(resources.files("prisonsim.resources").joinpath(name)))


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigurationError("config must be a JSON object")
    return cfg


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _models_arg(values: list[str] | None, cfg: dict) -> list[str]:
    if not values:
        models = cfg.get("models")
        if not models:
            raise ConfigurationError("no models given (use --models or the config file)")
        return list(models)
    if len(values) == 1 and values[0].isdigit():
        return [f"mock-{i}" for i in range(1, int(values[0]) + 1)]
    return [m for v in values for m in v.split(",") if m]


def _conversations(store: Store) -> list[Conversation]:
    return [Conversation.from_dict(d) for d in store.load(Kind.CONVERSATION)]


def _scores(store: Store, scorer_id: str | None) -> list[ScoreRecord]:
    filters = {"scorer_id": scorer_id} if scorer_id else None
    return [ScoreRecord.from_dict(d) for d in store.load(Kind.SCORE_RECORD, filters)]


def _labels(store: Store) -> dict[str, ResolvedLabel]:
    return {d["conversation_id"]: ResolvedLabel.from_dict(d) for d in store.load(Kind.RESOLVED_LABEL)}


def _verdicts(store: Store) -> dict[str, ValidityVerdict]:
    return {
        d["conversation_id"]: ValidityVerdict.from_dict(d)
        for d in store.load(Kind.VALIDITY_VERDICT, {"source": "Heuristic"})
    }


def _model_order(conversations: list[Conversation], cfg: dict) -> list[str]:
    seen = list(cfg.get("models") or [])
    for c in conversations:
        if c.run.scenario.model_id not in seen:
            seen.append(c.run.scenario.model_id)
    present = {c.run.scenario.model_id for c in conversations}
    return [m for m in seen if m in present]


def _single_scorer(store: Store, requested: str | None) -> str:
    if requested:
        return requested
    ids = sorted({d["scorer_id"] for d in store.load(Kind.SCORE_RECORD)})
    if len(ids) != 1:
        raise ConfigurationError(f"choose a scorer with --scorer-id (found {ids or 'none'})")
    return ids[0]


# -- subcommands -------------------------------------------------------------


def cmd_plan(args, cfg, store: Store) -> int:
    models = _models_arg(args.models, cfg)
    reps = args.reps or cfg.get("repetitions", DEFAULT_REPETITIONS)
    scenarios = enumerate_scenarios(models)
    runs = expand_runs(scenarios, reps, args.seed)
    lines = [encode(Kind.RUN_SPEC, r.to_dict()) for r in runs]
    _write("\n".join(lines) + "\n", args.out)
    store.persist_many(Kind.RUN_SPEC, (r.to_dict() for r in runs))
    limits = _limits(args, cfg)
    print(
        f"{len(scenarios)} scenarios ({scenarios_per_model()} per model x {len(models)} models), "
        f"{reps} repetitions, {len(runs)} runs, "
        f"{len(runs) * (limits.guard + limits.prisoner)} expected messages",
        file=sys.stderr,
    )
    return EXIT_OK


def _limits(args, cfg) -> Limits:
    lim = cfg.get("limits", {})
    return Limits(
        args.guard_messages if getattr(args, "guard_messages", None) is not None else lim.get("guard", 10),
        args.prisoner_messages if getattr(args, "prisoner_messages", None) is not None else lim.get("prisoner", 9),
    )


def _read_plan(path: str) -> list[RunSpec]:
    runs = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read plan {path}: {exc}") from None
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            if doc.get("kind") != Kind.RUN_SPEC.value:
                raise ValueError("not a RunSpec document")
            runs.append(RunSpec.from_dict(doc["payload"]))
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigurationError(f"{path}:{n}: {exc}") from None
    return runs


def cmd_run(args, cfg, store: Store) -> int:
    runs = _read_plan(args.plan)
    backend_spec = args.backend or _backend_from_config(cfg)
    if backend_spec == "mock:builtin":
        backend = MockChatBackend.from_file(_resource("mock_script.json"))
    else:
        backend = backend_from_spec(backend_spec, timeout=args.timeout)
    if args.requests_per_second and hasattr(backend, "rate_limiter"):
        backend.rate_limiter = TokenBucket(args.requests_per_second)
    decoding = DecodingParams(**cfg.get("decoding", {}))
    limits = _limits(args, cfg)
    mock = backend_spec.startswith("mock:")
    clock = {"logical": logical_clock, "wall": wall_clock}.get(args.clock) or (
        logical_clock if mock else wall_clock
    )
    speaker = SpeakerSelection(args.speaker)
    summarizer = []
    if args.days > 1:
        if not args.summarizer:
            raise ConfigurationError("--days > 1 needs --summarizer (a text file with the summarizer prompt)")
        summarizer = [s for s in Path(args.summarizer).read_text(encoding="utf-8").split("\n\n") if s.strip()]

    existing = {d["id"]: d for d in store.load(Kind.CONVERSATION)}
    todo = [r for r in runs if r.conversation_id not in existing and f"{r.conversation_id}/d1" not in existing]
    directives = (line for line in sys.stdin) if speaker is SpeakerSelection.MANUAL else None
    fresh = run_plan(
        todo,
        backend,
        decoding,
        limits,
        parallel=args.parallel,
        days=args.days,
        summarizer_sections=summarizer,
        speaker=speaker,
        directives=directives,
        clock=clock,
        # scripted backends run on logical time, so retries need no real wait
        **({"sleep": lambda _s: None} if mock else {}),
        on_result=lambda batch: store.persist_many(Kind.CONVERSATION, (c.to_dict() for c in batch)),
    )
    by_id = {c.id: c.to_dict() for c in fresh}
    by_id.update(existing)
    wanted = [
        cid
        for r in runs
        for cid in ([r.conversation_id] + [f"{r.conversation_id}/d{d}" for d in range(1, args.days + 1)])
        if cid in by_id
    ]
    docs = [by_id[cid] for cid in dict.fromkeys(wanted)]
    if args.out:
        _write("".join(encode(Kind.CONVERSATION, d) + "\n" for d in docs), args.out)
    aborted = sum(d["status"] == Status.ABORTED.value for d in docs)
    print(f"{len(docs)} conversations ({len(fresh)} new), {aborted} aborted", file=sys.stderr)
    return EXIT_PARTIAL if aborted else EXIT_OK


def _backend_from_config(cfg: dict) -> str:
    b = cfg.get("backend") or {}
    if b.get("kind") == "mock":
        return "mock:" + b.get("script", "builtin")
    if b.get("kind") == "http" and b.get("url"):
        return b["url"]
    raise ConfigurationError("no backend given (use --backend or the config file)")


def cmd_validate(args, cfg, store: Store) -> int:
    verdicts = [detect_role_switch(c) for c in _conversations(store) if c.messages]
    store.persist_many(Kind.VALIDITY_VERDICT, (v.to_dict() for v in verdicts))
    invalid = sum(not v.valid for v in verdicts)
    print(f"{len(verdicts)} conversations checked, {invalid} flagged", file=sys.stderr)
    return EXIT_OK


def _build_scorer(args, cfg):
    kind = args.scorer or cfg.get("scorers", {}).get("kind", "lexicon")
    sc = cfg.get("scorers", {})
    if kind.startswith("lexicon"):
        path = kind.partition(":")[2] or sc.get("lexicon") or str(_resource("lexicon.json"))
        return LexiconScorer(Lexicon.from_file(path), args.scorer_id or "lexicon")
    if kind == "http":
        tox_url = args.toxicity_url or sc.get("toxicity_url")
        mod_url = args.moderation_url or sc.get("moderation_url")
        if not tox_url or not mod_url:
            raise ConfigurationError("http scoring needs --toxicity-url and --moderation-url")
        limiter = TokenBucket(args.requests_per_second) if args.requests_per_second else None
        return HttpScorer(
            ToxicityClient(tox_url, rate_limiter=limiter),
            ModerationClient(mod_url, api_key=os.environ.get("MODERATION_API_KEY"), rate_limiter=limiter),
            args.scorer_id or "http",
        )
    raise ConfigurationError(f"unknown scorer {kind!r}")


def cmd_score(args, cfg, store: Store) -> int:
    scorer = _build_scorer(args, cfg)
    done = {(d["conversation_id"], d["turn_index"]) for d in store.load(Kind.SCORE_RECORD, {"scorer_id": scorer.scorer_id})}
    pending = [
        m for c in _conversations(store) for m in c.messages if (m.conversation_id, m.turn_index) not in done
    ]
    batch = 32
    written = 0
    for start in range(0, len(pending), batch):
        chunk = pending[start : start + batch]
        results = scorer.score_batch([m.text for m in chunk])
        records = [
            ScoreRecord(m.conversation_id, m.turn_index, r["toxicity"], r["harassment"], r["violence"], scorer.scorer_id)
            for m, r in zip(chunk, results)
        ]
        written += store.persist_many(Kind.SCORE_RECORD, (r.to_dict() for r in records))
    print(f"{written} messages scored with {scorer.scorer_id}", file=sys.stderr)
    return EXIT_OK


def cmd_annotate(args, cfg, store: Store) -> int:
    if args.action == "import":
        records = import_annotations(args.file)
        store.persist_many(
            Kind.ANNOTATION_RECORD, ({**r.to_dict(), "layer": args.layer} for r in records)
        )
        print(f"{len(records)} annotations imported (layer {args.layer})", file=sys.stderr)
        return EXIT_OK
    docs = store.load(Kind.ANNOTATION_RECORD)
    strip = lambda d: {k: v for k, v in d.items() if k != "layer"}  # noqa: E731
    first = [parse_annotation(strip(d)) for d in docs if d.get("layer", 1) == 1]
    second = [parse_annotation(strip(d)) for d in docs if d.get("layer", 1) == 2]
    labels = resolve_all(first, second)
    store.persist_many(Kind.RESOLVED_LABEL, (l.to_dict() for l in labels.values()))
    model_of = {c.id: c.run.scenario.model_id for c in _conversations(store)}
    rows = agreement_table(first, model_of)
    _write(analysis.to_csv(rows, list(rows[0]) if rows else ["model"]), args.out)
    pending = sum(l.resolution.value == "Pending" for l in labels.values())
    print(f"{len(labels)} conversations resolved, {pending} pending", file=sys.stderr)
    return EXIT_OK


def _metric_rows(store: Store, scorer_id: str, threshold: float) -> list[dict]:
    convs = {c.id: c for c in _conversations(store)}
    rows = []
    for d in store.load(Kind.METRICS, {"scorer_id": scorer_id, "threshold": threshold}):
        conv = convs[d["conversation_id"]]
        rows.append({"conversation_id": conv.id, **factor_row(conv), **d["values"]})
    return rows


def cmd_metrics(args, cfg, store: Store) -> int:
    from prisonsim.metrics import metrics_table

    scorer_id = _single_scorer(store, args.scorer_id)
    threshold = args.threshold if args.threshold is not None else cfg.get("threshold", THRESHOLD)
    rows = metrics_table(_conversations(store), _scores(store, scorer_id), threshold, scorer_id)
    measure_cols = [c for c in rows[0] if c.startswith(PROXIES)] if rows else []
    store.persist_many(
        Kind.METRICS,
        (
            {"conversation_id": r["conversation_id"], "scorer_id": scorer_id, "threshold": threshold,
             "values": {c: r[c] for c in measure_cols}}
            for r in rows
        ),
    )
    rows = _metric_rows(store, scorer_id, threshold)
    if args.out:
        _write(analysis.to_csv(rows), args.out)
    print(f"metrics for {len(rows)} conversations", file=sys.stderr)
    return EXIT_OK


def cmd_analyze(args, cfg, store: Store) -> int:
    convs = _conversations(store)
    labels = _labels(store)
    verdicts = apply_human_overrides(_verdicts(store), labels)
    sets = build_analysis_sets(convs, verdicts, labels, args.mode)
    valid = set(sets.valid)
    models = _model_order(convs, cfg)
    threshold = args.threshold if args.threshold is not None else cfg.get("threshold", THRESHOLD)
    what = args.what
    params = {"mode": args.mode}

    def metric_rows():
        scorer = _single_scorer(store, args.scorer_id)
        params["scorer_id"] = scorer
        params["threshold"] = threshold
        rows = [r for r in _metric_rows(store, scorer, threshold) if r["conversation_id"] in valid]
        if not rows:
            raise ConfigurationError("no metrics for valid conversations; run `metrics` first")
        return rows

    if what == "ols":
        rows = metric_rows()
        out = []
        for scope in SCOPES:
            outcome = f"{args.proxy}_{args.measure}_{scope}"
            out += analysis.ols_report(rows, outcome, _model_order([c for c in convs if c.id in valid], cfg))
        params.update(proxy=args.proxy, measure=args.measure)
    elif what == "logit":
        persuasion = set(sets.persuasion)
        rows = [
            {**factor_row(c), "outcome": labels[c.id].outcome.value}
            for c in convs
            if c.id in persuasion
        ]
        if not rows:
            raise ConfigurationError("no labelled Yes/No conversations; import and resolve annotations first")
        present = _model_order([c for c in convs if c.id in persuasion], cfg)
        out = analysis.logit_report(rows, present, not args.no_disclosures)
        params.update(disclosures=not args.no_disclosures)
    elif what == "granger":
        scorer = _single_scorer(store, args.scorer_id)
        params["scorer_id"] = scorer
        chosen = [c for c in convs if c.id in valid]
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", TimeSeriesWarning)
            detail = analysis.granger_table(chosen, _scores(store, scorer))
        if caught:
            print(f"{len(caught)} degenerate-series warnings (constant or near-constant scores)", file=sys.stderr)
        out = analysis.granger_summary(detail, args.alpha)
        params["alpha"] = args.alpha
        if args.detail_out:
            _write(analysis.to_csv(detail), args.detail_out)
    elif what == "correlate":
        out = analysis.correlation_rows(metric_rows(), args.proxy, args.measure)
        params.update(proxy=args.proxy, measure=args.measure)
    elif what == "temporal":
        scorer = _single_scorer(store, args.scorer_id)
        params.update(scorer_id=scorer, proxy=args.proxy)
        chosen = [c for c in convs if c.id in valid]
        out = analysis.temporal_rows(chosen, _scores(store, scorer), args.proxy)
    elif what == "persuasion-summary":
        out = analysis.persuasion_summary(convs, labels, sets.valid)
    elif what == "crosstab":
        column = f"{args.proxy}_{args.measure}_overall"
        out = analysis.persuasion_crosstab(metric_rows(), labels, column)
        params["measure"] = column
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigurationError(f"unknown analysis {what}")

    name = what + "".join(f" {k}={analysis.fmt(v)}" for k, v in sorted(params.items()))
    clean = [{k: analysis.fmt(v) for k, v in r.items()} for r in out]
    columns = list(out[0]) if out else []
    store.persist(
        Kind.FIT_REPORT,
        {"name": name, "analysis": what, "params": params, "columns": columns, "rows": clean},
    )
    _write(analysis.to_csv(out), args.out)
    return EXIT_OK


def render_report(store: Store) -> str:
    convs = store.load(Kind.CONVERSATION)
    complete = sum(d["status"] == "Complete" for d in convs)
    verdicts = store.load(Kind.VALIDITY_VERDICT, {"source": "Heuristic"})
    lines = [
        "# prisonsim report",
        "",
        f"conversations: {len(convs)}",
        f"complete: {complete}",
        f"aborted: {len(convs) - complete}",
        f"messages: {sum(len(d['messages']) for d in convs)}",
        f"heuristic verdicts: {len(verdicts)} ({sum(not v['valid'] for v in verdicts)} flagged)",
        f"score records: {len(store.load(Kind.SCORE_RECORD))}",
        f"resolved labels: {len(store.load(Kind.RESOLVED_LABEL))}",
        "",
    ]
    for rep in sorted(store.load(Kind.FIT_REPORT), key=lambda d: d["name"]):
        lines.append(f"## {rep['name']}")
        lines.append("")
        rows = rep["rows"]
        lines.append(analysis.to_csv(rows, rep.get("columns")).rstrip("\n") if rows else "(no rows)")
        lines.append("")
    return "\n".join(lines)


def cmd_report(args, cfg, store: Store) -> int:
    _write(render_report(store), args.out)
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prisonsim", description=__doc__.splitlines()[0])
    parser.add_argument("--store", default="store", help="store directory (default: ./store)")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, default=0, help="base seed for all randomness")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="enumerate scenarios and runs")
    p.add_argument("--models", nargs="+", help="model ids, or a count N for mock-1..mock-N")
    p.add_argument("--reps", type=int)
    p.add_argument("--out", help="plan file (default: stdout)")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("run", help="run planned conversations")
    p.add_argument("--plan", required=True)
    p.add_argument("--backend", help="http(s)://host:port, mock:script.json or mock:builtin")
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--out", help="write the conversations (plan order) as JSON lines")
    p.add_argument("--speaker", choices=[s.value for s in SpeakerSelection], default="round-robin")
    p.add_argument("--days", type=int, default=1)
    p.add_argument("--summarizer", help="text file with summarizer prompt sections")
    p.add_argument("--guard-messages", type=int)
    p.add_argument("--prisoner-messages", type=int)
    p.add_argument("--clock", choices=["auto", "wall", "logical"], default="auto")
    p.add_argument("--timeout", type=float, default=120.0)
    p.add_argument("--requests-per-second", type=float)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="flag role switching")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("score", help="score every message")
    p.add_argument("--scorer", help="lexicon[:path.json] or http")
    p.add_argument("--scorer-id")
    p.add_argument("--toxicity-url")
    p.add_argument("--moderation-url")
    p.add_argument("--requests-per-second", type=float)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("annotate", help="import and resolve persuasion annotations")
    asub = p.add_subparsers(dest="action", required=True)
    a = asub.add_parser("import")
    a.add_argument("file")
    a.add_argument("--layer", type=int, choices=[1, 2], default=1, help="2 = adjudications")
    a.set_defaults(func=cmd_annotate)
    a = asub.add_parser("resolve")
    a.add_argument("--out", help="agreement statistics CSV (default: stdout)")
    a.set_defaults(func=cmd_annotate)

    p = sub.add_parser("metrics", help="conversation-level measures")
    p.add_argument("--scorer-id")
    p.add_argument("--threshold", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("analyze", help="statistical analyses")
    p.add_argument(
        "what",
        choices=["ols", "logit", "granger", "correlate", "temporal", "persuasion-summary", "crosstab"],
    )
    p.add_argument("--scorer-id")
    p.add_argument("--threshold", type=float)
    p.add_argument("--proxy", choices=PROXIES, default="toxicity")
    p.add_argument("--measure", choices=["pct", "mean"], default="pct")
    p.add_argument("--mode", choices=["human", "heuristic"], default="human")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--no-disclosures", action="store_true")
    p.add_argument("--detail-out", help="granger: per-conversation results CSV")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="render all stored analyses")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        cfg = load_config(args.config)
        store = Store(args.store)
        return args.func(args, cfg, store)
    except (ConfigurationError, AnnotationError, OSError) as exc:
        # bad arguments or unreadable/malformed input files
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PrisonSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
