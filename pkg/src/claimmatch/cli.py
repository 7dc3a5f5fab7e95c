"""Operator command line for the claim-matching toolkit.

Every subcommand logs its fully resolved configuration (defaults and
seeds included) to stderr before doing any work, so each output can be
reproduced from the log alone.  Exit codes: 0 success, 1 usage error,
2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .bm25 import InvertedIndex
from .cluster import OnlineSingleLinkClusterer
from .corpus import (
    Corpus,
    CorpusError,
    Source,
    load_annotated_pairs,
    load_parallel_pairs,
    parse_claim_label,
    parse_similarity_label,
    scrub_pii,
)
from .corpus import Message
from .distill import DistillConfig, DistillDivergenceError, distill_train
from .embedding import (
    HashedNGramEncoder,
    ProviderError,
    RemoteEmbeddingProvider,
    StaticProvider,
    VectorStore,
    cosine,
    read_embedding_file,
    write_embedding_file,
)
from .evaluation import (
    CLAIM_CATEGORIES,
    POSITIVE_RULES,
    SIMILARITY_CATEGORIES,
    AgreementTable,
    RankedQueryResult,
    binarize_majorities,
    collapse_claim_label,
    collapse_similarity_label,
    f1_sweep,
    has_positive_at_k,
    mfr,
    mrr,
    randolph_kappa,
)
from .matcher import (
    AdaBoostStumpClassifier,
    ClaimMatcher,
    MatchConfig,
    adaboost_eval_cv,
    build_balanced_pairs,
    decide_band,
    pair_design_matrix,
)
from .sampler import SampledPair, SamplingPlan, sample_pairs, sample_random_pairs, write_sample_file

logger = logging.getLogger("claimmatch.cli")

DEFAULT_SEED = 13
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

PROVIDER_KINDS = ("file", "remote", "toy")


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _log_config(args: argparse.Namespace) -> None:
    shown = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    logger.info("resolved config: %s", json.dumps(shown, default=str, sort_keys=True))


def _parse_provider_spec(spec: str) -> tuple[str, str]:
    kind, _, arg = spec.partition(":")
    if kind not in PROVIDER_KINDS:
        raise ValueError(
            f"provider spec must start with one of {PROVIDER_KINDS}, got {spec!r}"
        )
    if kind in ("file", "remote") and not arg:
        raise ValueError(f"provider spec {spec!r} needs an argument after the colon")
    return kind, arg


def _load_corpus(path) -> Corpus:
    corpus = Corpus()
    corpus.ingest_messages(path)
    return corpus


def _text_provider(spec: str, corpus: Corpus | None):
    """Provider whose embed_batch accepts message texts.

    file: specs hold id-keyed vectors; with a corpus they are re-keyed to
    the message texts, without one they stay id-keyed.
    """
    kind, arg = _parse_provider_spec(spec)
    if kind == "toy":
        return HashedNGramEncoder.load(arg) if arg else HashedNGramEncoder()
    if kind == "remote":
        url = os.environ.get("CLAIMMATCH_PROVIDER_URL", arg)
        return RemoteEmbeddingProvider(url)
    ids, matrix = read_embedding_file(arg)
    if corpus is None:
        return StaticProvider(dict(zip(ids, matrix)), name=f"file:{arg}")
    by_id = dict(zip(ids, matrix))
    keyed: dict[str, np.ndarray] = {}
    for msg in corpus:
        if msg.id not in by_id:
            raise CorpusError(f"embedding file {arg} has no vector for {msg.id!r}")
        keyed[msg.text] = by_id[msg.id]
    return StaticProvider(keyed, name=f"file:{arg}")


def _vector_store(spec: str, corpus: Corpus) -> VectorStore:
    """id -> vector store for the corpus under the given provider spec."""
    kind, arg = _parse_provider_spec(spec)
    if kind == "file":
        store = VectorStore.load(arg)
        missing = [m.id for m in corpus if m.id not in store]
        if missing:
            raise CorpusError(
                f"embedding file {arg} is missing {len(missing)} corpus ids "
                f"(first: {missing[0]!r})"
            )
        return store
    provider = _text_provider(spec, corpus)
    return VectorStore.from_provider(provider, {m.id: m.text for m in corpus})


def _append_record(path, metric: str, value: float, std: float | None, config: dict) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(
            json.dumps(
                {"metric": metric, "value": value, "std": std, "config": config},
                ensure_ascii=False,
                sort_keys=True,
            )
            + "\n"
        )


# -- subcommands -----------------------------------------------------------------


def cmd_ingest(args) -> int:
    corpus = Corpus()
    report = corpus.ingest_messages(args.input, default_source=Source(args.source))
    corpus.export(args.output)
    print(f"loaded {report.loaded} messages into {args.output}")
    if report.skipped_empty:
        print(
            f"skipped {len(report.skipped_empty)} empty-after-scrub messages: "
            + ", ".join(report.skipped_empty[:10])
            + ("..." if len(report.skipped_empty) > 10 else "")
        )
    return EXIT_OK


def cmd_index(args) -> int:
    corpus = _load_corpus(args.corpus)
    index = InvertedIndex(k1=args.k1, b=args.b)
    index.fit({m.id: m.text for m in corpus})
    index.save(args.output)
    print(f"indexed {index.doc_count} documents, {len(index.postings)} terms")
    return EXIT_OK


def cmd_embed(args) -> int:
    corpus = _load_corpus(args.corpus)
    provider = _text_provider(args.provider, corpus)
    ids = [m.id for m in corpus]
    matrix = provider.embed_batch([corpus.get(i).text for i in ids])
    write_embedding_file(args.output, ids, matrix)
    print(f"embedded {len(ids)} messages at dim {matrix.shape[1]} -> {args.output}")
    return EXIT_OK


def _build_matcher(args, corpus: Corpus) -> ClaimMatcher:
    index = InvertedIndex.load(args.index)
    store = _vector_store(args.provider, corpus)
    kind, _ = _parse_provider_spec(args.provider)
    provider = None if kind == "file" else _text_provider(args.provider, corpus)
    config = MatchConfig(
        retrieval_depth=args.depth,
        auto_match_threshold=args.auto,
        suggest_threshold=args.suggest,
    )
    return ClaimMatcher(index, store, provider, config)


def cmd_query(args) -> int:
    if (args.text is None) == (args.query_id is None):
        raise ValueError("give exactly one of --text or --query-id")
    corpus = _load_corpus(args.corpus)
    matcher = _build_matcher(args, corpus)
    if args.query_id is not None:
        message = corpus.get(args.query_id)
    else:
        if matcher.provider is None:
            raise ValueError(
                "file: providers cannot embed new text; use --query-id instead"
            )
        message = Message(id="(query)", text=scrub_pii(args.text), source=Source.TIPLINE)
    ranked = matcher.rank(message)
    best = ranked[0].cosine if ranked else None
    print(f"decision: {decide_band(best, matcher.config).value}")
    for rank, cand in enumerate(ranked, start=1):
        print(f"{rank}\t{cand.doc_id}\t{cand.cosine:.6f}\t{cand.bm25_score:.6f}")
    return EXIT_OK


def _load_queries(path) -> list[tuple[str, frozenset[str]]]:
    queries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                queries.append(
                    (str(rec["query_id"]), frozenset(str(r) for r in rec["relevant"]))
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusError(f"line {lineno}: bad query record: {exc}") from exc
    if not queries:
        raise CorpusError(f"no queries in {path}")
    return queries


def cmd_eval_ir(args) -> int:
    corpus = _load_corpus(args.corpus)
    matcher = _build_matcher(args, corpus)
    results = []
    for query_id, relevant in _load_queries(args.queries):
        ranked = matcher.rank(corpus.get(query_id))
        results.append(
            RankedQueryResult(query_id, tuple(c.doc_id for c in ranked), relevant)
        )
    value_mrr = mrr(results)
    value_mfr = mfr(results, absent_rank=args.absent_rank)
    print(f"queries: {len(results)}")
    print(f"mrr: {value_mrr:.4f}")
    print(f"mfr: {value_mfr:.4f} (absent rank {args.absent_rank})")
    for k in (1, 5, 10, 20):
        print(f"has_positive@{k}: {has_positive_at_k(results, k):.4f}")
    if args.record:
        config = {"queries": args.queries, "provider": args.provider, "depth": args.depth}
        _append_record(args.record, "mrr", value_mrr, None, config)
        _append_record(args.record, "mfr", value_mfr, None, config)
    return EXIT_OK


def _pair_cosines(pairs, store: VectorStore) -> np.ndarray:
    return np.array(
        [cosine(store.get(p.id_a), store.get(p.id_b)) for p in pairs], dtype=np.float64
    )


def cmd_eval_threshold(args) -> int:
    corpus = _load_corpus(args.corpus)
    store = _vector_store(args.provider, corpus)
    pairs = load_annotated_pairs(args.pairs)
    rule = "vs+ss" if args.positive_class == "vs+ss" else "vs"
    keep, labels = binarize_majorities([p.majority for p in pairs], rule)
    kept = [p for p, k in zip(pairs, keep) if k]
    cosines = _pair_cosines(kept, store)
    result = f1_sweep(
        cosines, labels,
        folds=args.folds, repeats=args.repeats,
        grid_step=args.grid_step, seed=args.seed,
    )
    tau, best = result.best_row()
    print(f"pairs used: {len(kept)} (dropped {len(pairs) - len(kept)} without a usable label)")
    print(f"held-out F1: {result.cv_f1} at modal threshold {result.modal_threshold:.2f}")
    print(
        f"full-data best: F1 {best.f1:.4f} at threshold {tau:.2f} "
        f"(precision {best.precision:.4f}, recall {best.recall:.4f})"
    )
    if args.record:
        config = {
            "pairs": args.pairs, "provider": args.provider, "rule": rule,
            "folds": args.folds, "repeats": args.repeats, "seed": args.seed,
            "modal_threshold": result.modal_threshold,
        }
        _append_record(args.record, "f1_sweep", result.cv_f1.mean, result.cv_f1.std, config)
    return EXIT_OK


def cmd_eval_classifier(args) -> int:
    corpus = _load_corpus(args.corpus)
    store = _vector_store(args.provider, corpus)
    pairs = load_annotated_pairs(args.pairs)
    balanced = build_balanced_pairs(pairs, languages=corpus.languages(), seed=args.seed)
    texts = {m.id: m.text for m in corpus}
    report = adaboost_eval_cv(
        balanced, texts, store,
        n_rounds=args.rounds, folds=args.folds, repeats=args.repeats, seed=args.seed,
    )
    print(f"balanced pairs: {len(balanced)}")
    print(f"accuracy: {report.accuracy}")
    print(f"f1 (match): {report.f1_positive}")
    print(f"f1 (no match): {report.f1_negative}")
    if args.save_model:
        X, y = pair_design_matrix(balanced, texts, store)
        model = AdaBoostStumpClassifier(n_rounds=args.rounds).fit(X, y)
        model.save(args.save_model)
        print(f"model trained on all pairs -> {args.save_model}")
    if args.record:
        config = {
            "pairs": args.pairs, "provider": args.provider, "rounds": args.rounds,
            "folds": args.folds, "repeats": args.repeats, "seed": args.seed,
        }
        _append_record(
            args.record, "adaboost_accuracy", report.accuracy.mean,
            report.accuracy.std, config,
        )
    return EXIT_OK


def cmd_sample_pairs(args) -> int:
    corpus = _load_corpus(args.corpus)
    provider = _text_provider(args.provider, corpus)
    plan = SamplingPlan(
        mean=args.mean, std=args.std, pairs_per_model=args.pairs,
        random_pairs=args.random_pairs, bin_width=args.bin_width, seed=args.seed,
    )
    messages = list(corpus)
    samples = sample_pairs(messages, provider, plan)
    if plan.random_pairs:
        matrix = provider.embed_batch([m.text for m in messages])
        vecs = {m.id: matrix[i] for i, m in enumerate(messages)}
        for id_a, id_b in sample_random_pairs(messages, plan.random_pairs, plan.seed):
            samples.append(
                SampledPair(id_a, id_b, cosine(vecs[id_a], vecs[id_b]), "random", provider.name)
            )
    write_sample_file(args.output, samples)
    print(f"wrote {len(samples)} pairs -> {args.output}")
    return EXIT_OK


def cmd_kappa(args) -> int:
    rows = []
    with open(args.labels, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                raw = [str(l) for l in rec["labels"]]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusError(f"line {lineno}: bad label record: {exc}") from exc
            rows.append(raw)
    if args.collapse == "claim":
        table_rows = tuple(
            tuple(collapse_claim_label(parse_claim_label(l)) for l in row) for row in rows
        )
        categories = CLAIM_CATEGORIES
    elif args.collapse == "similarity":
        table_rows = tuple(
            tuple(collapse_similarity_label(parse_similarity_label(l)) for l in row)
            for row in rows
        )
        categories = SIMILARITY_CATEGORIES
    else:
        table_rows = tuple(tuple(row) for row in rows)
        categories = tuple(sorted({l for row in rows for l in row}))
    value = randolph_kappa(AgreementTable(table_rows, categories))
    print(f"{value:.9g}")
    return EXIT_OK


def cmd_distill(args) -> int:
    pairs = load_parallel_pairs(args.pairs)
    teacher = _text_provider(args.teacher, corpus=None)
    student = HashedNGramEncoder(
        dim=teacher.dim, n_buckets=args.buckets, init_seed=args.seed,
    )
    config = DistillConfig(
        batch_size=args.batch_size, learning_rate=args.lr,
        epochs=args.epochs, shuffle_seed=args.seed,
    )
    trace = distill_train(teacher, student, pairs, config)
    student.save(args.output)
    for i, loss in enumerate(trace.epoch_losses, start=1):
        logger.info("epoch %d loss %.6g", i, loss)
    if trace.epoch_losses:
        print(
            f"trained {args.epochs} epochs on {len(pairs)} pairs; "
            f"loss {trace.epoch_losses[0]:.6g} -> {trace.epoch_losses[-1]:.6g}"
        )
    print(f"student snapshot -> {args.output}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    corpus = _load_corpus(args.corpus)
    store = _vector_store(args.provider, corpus)
    clusterer = OnlineSingleLinkClusterer(args.threshold)
    for msg in corpus:
        clusterer.add_item(msg.id, store.get(msg.id))
    clusterer.export_assignments(args.output)
    several = clusterer.clusters_of_size(2)
    largest = len(several[0][1]) if several else (1 if len(clusterer) else 0)
    print(f"clustered {len(clusterer)} messages at threshold {args.threshold}")
    print(f"clusters with >= 2 members: {len(several)}; largest: {largest}")
    print(f"assignments -> {args.output}")
    if args.representatives:
        for cid, members in clusterer.clusters_of_size(max(args.min_size, 2)):
            reps = clusterer.representatives(cid, seed=args.seed)
            print(
                f"cluster {cid} (size {len(members)}): medoid {reps.medoid}, "
                f"anti-medoid {reps.anti_medoid}, random {reps.random}"
            )
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import MatchingService, create_app

    kind, _ = _parse_provider_spec(args.provider)
    if kind == "file":
        raise ValueError("serve needs a provider that can embed new text (toy: or remote:)")
    provider = _text_provider(args.provider, corpus=None)
    config = MatchConfig(
        retrieval_depth=args.depth,
        auto_match_threshold=args.auto,
        suggest_threshold=args.suggest,
    )
    service = MatchingService(provider, args.data_dir, config)
    app = create_app(service, auth_token=args.token)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def cmd_report(args) -> int:
    records = []
    for path in args.records:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"{path}:{lineno}: malformed record: {exc}") from exc
    if not records:
        raise CorpusError("no evaluation records found")
    width = max(len(str(r.get("metric", ""))) for r in records)
    print(f"{'metric':<{width}}  {'value':>8}  {'std':>8}  config")
    for rec in records:
        std = rec.get("std")
        std_text = f"{std:8.4f}" if isinstance(std, (int, float)) else f"{'-':>8}"
        config = json.dumps(rec.get("config", {}), sort_keys=True)
        print(f"{rec.get('metric', '?'):<{width}}  {rec.get('value', float('nan')):8.4f}  {std_text}  {config}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------


def _add_provider(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--provider", required=True,
        help="embedding provider: file:PATH | remote:URL | toy[:SNAPSHOT]",
    )


def _add_cv(p: argparse.ArgumentParser) -> None:
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)


def _add_match_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--depth", type=int, default=50, help="candidates fetched before rerank")
    p.add_argument("--auto", type=float, default=0.95, help="auto-match threshold")
    p.add_argument("--suggest", type=float, default=0.90, help="suggestion threshold")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="claimmatch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="scrub and load raw messages into a corpus file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--source", default=Source.TIPLINE.value,
                   choices=[s.value for s in Source])
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", help="build the term index over a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("embed", help="write an embedding file for a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--output", required=True)
    _add_provider(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("query", help="rank candidates for one query")
    p.add_argument("--corpus", required=True)
    p.add_argument("--index", required=True)
    _add_provider(p)
    p.add_argument("--text")
    p.add_argument("--query-id")
    _add_match_config(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval-ir", help="retrieval metrics over a query file")
    p.add_argument("--queries", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--index", required=True)
    _add_provider(p)
    _add_match_config(p)
    p.add_argument("--absent-rank", type=int, default=None,
                   help="rank charged when no relevant item is retrieved")
    p.add_argument("--record", help="append metric records to this file")
    p.set_defaults(func=cmd_eval_ir)

    p = sub.add_parser("eval-threshold", help="cross-validated cosine threshold sweep")
    p.add_argument("--pairs", required=True)
    p.add_argument("--corpus", required=True)
    _add_provider(p)
    p.add_argument("--positive-class", default="vs", choices=list(POSITIVE_RULES))
    p.add_argument("--grid-step", type=float, default=0.01)
    _add_cv(p)
    p.add_argument("--record")
    p.set_defaults(func=cmd_eval_threshold)

    p = sub.add_parser("eval-classifier", help="cross-validated pair classifier")
    p.add_argument("--pairs", required=True)
    p.add_argument("--corpus", required=True)
    _add_provider(p)
    p.add_argument("--rounds", type=int, default=100)
    _add_cv(p)
    p.add_argument("--save-model")
    p.add_argument("--record")
    p.set_defaults(func=cmd_eval_classifier)

    p = sub.add_parser("sample-pairs", help="draw annotation pairs stratified over cosine")
    p.add_argument("--corpus", required=True)
    p.add_argument("--output", required=True)
    _add_provider(p)
    p.add_argument("--mean", type=float, default=0.825)
    p.add_argument("--std", type=float, default=0.1)
    p.add_argument("--pairs", type=int, default=100)
    p.add_argument("--random-pairs", type=int, default=100)
    p.add_argument("--bin-width", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_sample_pairs)

    p = sub.add_parser("kappa", help="inter-annotator agreement")
    p.add_argument("--labels", required=True)
    p.add_argument("--collapse", default="none", choices=["claim", "similarity", "none"])
    p.set_defaults(func=cmd_kappa)

    p = sub.add_parser("distill", help="train the hashed n-gram student against a teacher")
    p.add_argument("--pairs", required=True, help="TSV of source/target text pairs")
    p.add_argument("--teacher", required=True,
                   help="teacher provider: file:PATH | remote:URL | toy[:SNAPSHOT]")
    p.add_argument("--output", required=True)
    p.add_argument("--buckets", type=int, default=16384)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("cluster", help="single-link clustering of a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--output", required=True)
    _add_provider(p)
    p.add_argument("--threshold", type=float, default=0.90)
    p.add_argument("--min-size", type=int, default=2)
    p.add_argument("--representatives", action="store_true")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("serve", help="run the tipline matching service")
    p.add_argument("--data-dir", required=True)
    _add_provider(p)
    _add_match_config(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--token", default=None,
                   help="bearer token; defaults to CLAIMMATCH_TOKEN")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("report", help="render stored evaluation records as a table")
    p.add_argument("--records", nargs="+", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _log_config(args)
    try:
        return args.func(args)
    except (
        CorpusError,
        ProviderError,
        DistillDivergenceError,
        FileNotFoundError,
        IsADirectoryError,
        PermissionError,
        KeyError,
        ValueError,
    ) as exc:
        detail = exc.args[0] if exc.args else exc
        print(f"error: {detail}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
