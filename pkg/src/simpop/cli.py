"""Command line entry point: reproducible ingest/train/recommend/evaluate runs.

Every command that writes files also writes a JSON manifest next to its
primary output (``<output>.manifest.json``) holding the resolved flags,
seeds, SHA-256 digests of the inputs, and wall time, so any artifact can be
traced back to its exact inputs.

Exit codes: 0 success, 2 input or validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__
from .affinity import (
    PopularityTable,
    build_affinity_graph,
    write_affinity_graph,
)
from .baselines import (
    ClickoutPopularityRanker,
    CooccurrenceKnnRanker,
    InteractionPopularityRanker,
    MetadataKnnRanker,
    RandomRanker,
    load_metadata,
    write_metadata,
)
from .embedder import FitConfig, fit_embedding, write_trace
from .errors import DivergenceError, SimpopError
from .evaluator import SearchGrid, evaluate, grid_search, write_grid_table, write_report
from .model import (
    ModelParams,
    generate_synthetic_network,
    read_model,
    write_model,
)
from .recommender import NextItemRecommender
from .sessions import (
    Role,
    filter_bookable_sessions,
    hide_test_targets,
    parse_session_log,
    read_truth,
    split_by_time,
    write_corpus,
    write_truth,
)
from .synth import SynthConfig, generate

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as stream:
        for chunk in iter(lambda: stream.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(
    command: str,
    args: argparse.Namespace,
    primary_out: Path,
    inputs: list[Path],
    outputs: list[Path],
    seeds: list[int],
    started: float,
) -> None:
    flags = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in vars(args).items()
        if k != "func" and not k.startswith("_")
    }
    manifest = {
        "command": command,
        "version": __version__,
        "flags": flags,
        "seeds": seeds,
        "inputs": {str(p): _sha256(p) for p in inputs if p and Path(p).exists()},
        "outputs": [str(p) for p in outputs],
        "wall_time_s": round(time.perf_counter() - started, 3),
    }
    path = Path(str(primary_out) + ".manifest.json")
    with open(path, "w", encoding="utf-8") as out:
        json.dump(manifest, out, indent=2, sort_keys=True)
        out.write("\n")


def _parse_schema(spec: str | None) -> dict[str, str] | None:
    if not spec:
        return None
    mapping = {}
    for token in spec.split(","):
        key, sep, value = token.partition("=")
        if not sep or not key or not value:
            raise ValueError(f"bad schema entry {token!r}, expected field=column")
        mapping[key.strip()] = value.strip()
    return mapping


def _floats(spec: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in spec.split(",") if tok)


def _ints(spec: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in spec.split(",") if tok)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    role = Role(args.role)
    corpus = parse_session_log(args.input, schema=_parse_schema(args.schema), role=role)
    outputs = [args.out]
    if role is Role.TRAIN:
        if not args.keep_unbookable:
            corpus = filter_bookable_sessions(corpus)
        write_corpus(corpus, args.out)
    else:
        corpus, truth = hide_test_targets(corpus)
        write_corpus(corpus, args.out)
        truth_out = args.truth_out or str(args.out) + ".truth.csv"
        write_truth(truth, truth_out)
        outputs.append(Path(truth_out))
        print(f"truth: {len(truth)} hidden targets -> {truth_out}")
    print(
        f"ingested {corpus.n_sessions} sessions, {corpus.n_actions} actions, "
        f"{len(corpus.item_vocabulary)} items -> {args.out}"
    )
    _write_manifest("ingest", args, args.out, [args.input], outputs, [], started)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    corpus = parse_session_log(args.corpus, role=Role.TRAIN)
    graph = build_affinity_graph(corpus, args.min_sessions, args.max_pairs_per_item)
    pairs_out = args.pairs_out or str(args.out) + ".pairs.tsv"
    popularity_out = args.popularity_out or str(args.out) + ".popularity.tsv"
    trace_out = args.trace_out or str(args.out) + ".trace.csv"
    write_affinity_graph(graph, pairs_out, popularity_out)

    config = FitConfig(
        params=ModelParams(alpha=args.alpha, dim=args.dim, lam=args.lam),
        seed=args.seed,
        init_scale=args.init_scale,
        max_iterations=args.max_iterations,
        gradient_tolerance=args.gradient_tolerance,
        memory=args.memory,
    )
    try:
        model, trace = fit_embedding(graph, config)
    except DivergenceError as exc:
        if exc.trace is not None:
            write_trace(exc.trace, trace_out)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    write_trace(trace, trace_out)
    write_model(model, args.out)
    print(
        f"trained {len(model)} items (dim={args.dim}, alpha={args.alpha}, "
        f"lambda={args.lam}): {trace.iterations} iterations, "
        f"objective {trace.objectives[-1]:.6g}, "
        f"{'converged' if trace.converged else trace.stop_reason}"
    )
    _write_manifest(
        "train",
        args,
        args.out,
        [args.corpus],
        [args.out, Path(pairs_out), Path(popularity_out), Path(trace_out)],
        [args.seed],
        started,
    )
    return EXIT_OK


def cmd_recommend(args: argparse.Namespace) -> int:
    model = read_model(args.model)
    corpus = parse_session_log(args.session, role=Role.TEST)
    if args.session_id:
        if args.session_id not in corpus.sessions:
            raise SimpopError(f"session {args.session_id!r} not in {args.session}")
        session = corpus.sessions[args.session_id]
    elif corpus.n_sessions == 1:
        session = next(iter(corpus.sessions.values()))
    else:
        raise SimpopError(
            f"{args.session} holds {corpus.n_sessions} sessions; pass --session-id"
        )
    popularity = None
    if args.popularity:
        kappa = {}
        with open(args.popularity, "r", encoding="utf-8") as stream:
            for line in stream:
                item, _, value = line.rstrip("\n").partition("\t")
                kappa[item] = float(value)
        popularity = PopularityTable(kappa)
    ranker = NextItemRecommender(
        model, popularity=popularity, anchor_mode=args.anchor_mode
    )
    candidates = args.candidates.split("|") if args.candidates else None
    ranked = ranker.rank(session, candidates, args.top)
    lines = ["rank,item,score,anchor,fallback"]
    for pos, (item, score) in enumerate(ranked.items, start=1):
        lines.append(
            f"{pos},{item},{score:.6g},{ranked.anchor or ''},{ranked.fallback_used}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _build_ranker(args: argparse.Namespace):
    name = args.ranker
    if name == "proposed":
        if not args.model:
            raise SimpopError("--ranker proposed requires --model")
        model = read_model(args.model)
        popularity = None
        if args.train_corpus:
            train = parse_session_log(args.train_corpus, role=Role.TRAIN)
            from .affinity import compute_popularity

            popularity = compute_popularity(train)
        return NextItemRecommender(
            model, popularity=popularity, anchor_mode=args.anchor_mode
        )
    if name == "random":
        return RandomRanker(seed=args.seed)
    if name in ("ipop", "icpop", "icknn", "imknn"):
        if not args.train_corpus:
            raise SimpopError(f"--ranker {name} requires --train-corpus")
        train = parse_session_log(args.train_corpus, role=Role.TRAIN)
        if name == "ipop":
            return InteractionPopularityRanker(train)
        if name == "icpop":
            return ClickoutPopularityRanker(train)
        if name == "icknn":
            graph = build_affinity_graph(
                train, args.min_sessions, args.max_pairs_per_item
            )
            return CooccurrenceKnnRanker(
                graph, k=args.k, clickout_only=args.clickout_only
            )
        if not args.metadata:
            raise SimpopError("--ranker imknn requires --metadata")
        from .affinity import compute_popularity

        return MetadataKnnRanker(
            load_metadata(args.metadata),
            k=args.k,
            popularity=compute_popularity(train),
            clickout_only=args.clickout_only,
        )
    raise SimpopError(f"unknown ranker {name!r}")


def cmd_evaluate(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    test = parse_session_log(args.test_corpus, role=Role.TEST)
    truth = read_truth(args.truth)
    ranker = _build_ranker(args)
    report = evaluate(ranker, test, truth)
    write_report(report, args.out)
    cutoffs = sorted(report.map_at)
    print(
        f"{report.ranker_name}: MRR {report.mrr:.4f}  "
        + "  ".join(f"MAP@{n} {report.map_at[n]:.4f}" for n in cutoffs)
        + f"  ({report.n_sessions} sessions, {report.n_skipped} skipped)"
    )
    inputs = [args.test_corpus, Path(args.truth)]
    if args.model:
        inputs.append(Path(args.model))
    if args.train_corpus:
        inputs.append(Path(args.train_corpus))
    _write_manifest(
        "evaluate", args, args.out, inputs, [args.out], [args.seed], started
    )
    return EXIT_OK


def cmd_gridsearch(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    corpus = parse_session_log(args.corpus, role=Role.TRAIN)
    train, validation = split_by_time(corpus, args.val_fraction)
    grid = SearchGrid(
        dims=_ints(args.dims), lambdas=_floats(args.lambdas), alphas=_floats(args.alphas)
    )
    best, table = grid_search(
        train,
        validation,
        grid=grid,
        seeds=_ints(args.seeds),
        min_sessions=args.min_sessions,
        max_pairs_per_item=args.max_pairs_per_item,
        max_iterations=args.max_iterations,
        gradient_tolerance=args.gradient_tolerance,
        n_jobs=args.threads,
    )
    write_grid_table(table, args.out)
    failed = sum(1 for c in table if c.failed)
    print(
        f"grid search: {len(table)} cells ({failed} failed) -> {args.out}\n"
        f"best: dim={best.params.dim} lambda={best.params.lam} "
        f"alpha={best.params.alpha} seed={best.seed}"
    )
    _write_manifest(
        "gridsearch", args, args.out, [args.corpus], [args.out],
        list(_ints(args.seeds)), started,
    )
    return EXIT_OK


def cmd_synth_edges(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    model = read_model(args.model)
    edges = generate_synthetic_network(model, args.seed)
    with open(args.out, "w", encoding="utf-8") as out:
        for i, j in edges:
            out.write(f"{i}\t{j}\n")
    print(f"sampled {len(edges)} edges over {len(model)} items -> {args.out}")
    _write_manifest(
        "synth-edges", args, args.out, [args.model], [args.out], [args.seed], started
    )
    return EXIT_OK


def cmd_synth_sessions(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    config = SynthConfig(
        n_items=args.items,
        n_clusters=args.clusters,
        dim=args.dim,
        alpha=args.alpha,
        n_train_sessions=args.train_sessions,
        n_test_sessions=args.test_sessions,
        seed=args.seed,
        clickout_rate=args.clickout_rate,
    )
    data = generate(config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_path = out_dir / "train.csv"
    test_path = out_dir / "test.csv"
    metadata_path = out_dir / "metadata.tsv"
    model_path = out_dir / "planted_model.txt"
    write_corpus(data.train, train_path)
    write_corpus(data.test, test_path)
    write_metadata(data.world.metadata, metadata_path)
    write_model(data.world.model, model_path)
    print(
        f"synthetic corpus: {data.train.n_sessions} train / "
        f"{data.test.n_sessions} test sessions over {config.n_items} items "
        f"-> {out_dir}"
    )
    _write_manifest(
        "synth-sessions",
        args,
        train_path,
        [],
        [train_path, test_path, metadata_path, model_path],
        [args.seed],
        started,
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser assembly
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simpop",
        description=(
            "Sequence-aware next-item recommendation: embed items in a metric "
            "space from session co-occurrence and rank by connection probability."
        ),
    )
    parser.add_argument("--version", action="version", version=f"simpop {__version__}")
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="log progress to stderr"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse and validate a raw session log")
    p.add_argument("--input", type=Path, required=True, help="raw CSV (or .gz)")
    p.add_argument("--out", type=Path, required=True, help="canonical corpus path")
    p.add_argument("--role", choices=["train", "test"], default="train")
    p.add_argument(
        "--schema",
        help="comma-separated field=column overrides, e.g. item_ref=reference",
    )
    p.add_argument(
        "--truth-out", help="hidden-target CSV for --role test (default <out>.truth.csv)"
    )
    p.add_argument(
        "--keep-unbookable",
        action="store_true",
        help="keep train sessions that contain no clickout",
    )
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="estimate affinities and fit the embedding")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="model file path")
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--lambda", dest="lam", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-sessions", type=int, default=2)
    p.add_argument("--max-pairs-per-item", type=int, default=500)
    p.add_argument("--max-iterations", type=int, default=500)
    p.add_argument("--gradient-tolerance", type=float, default=1e-4)
    p.add_argument("--init-scale", type=float, default=1.0)
    p.add_argument("--memory", type=int, default=10)
    p.add_argument("--pairs-out")
    p.add_argument("--popularity-out")
    p.add_argument("--trace-out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("recommend", help="rank candidates for one session")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--session", type=Path, required=True, help="canonical corpus file")
    p.add_argument("--session-id")
    p.add_argument("--candidates", help="pipe-separated candidate list")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--anchor-mode", choices=["global", "session"], default="global")
    p.add_argument("--popularity", help="popularity TSV for cold items")
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("evaluate", help="score a ranker on a hidden-target corpus")
    p.add_argument(
        "--ranker",
        required=True,
        choices=["proposed", "random", "ipop", "icpop", "icknn", "imknn"],
    )
    p.add_argument("--test-corpus", type=Path, required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", type=Path, required=True, help="report CSV path")
    p.add_argument("--model", help="model file (proposed)")
    p.add_argument("--train-corpus", help="train corpus (baselines, popularity)")
    p.add_argument("--metadata", help="item properties TSV (imknn)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=100, help="neighbor cap for KNN rankers")
    p.add_argument("--clickout-only", action="store_true")
    p.add_argument("--min-sessions", type=int, default=2)
    p.add_argument("--max-pairs-per-item", type=int, default=500)
    p.add_argument("--anchor-mode", choices=["global", "session"], default="global")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gridsearch", help="hyperparameter grid over a train corpus")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="result table CSV")
    p.add_argument("--dims", default="5,10,20")
    p.add_argument("--lambdas", default="0.1,0.01")
    p.add_argument("--alphas", default="1,2,3")
    p.add_argument("--seeds", default="0")
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--min-sessions", type=int, default=2)
    p.add_argument("--max-pairs-per-item", type=int, default=500)
    p.add_argument("--max-iterations", type=int, default=300)
    p.add_argument("--gradient-tolerance", type=float, default=1e-4)
    p.add_argument(
        "--threads",
        type=int,
        default=int(os.environ.get("SIMPOP_THREADS", "1")),
        help="parallel grid cells (default $SIMPOP_THREADS or 1)",
    )
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("synth", help="generate synthetic artifacts")
    synth_sub = p.add_subparsers(dest="synth_command", required=True)

    q = synth_sub.add_parser("edges", help="sample a network from a model file")
    q.add_argument("--model", type=Path, required=True)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", type=Path, required=True)
    q.set_defaults(func=cmd_synth_edges)

    q = synth_sub.add_parser(
        "sessions", help="generate a planted-world session corpus"
    )
    q.add_argument("--out-dir", required=True)
    q.add_argument("--items", type=int, default=600)
    q.add_argument("--clusters", type=int, default=12)
    q.add_argument("--dim", type=int, default=2)
    q.add_argument("--alpha", type=float, default=2.0)
    q.add_argument("--train-sessions", type=int, default=4000)
    q.add_argument("--test-sessions", type=int, default=1000)
    q.add_argument("--clickout-rate", type=float, default=0.85)
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=cmd_synth_sessions)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (SimpopError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
