"""Command-line surface for the full pipeline.

Every subcommand reads an optional INI config plus ``--set section.key=value``
overrides, writes machine-readable outputs into a run directory, and exits
nonzero with a single-line error on failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .aspects import RuleBasedExtractor, WordVectorSimilarity, load_lexicon, write_mentions, write_vocabulary
from .config import ABLATION_VARIANTS, load_config, save_config
from .corpus import parse_reviews, filter_k_core, read_corpus, split_corpus, write_corpus, write_split_manifest
from .errors import AspectRecError
from .kgraph import serialize_graph
from .pipeline import default_extractor, prepare_corpus


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except AspectRecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aspectrec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, run_dir=True):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key, e.g. train.seed=3")
        if run_dir:
            p.add_argument("--run-dir", required=True, help="directory for run artifacts")

    p = sub.add_parser("ingest", help="parse, filter, and split a raw review file")
    p.add_argument("--input", required=True, help="line-delimited JSON reviews")
    common(p)
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("extract-aspects", help="mine aspect mentions from train reviews")
    _pipeline_args(p)
    common(p)
    p.set_defaults(handler=cmd_extract_aspects)

    p = sub.add_parser("build-kg", help="construct and serialize the knowledge graph")
    _pipeline_args(p)
    common(p)
    p.set_defaults(handler=cmd_build_kg)

    p = sub.add_parser("train", help="train the rating model")
    _pipeline_args(p)
    common(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a trained run on a split")
    _pipeline_args(p)
    p.add_argument("--split", default="test", choices=["train", "validation", "test"])
    common(p)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("ablate", help="train and evaluate one ablation variant")
    _pipeline_args(p)
    p.add_argument("--variant", required=True, choices=list(ABLATION_VARIANTS))
    common(p)
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser("sweep", help="sweep graph propagation depth")
    _pipeline_args(p)
    p.add_argument("--layers", required=True, help="comma-separated layer counts, e.g. 1,2,3")
    common(p)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("predict", help="dump (user, item, y, y_hat) records for a split")
    _pipeline_args(p)
    p.add_argument("--split", default="test", choices=["train", "validation", "test"])
    common(p)
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("dump-attention", help="dump per-pair aspect attention weights")
    _pipeline_args(p)
    p.add_argument("--split", default="test", choices=["train", "validation", "test"])
    common(p)
    p.set_defaults(handler=cmd_dump_attention)
    return parser


def _pipeline_args(p) -> None:
    p.add_argument("--input", required=True, help="line-delimited JSON reviews")
    p.add_argument("--aspect-lexicon", help="aspect terms, one per line")
    p.add_argument("--positive-lexicon", help="positive sentiment terms, one per line")
    p.add_argument("--negative-lexicon", help="negative sentiment terms, one per line")
    p.add_argument("--vectors", help="word vector file for synonym detection")


def _load_config(args):
    overrides = {}
    for entry in args.set:
        if "=" not in entry:
            raise AspectRecError(f"--set expects KEY=VALUE, got {entry!r}")
        key, value = entry.split("=", 1)
        overrides[key.strip()] = value
    return load_config(args.config, overrides)


def _extractor(args):
    if args.aspect_lexicon:
        return RuleBasedExtractor(
            load_lexicon(args.aspect_lexicon),
            load_lexicon(args.positive_lexicon) if args.positive_lexicon else (),
            load_lexicon(args.negative_lexicon) if args.negative_lexicon else (),
        )
    return default_extractor()


def _similarity(args):
    return WordVectorSimilarity.from_file(args.vectors) if args.vectors else None


def _run_dir(args) -> Path:
    path = Path(args.run_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _read_raw_corpus(path, rating_scale):
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    # ingested corpora carry review ids; raw ones get them assigned
    if first.strip() and "review_id" in json.loads(first):
        return read_corpus(path, rating_scale=rating_scale)
    with open(path, encoding="utf-8") as fh:
        return parse_reviews(fh, rating_scale=rating_scale)


def cmd_ingest(args) -> int:
    config = _load_config(args)
    run_dir = _run_dir(args)
    corpus = _read_raw_corpus(args.input, config.rating_scale)
    filtered = filter_k_core(corpus, config.min_reviews)
    splits = split_corpus(filtered, config.split_ratios, seed=config.seed,
                          per_user=config.per_user_split)
    write_corpus(filtered, run_dir / "corpus.jsonl")
    write_split_manifest(splits, run_dir / "splits.tsv")
    save_config(config, run_dir / "config.ini")
    summary = {
        "reviews": len(filtered),
        "users": len(filtered.users),
        "items": len(filtered.items),
        "skipped": corpus.diagnostics.skipped,
        "split_sizes": [len(s) for s in splits],
    }
    (run_dir / "ingest.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return 0


def _prepare(args, config):
    corpus = _read_raw_corpus(args.input, config.rating_scale)
    return prepare_corpus(corpus, config, extractor=_extractor(args),
                          similarity=_similarity(args))


def cmd_extract_aspects(args) -> int:
    config = _load_config(args)
    run_dir = _run_dir(args)
    artifacts = _prepare(args, config)
    write_mentions(artifacts.mentions, artifacts.vocab, run_dir / "mentions.tsv")
    write_vocabulary(artifacts.vocab, run_dir / "vocab_aspects.txt")
    print(json.dumps({"mentions": len(artifacts.mentions), "aspects": len(artifacts.vocab)}))
    return 0


def cmd_build_kg(args) -> int:
    config = _load_config(args)
    run_dir = _run_dir(args)
    artifacts = _prepare(args, config)
    serialize_graph(artifacts.graph, run_dir / "graph.tsv")
    summary = {
        "users": artifacts.graph.num_users,
        "items": artifacts.graph.num_items,
        "aspects": artifacts.graph.num_aspects,
        "nodes": artifacts.graph.num_nodes,
        "edges": artifacts.graph.num_edges(),
    }
    (run_dir / "graph.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return 0


def _write_metrics(run_dir: Path, reports: list[dict]) -> None:
    with open(run_dir / "metrics.jsonl", "a", encoding="utf-8") as fh:
        for report in reports:
            fh.write(json.dumps(report) + "\n")
    with open(run_dir / "metrics.txt", "a", encoding="utf-8") as fh:
        for report in reports:
            fh.write(f"{report.get('split', report.get('kind', '?'))}: mse={report.get('mse')}\n")


def cmd_train(args) -> int:
    config = _load_config(args)
    run_dir = _run_dir(args)
    corpus = _read_raw_corpus(args.input, config.rating_scale)
    run, result, report = harness.run_training(
        corpus, config, extractor=_extractor(args), similarity=_similarity(args)
    )
    save_config(config, run_dir / "config.ini")
    write_corpus(run.artifacts.corpus, run_dir / "corpus.jsonl")
    write_split_manifest(
        [run.artifacts.train, run.artifacts.validation, run.artifacts.test],
        run_dir / "splits.tsv",
    )
    write_vocabulary(run.artifacts.vocab, run_dir / "vocab_aspects.txt")
    if run.token_vocab is not None:
        run.token_vocab.save(run_dir / "vocab_tokens.txt")
    serialize_graph(run.artifacts.graph, run_dir / "graph.tsv")
    harness.save_checkpoint(
        run_dir / "checkpoint.pt", run.model, config,
        meta={"best_epoch": result.best_epoch, "best_val_mse": result.best_val_mse,
              "diverged": result.diverged},
    )
    _write_metrics(run_dir, [report.to_dict()])
    (run_dir / "history.jsonl").write_text(
        "".join(json.dumps(h) + "\n" for h in result.history)
    )
    print(json.dumps({"best_epoch": result.best_epoch, "val_mse": report.mse}))
    return 0 if not result.diverged else 1


def _restore_run(args, config):
    run_dir = Path(args.run_dir)
    checkpoint = run_dir / "checkpoint.pt"
    corpus = _read_raw_corpus(args.input, config.rating_scale)
    run = harness.build_run(corpus, config, extractor=_extractor(args),
                            similarity=_similarity(args))
    harness.load_checkpoint(checkpoint, run.model)
    return run


def cmd_evaluate(args) -> int:
    run_dir = Path(args.run_dir)
    config = load_config(run_dir / "config.ini", _overrides(args))
    run = _restore_run(args, config)
    users, items = harness.seen_entities(run.artifacts)
    report = harness.evaluate(run.model, run.examples[args.split], args.split, users, items)
    _write_metrics(run_dir, [report.to_dict()])
    print(json.dumps(report.to_dict()))
    return 0


def _overrides(args):
    overrides = {}
    for entry in args.set:
        if "=" not in entry:
            raise AspectRecError(f"--set expects KEY=VALUE, got {entry!r}")
        key, value = entry.split("=", 1)
        overrides[key.strip()] = value
    return overrides


def cmd_ablate(args) -> int:
    config = _load_config(args)
    run_dir = _run_dir(args)
    corpus = _read_raw_corpus(args.input, config.rating_scale)
    run, result, report = harness.run_ablation(
        corpus, config, args.variant, extractor=_extractor(args), similarity=_similarity(args)
    )
    payload = report.to_dict()
    payload["variant"] = args.variant
    _write_metrics(run_dir, [payload])
    harness.save_checkpoint(
        run_dir / f"checkpoint_{args.variant}.pt", run.model, config.with_variant(args.variant),
        meta={"variant": args.variant, "best_epoch": result.best_epoch},
    )
    print(json.dumps(payload))
    return 0


def cmd_sweep(args) -> int:
    config = _load_config(args)
    run_dir = _run_dir(args)
    try:
        layer_values = [int(v) for v in args.layers.split(",") if v.strip()]
    except ValueError as exc:
        raise AspectRecError(f"bad --layers value: {exc}") from exc
    corpus = _read_raw_corpus(args.input, config.rating_scale)
    rows = harness.sweep_rgcn_layers(
        corpus, config, layer_values, extractor=_extractor(args), similarity=_similarity(args)
    )
    payloads = [{"kind": "sweep", "rgcn_layers": layers, "mse": mse} for layers, mse in rows]
    _write_metrics(run_dir, payloads)
    print(json.dumps(payloads))
    return 0


def cmd_predict(args) -> int:
    run_dir = Path(args.run_dir)
    config = load_config(run_dir / "config.ini", _overrides(args))
    run = _restore_run(args, config)
    records = harness.predict_records(run.model, run.examples[args.split])
    out = run_dir / "predictions.tsv"
    with open(out, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(f"{r['user_id']}\t{r['item_id']}\t{r['y']}\t{r['y_hat']}\n")
    print(json.dumps({"written": len(records), "path": str(out)}))
    return 0


def cmd_dump_attention(args) -> int:
    run_dir = Path(args.run_dir)
    config = load_config(run_dir / "config.ini", _overrides(args))
    run = _restore_run(args, config)
    records = harness.attention_records(run.model, run.examples[args.split], run.artifacts.vocab)
    out = run_dir / "attention.tsv"
    with open(out, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(f"{r['user_id']}\t{r['item_id']}\t{r['aspect']}\t{r['weight']!r}\n")
    print(json.dumps({"written": len(records), "path": str(out)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
