"""Command-line interface: train, evaluate, inspect, generate.

Exit codes: 0 on success, 1 on a runtime error, 2 on a usage or input
validation error. Every command is deterministic given --seed.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import fields as dataclass_fields

import numpy as np

from . import io
from .errors import Bhin2vecError
from .evaluate import link_prediction_hit10, node_classification_f1, split_edges
from .hetgraph import load_graph
from .seeding import named_rng
from .skipgram import EmbeddingStore
from .synthetic import SyntheticSpec, generate
from .trainer import TrainConfig, train

CONFIG_FIELDS = {f.name: f.type for f in dataclass_fields(TrainConfig)}


def _add_training_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value file with TrainConfig fields")
    parser.add_argument("--walk-length", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--window", type=int)
    parser.add_argument("--negatives", type=int)
    parser.add_argument("--dim", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--lr-stochastic", type=float)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--batch-walks", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--walk-mode", choices=("bhin2vec", "neighbor_uniform"))
    parser.add_argument("--negative-power", type=float)
    parser.add_argument("--history-every", type=int)
    parser.add_argument("--lr-end", type=float)
    parser.add_argument("--ratio-ema", type=float)


def _coerce(name: str, raw: str):
    blueprint = TrainConfig()
    current = getattr(blueprint, name)
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    return raw


def _build_config(args, parser) -> TrainConfig:
    settings: dict = {}
    if args.config:
        if not os.path.exists(args.config):
            parser.error(f"config file {args.config} does not exist")
        for key, value in io.parse_config_file(args.config).items():
            if key not in CONFIG_FIELDS:
                parser.error(f"unknown config key {key!r} in {args.config}")
            settings[key] = _coerce(key, value)
    for name in CONFIG_FIELDS:
        flag_value = getattr(args, name, None)
        if flag_value is not None:
            settings[name] = flag_value
    try:
        return TrainConfig(**settings)
    except ValueError as exc:
        parser.error(str(exc))


def _require_files(parser, *paths) -> None:
    for path in paths:
        if not os.path.exists(path):
            parser.error(f"input file {path} does not exist")


def _load_embeddings_for_graph(path, graph):
    names, vectors = io.load_embeddings_text(path)
    position = {name: i for i, name in enumerate(names)}
    missing = [n for n in graph.node_names if n not in position]
    if missing:
        raise Bhin2vecError(
            f"embeddings {path} do not cover {len(missing)} graph nodes, "
            f"first missing: {missing[0]!r}"
        )
    order = [position[n] for n in graph.node_names]
    return vectors[order]


def cmd_train(args, parser) -> int:
    _require_files(parser, args.edges, args.types)
    cfg = _build_config(args, parser)
    os.makedirs(args.out, exist_ok=True)

    started = time.time()
    graph, report = load_graph(args.edges, args.types, min_degree=args.min_degree)
    result = train(graph, cfg)
    elapsed = time.time() - started

    io.save_embeddings_text(result.store.node_vectors, graph.node_names,
                            os.path.join(args.out, "embeddings.txt"))
    if args.binary:
        io.save_embeddings_binary(result.store.node_vectors, graph.node_names,
                                  os.path.join(args.out, "embeddings.bin"))
    io.write_transition_matrix_csv(result.matrix.values, graph.type_names,
                                   os.path.join(args.out, "p_final.csv"))
    if cfg.walk_mode == "bhin2vec":
        io.write_history_csv(result.history.rows(graph.type_names),
                             os.path.join(args.out, "p_history.csv"))
    report.write(os.path.join(args.out, "dropped_nodes.txt"))

    manifest = dict(cfg.as_dict())
    manifest.update({
        "edges": args.edges,
        "types": args.types,
        "min_degree": args.min_degree,
        "threads": args.threads,
        "nodes": graph.node_count,
        "kept_edges": graph.edge_count,
        "dropped_nodes": len(report.dropped),
        "wall_clock_sec": f"{elapsed:.3f}",
    })
    io.write_manifest(manifest, os.path.join(args.out, "manifest.txt"))
    return 0


def cmd_eval_linkpred(args, parser) -> int:
    _require_files(parser, args.edges, args.types, args.embeddings)
    os.makedirs(args.out, exist_ok=True)
    graph, _ = load_graph(args.edges, args.types, min_degree=args.min_degree)
    vectors = _load_embeddings_for_graph(args.embeddings, graph)
    store = EmbeddingStore(node_vectors=vectors,
                           task_factors=np.ones((1, graph.type_count, graph.type_count, 1)))

    rates: dict[str, list[float]] = {}
    counts: dict[str, list[tuple[int, int]]] = {}
    averages: list[float] = []
    for repeat in range(args.repeats):
        split = split_edges(graph, args.fraction, named_rng(args.seed, f"split-{repeat}"))
        report = link_prediction_hit10(store, split, graph,
                                       named_rng(args.seed, f"linkpred-{repeat}"),
                                       threads=args.threads)
        for task in report.tasks.values():
            counts.setdefault(task.name, []).append((task.evaluated, task.skipped))
            if task.evaluated:
                rates.setdefault(task.name, []).append(task.hit_rate)
        averages.append(report.average_hit_rate)

    rows = []
    names, means, stds = [], [], []
    for name in sorted(counts):
        if name in rates:
            mean, std = float(np.mean(rates[name])), float(np.std(rates[name]))
            rows.append((f"linkpred:{name}", "hit_rate_at_10", mean, std))
            names.append(name)
            means.append(mean)
            stds.append(std)
        evaluated = [e for e, _ in counts[name]]
        skipped = [s for _, s in counts[name]]
        rows.append((f"linkpred:{name}", "queries_evaluated",
                     float(np.mean(evaluated)), float(np.std(evaluated))))
        rows.append((f"linkpred:{name}", "queries_skipped",
                     float(np.mean(skipped)), float(np.std(skipped))))
    rows.append(("linkpred:average", "hit_rate_at_10",
                 float(np.mean(averages)), float(np.std(averages))))
    io.write_metrics_csv(rows, os.path.join(args.out, "linkpred_metrics.csv"))
    if not args.no_figure:
        from .plots import metric_bars_figure

        metric_bars_figure(names, means, stds,
                           os.path.join(args.out, "linkpred_hit10.png"),
                           ylabel="hit rate @ 10", title="Link prediction")
    return 0


def cmd_eval_nodeclass(args, parser) -> int:
    _require_files(parser, args.types, args.labels, args.embeddings)
    os.makedirs(args.out, exist_ok=True)
    names, vectors = io.load_embeddings_text(args.embeddings)

    type_by_name: dict[str, str] = {}
    with open(args.types, encoding="utf-8") as handle:
        for line in handle:
            fields = line.split()
            if len(fields) == 2:
                type_by_name[fields[0]] = fields[1]
    unknown = [n for n in names if n not in type_by_name]
    if unknown:
        raise Bhin2vecError(f"{len(unknown)} embedded nodes missing from {args.types}")

    type_names = sorted({type_by_name[n] for n in names})
    type_ids = {t: i for i, t in enumerate(type_names)}
    node_type = np.array([type_ids[type_by_name[n]] for n in names], dtype=np.int64)

    raw_labels = io.read_labels(args.labels)
    position = {name: i for i, name in enumerate(names)}
    labels = {position[n]: c for n, c in raw_labels.items() if n in position}
    if not labels:
        raise Bhin2vecError("no labeled node is present in the embeddings")

    store = EmbeddingStore(node_vectors=vectors,
                           task_factors=np.ones((1, len(type_names), len(type_names), 1)))
    report = node_classification_f1(store, node_type, type_names, labels,
                                    named_rng(args.seed, "nodeclass"),
                                    train_fraction=args.train_fraction,
                                    repeats=args.repeats)

    rows = []
    for result in report.per_type:
        rows.append((f"nodeclass:{result.type_name}", "micro_f1",
                     result.micro_mean, result.micro_std))
        rows.append((f"nodeclass:{result.type_name}", "macro_f1",
                     result.macro_mean, result.macro_std))
    rows.append(("nodeclass:average", "micro_f1", report.average_micro, 0.0))
    rows.append(("nodeclass:average", "macro_f1", report.average_macro, 0.0))
    io.write_metrics_csv(rows, os.path.join(args.out, "nodeclass_metrics.csv"))
    if not args.no_figure:
        from .plots import grouped_bars_figure

        groups = [r.type_name for r in report.per_type]
        grouped_bars_figure(groups, {
            "micro F1": [r.micro_mean for r in report.per_type],
            "macro F1": [r.macro_mean for r in report.per_type],
        }, os.path.join(args.out, "nodeclass_f1.png"),
            ylabel="F1", title="Node classification")
    return 0


def cmd_inspect_transitions(args, parser) -> int:
    if not os.path.exists(args.history):
        parser.error(f"history file {args.history} does not exist")
    os.makedirs(args.out, exist_ok=True)
    rows = io.read_history_csv(args.history)
    if args.source_type is not None:
        known = {row[2] for row in rows}
        if args.source_type not in known:
            parser.error(f"source type {args.source_type!r} not present in history "
                         f"(has: {', '.join(sorted(known))})")
        rows = [row for row in rows if row[2] == args.source_type]
    io.write_history_csv(rows, os.path.join(args.out, "transitions.csv"))
    if not args.no_figure:
        from .plots import transition_figure

        transition_figure(rows, os.path.join(args.out, "transitions.png"))
    return 0


def _parse_assignments(pairs, what, parser) -> dict[str, int]:
    out: dict[str, int] = {}
    for pair in pairs:
        if "=" not in pair:
            parser.error(f"bad {what} spec {pair!r}, expected NAME=COUNT")
        name, _, raw = pair.partition("=")
        try:
            out[name] = int(raw)
        except ValueError:
            parser.error(f"bad {what} count in {pair!r}")
    return out


def cmd_make_synthetic(args, parser) -> int:
    nodes = _parse_assignments(args.nodes, "node", parser)
    relations: dict[tuple[str, str], int] = {}
    for pair, count in _parse_assignments(args.edges, "edge", parser).items():
        if "-" not in pair:
            parser.error(f"bad relation {pair!r}, expected SRC-DST=COUNT")
        a, _, b = pair.partition("-")
        relations[(a, b)] = count
    spec = SyntheticSpec(nodes_per_type=nodes, relation_edges=relations)
    names, types, edge_names = generate(spec, named_rng(args.seed, "synthetic"))
    with io.atomic_open(args.out_types) as handle:
        for name, type_name in zip(names, types):
            handle.write(f"{name}\t{type_name}\n")
    with io.atomic_open(args.out_edges) as handle:
        for u, v in edge_names:
            handle.write(f"{u}\t{v}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bhin2vec",
        description="Heterogeneous network embedding with loss-balanced walks",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p_train = commands.add_parser("train", help="train node embeddings")
    p_train.add_argument("--edges", required=True)
    p_train.add_argument("--types", required=True)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--min-degree", type=int, default=2)
    p_train.add_argument("--threads", type=int, default=1)
    p_train.add_argument("--binary", action="store_true",
                         help="also write raw float32 embeddings with an index sidecar")
    _add_training_flags(p_train)
    p_train.set_defaults(handler=cmd_train)

    p_lp = commands.add_parser("eval-linkpred", help="ranked link prediction, hit rate at 10")
    p_lp.add_argument("--edges", required=True)
    p_lp.add_argument("--types", required=True)
    p_lp.add_argument("--embeddings", required=True)
    p_lp.add_argument("--out", required=True)
    p_lp.add_argument("--fraction", type=float, default=0.2)
    p_lp.add_argument("--repeats", type=int, default=1)
    p_lp.add_argument("--seed", type=int, default=0)
    p_lp.add_argument("--min-degree", type=int, default=2)
    p_lp.add_argument("--threads", type=int, default=1)
    p_lp.add_argument("--no-figure", action="store_true")
    p_lp.set_defaults(handler=cmd_eval_linkpred)

    p_nc = commands.add_parser("eval-nodeclass", help="per-type node classification F1")
    p_nc.add_argument("--embeddings", required=True)
    p_nc.add_argument("--types", required=True)
    p_nc.add_argument("--labels", required=True)
    p_nc.add_argument("--out", required=True)
    p_nc.add_argument("--train-fraction", type=float, default=0.8)
    p_nc.add_argument("--repeats", type=int, default=10)
    p_nc.add_argument("--seed", type=int, default=0)
    p_nc.add_argument("--no-figure", action="store_true")
    p_nc.set_defaults(handler=cmd_eval_nodeclass)

    p_it = commands.add_parser("inspect-transitions",
                               help="tidy CSV and figure from a matrix history")
    p_it.add_argument("--history", required=True)
    p_it.add_argument("--out", required=True)
    p_it.add_argument("--source-type")
    p_it.add_argument("--no-figure", action="store_true")
    p_it.set_defaults(handler=cmd_inspect_transitions)

    p_ms = commands.add_parser("make-synthetic", help="generate a random typed network")
    p_ms.add_argument("--out-edges", required=True)
    p_ms.add_argument("--out-types", required=True)
    p_ms.add_argument("--nodes", action="append", required=True, metavar="TYPE=COUNT")
    p_ms.add_argument("--edges", action="append", required=True, metavar="SRC-DST=COUNT")
    p_ms.add_argument("--seed", type=int, default=0)
    p_ms.set_defaults(handler=cmd_make_synthetic)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args, parser)
    except Bhin2vecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
