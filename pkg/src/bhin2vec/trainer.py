"""Training loop: alternate embedding updates with matrix updates.

Each epoch visits every node once in a fresh seeded shuffle. For every
start node a walk is sampled with the current transition matrix, one
gradient step is taken on the embeddings, the ratio tensor is rebuilt from
the batch losses, and the matrix takes one projected step toward its
perturbed target. The neighbor-uniform baseline mode skips everything that
touches the matrix.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, asdict
from typing import Callable, NamedTuple

import numpy as np

from .balance import PerturbationConfig, apply_stochastic_update, stochastic_loss_gradient
from .errors import CorruptCheckpoint, DegenerateRatio, NonFiniteLoss, VersionMismatch
from .hetgraph import HetGraph, TaskSet, build_meta_network, possible_tasks
from .seeding import named_rng
from .skipgram import (
    EmbeddingStore,
    NegativeTable,
    PairBatch,
    RatioTensor,
    TaskLossTracker,
    batch_loss_and_update,
    extract_pairs,
    inverse_training_ratio,
)
from .walker import (
    StochasticMatrix,
    init_stochastic_matrix,
    sample_walk,
    sample_walk_neighbor_uniform,
    uniform_stochastic_matrix,
)

WALK_MODES = ("bhin2vec", "neighbor_uniform")
NEGATIVE_POWERS = (1.0, 0.75)


@dataclass
class TrainConfig:
    walk_length: int = 100
    epochs: int = 10
    window: int = 5
    negatives: int = 5
    dim: int = 128
    lr: float = 0.01
    lr_stochastic: float = 0.025
    alpha: float = 0.1
    batch_walks: int = 1
    seed: int = 0
    walk_mode: str = "bhin2vec"
    negative_power: float = 1.0
    history_every: int = 1000
    lr_end: float = 0.0
    ratio_ema: float = 0.0

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.walk_length <= self.window:
            raise ValueError("walk_length must exceed window")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr <= 0 or self.lr_stochastic <= 0:
            raise ValueError("learning rates must be > 0")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.batch_walks < 1:
            raise ValueError("batch_walks must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if self.walk_mode not in WALK_MODES:
            raise ValueError(f"walk_mode must be one of {WALK_MODES}")
        if self.negative_power not in NEGATIVE_POWERS:
            raise ValueError(f"negative_power must be one of {NEGATIVE_POWERS}")
        if self.history_every < 1:
            raise ValueError("history_every must be >= 1")
        if not 0.0 <= self.lr_end <= self.lr:
            raise ValueError("lr_end must lie in [0, lr]")
        if not 0.0 <= self.ratio_ema < 1.0:
            raise ValueError("ratio_ema must lie in [0, 1)")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class BatchInfo:
    """Snapshot handed to the per-batch callback, mainly for inspection."""

    epoch: int
    walk_index: int  # global count of walks finished so far
    n_walks: int
    n_positives: int
    loss: float
    ratios: RatioTensor | None
    matrix: StochasticMatrix


class PHistory:
    """Sampled time series of the transition matrix during training."""

    def __init__(self):
        self.snapshots: list[tuple[int, int, np.ndarray]] = []

    def append(self, epoch: int, step: int, matrix: StochasticMatrix) -> None:
        self.snapshots.append((epoch, step, matrix.values.copy()))

    def __len__(self) -> int:
        return len(self.snapshots)

    def rows(self, type_names: list[str]):
        """Tidy (epoch, step, source_type, target_type, probability) rows."""
        for epoch, step, values in self.snapshots:
            for i, src in enumerate(type_names):
                for j, tgt in enumerate(type_names):
                    yield epoch, step, src, tgt, float(values[i, j])


class TrainResult(NamedTuple):
    store: EmbeddingStore
    matrix: StochasticMatrix
    history: PHistory


def _learning_rate(cfg: TrainConfig, walks_done: int, total_walks: int) -> float:
    if cfg.lr_end <= 0.0:
        return cfg.lr
    frac = walks_done / max(total_walks, 1)
    return cfg.lr + (cfg.lr_end - cfg.lr) * frac


def train(
    graph: HetGraph,
    cfg: TrainConfig,
    on_batch: Callable[[BatchInfo], None] | None = None,
) -> TrainResult:
    """Run the full alternating schedule and return embeddings, the final
    matrix, and the sampled matrix history.

    With ``walk_mode == "neighbor_uniform"`` the matrix is never read or
    written and the history stays empty.
    """
    meta = build_meta_network(graph)
    tasks = possible_tasks(meta, cfg.window)
    balanced = cfg.walk_mode == "bhin2vec"

    rng_init = named_rng(cfg.seed, "init")
    rng_walks = named_rng(cfg.seed, "walks")
    rng_negatives = named_rng(cfg.seed, "negatives")
    rng_shuffle = named_rng(cfg.seed, "shuffle")

    store = EmbeddingStore.init(graph.node_count, graph.type_count, cfg.window, cfg.dim, rng_init)
    table = NegativeTable(graph, power=cfg.negative_power)
    matrix = init_stochastic_matrix(meta)
    uniform = uniform_stochastic_matrix(meta)
    tracker = TaskLossTracker(tasks, graph.type_count) if balanced else None
    pcfg = PerturbationConfig(alpha=cfg.alpha, lr=cfg.lr_stochastic, window=cfg.window)
    history = PHistory()
    smoothed: np.ndarray | None = None

    total_walks = cfg.epochs * graph.node_count
    walks_done = 0
    if balanced:
        history.append(0, 0, matrix)

    for epoch in range(1, cfg.epochs + 1):
        order = rng_shuffle.permutation(graph.node_count)
        for offset in range(0, len(order), cfg.batch_walks):
            starts = order[offset:offset + cfg.batch_walks]
            src_parts, ctx_parts, hop_parts = [], [], []
            for start in starts:
                if balanced:
                    walk = sample_walk(graph, matrix, int(start), cfg.walk_length, rng_walks)
                else:
                    walk = sample_walk_neighbor_uniform(
                        graph, int(start), cfg.walk_length, rng_walks
                    )
                src, ctx, hop = extract_pairs(walk, cfg.window)
                src_parts.append(src)
                ctx_parts.append(ctx)
                hop_parts.append(hop)
            sources = np.concatenate(src_parts)
            contexts = np.concatenate(ctx_parts)
            hops = np.concatenate(hop_parts)
            negatives = table.sample_for_contexts(
                graph.node_type[contexts], cfg.negatives, rng_negatives
            )
            batch = PairBatch(sources=sources, contexts=contexts, hops=hops, negatives=negatives)

            lr = _learning_rate(cfg, walks_done, total_walks)
            try:
                loss = batch_loss_and_update(batch, store, graph.node_type, lr, tracker)
                ratios = None
                if balanced:
                    losses = tracker.per_task_losses()
                    ratios = inverse_training_ratio(losses, tracker, tasks, cfg.window)
                    if cfg.ratio_ema > 0.0:
                        if smoothed is None:
                            smoothed = ratios.values.copy()
                        else:
                            smoothed = cfg.ratio_ema * smoothed + (1 - cfg.ratio_ema) * ratios.values
                        ratios = RatioTensor(values=smoothed.copy())
                    grad = stochastic_loss_gradient(matrix, uniform, ratios, pcfg)
                    matrix = apply_stochastic_update(matrix, grad, pcfg)
            except (NonFiniteLoss, DegenerateRatio) as exc:
                raise type(exc)(f"epoch {epoch}, walk {walks_done + len(starts)}: {exc}") from exc

            walks_done += len(starts)
            if balanced and walks_done % cfg.history_every < len(starts):
                history.append(epoch, walks_done, matrix)
            if on_batch is not None:
                on_batch(BatchInfo(
                    epoch=epoch,
                    walk_index=walks_done,
                    n_walks=len(starts),
                    n_positives=len(batch),
                    loss=loss,
                    ratios=ratios,
                    matrix=matrix,
                ))
        if balanced and (not history.snapshots or history.snapshots[-1][1] != walks_done):
            history.append(epoch, walks_done, matrix)

    return TrainResult(store=store, matrix=matrix, history=history)


CHECKPOINT_MAGIC = b"BHINCKPT"
CHECKPOINT_VERSION = 1


def _array_payload(arrays: dict[str, np.ndarray]) -> tuple[list[dict], bytes]:
    meta, chunks = [], []
    for name, arr in arrays.items():
        data = np.ascontiguousarray(arr)
        raw = data.tobytes()
        meta.append({
            "name": name,
            "dtype": data.dtype.str,
            "shape": list(data.shape),
            "bytes": len(raw),
        })
        chunks.append(raw)
    return meta, b"".join(chunks)


def save_checkpoint(
    store: EmbeddingStore,
    matrix: StochasticMatrix,
    tracker: TaskLossTracker,
    path,
    config: TrainConfig | None = None,
) -> None:
    """Write the full training state with an integrity hash."""
    sums, counts = tracker.consistency_totals()
    arrays = {
        "node_vectors": store.node_vectors,
        "task_factors": store.task_factors,
        "matrix_values": matrix.values,
        "matrix_support": matrix.support.astype(np.uint8),
        "task_mask": tracker.tasks.mask.astype(np.uint8),
        "initial_loss": tracker.initial_loss,
        "last_loss": tracker.last_loss,
        "running_sums": sums,
        "running_counts": counts,
    }
    meta, payload = _array_payload(arrays)
    header = json.dumps({
        "dim": store.dim,
        "window": store.window,
        "arrays": meta,
        "config": config.as_dict() if config is not None else None,
    }).encode("utf-8")
    body = CHECKPOINT_MAGIC
    body += struct.pack("<II", CHECKPOINT_VERSION, len(header))
    body += header + payload
    digest = hashlib.sha256(body).digest()
    with open(path, "wb") as handle:
        handle.write(body + digest)


def load_checkpoint(path, config: TrainConfig | None = None):
    """Restore (store, matrix, tracker, saved-config dict) from a checkpoint.

    Raises CorruptCheckpoint on a bad magic, truncation, or hash mismatch,
    and VersionMismatch when the format version or the embedding dimension
    disagrees with ``config``.
    """
    with open(path, "rb") as handle:
        blob = handle.read()
    if len(blob) < len(CHECKPOINT_MAGIC) + 8 + 32 or not blob.startswith(CHECKPOINT_MAGIC):
        raise CorruptCheckpoint(f"{path}: not a checkpoint file")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptCheckpoint(f"{path}: integrity hash mismatch")
    version, header_len = struct.unpack_from("<II", body, len(CHECKPOINT_MAGIC))
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    offset = len(CHECKPOINT_MAGIC) + 8
    header = json.loads(body[offset:offset + header_len].decode("utf-8"))
    offset += header_len

    arrays: dict[str, np.ndarray] = {}
    for meta in header["arrays"]:
        raw = body[offset:offset + meta["bytes"]]
        if len(raw) != meta["bytes"]:
            raise CorruptCheckpoint(f"{path}: truncated array {meta['name']}")
        arrays[meta["name"]] = np.frombuffer(raw, dtype=meta["dtype"]).reshape(meta["shape"]).copy()
        offset += meta["bytes"]

    if config is not None and config.dim != header["dim"]:
        raise VersionMismatch(
            f"{path}: checkpoint dim {header['dim']} differs from configured {config.dim}"
        )

    store = EmbeddingStore(
        node_vectors=arrays["node_vectors"], task_factors=arrays["task_factors"]
    )
    matrix = StochasticMatrix(
        values=arrays["matrix_values"], support=arrays["matrix_support"].astype(bool)
    )
    tasks = TaskSet(window=header["window"], mask=arrays["task_mask"].astype(bool))
    tracker = TaskLossTracker(tasks, n_types=arrays["matrix_values"].shape[0])
    tracker.initial_loss = arrays["initial_loss"]
    tracker.last_loss = arrays["last_loss"]
    tracker._sums = arrays["running_sums"]
    tracker._counts = arrays["running_counts"]
    return store, matrix, tracker, header["config"]
