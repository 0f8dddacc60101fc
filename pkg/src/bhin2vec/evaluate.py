"""Downstream quality checks: ranked link prediction and node classification.

Link prediction removes a stratified fraction of edges, trains one binary
classifier per relation on Hadamard edge features, and ranks each held-out
edge against 99 sampled non-edges; a hit means the true edge lands in the
top 10 of 100. Node classification fits one multinomial classifier per node
type on the raw embeddings and reports micro and macro F1 over repeated
splits.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleSplit, InsufficientCandidates, ShapeMismatch, SingleClass
from .hetgraph import HetGraph
from .seeding import spawn
from .skipgram import EmbeddingStore

CANDIDATES_PER_EDGE = 99
HIT_TOP_K = 10


@dataclass
class EdgeSplit:
    """Held-out test edges plus the remaining training graph."""

    train_graph: HetGraph
    test_edges: list[tuple[int, int]]
    fraction: float


def split_edges(graph: HetGraph, fraction: float, rng: np.random.Generator) -> EdgeSplit:
    """Remove ``fraction`` of the edges per relation type-pair for testing.

    An edge is exempt (and another drawn instead) when removing it would
    leave an endpoint without any training edge.

    Raises InfeasibleSplit when a relation cannot reach its quota.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    edges = graph.edges()
    types = graph.node_type
    keys = np.stack([
        np.minimum(types[edges[:, 0]], types[edges[:, 1]]),
        np.maximum(types[edges[:, 0]], types[edges[:, 1]]),
    ], axis=1)
    degrees = graph.degrees().copy()

    removed = np.zeros(len(edges), dtype=bool)
    unique_keys = sorted({(int(a), int(b)) for a, b in keys})
    for key in unique_keys:
        rows = np.flatnonzero((keys[:, 0] == key[0]) & (keys[:, 1] == key[1]))
        target = int(round(fraction * len(rows)))
        taken = 0
        for row in rng.permutation(rows):
            if taken == target:
                break
            u, v = edges[row]
            if degrees[u] > 1 and degrees[v] > 1:
                removed[row] = True
                degrees[u] -= 1
                degrees[v] -= 1
                taken += 1
        if taken < target:
            names = (graph.type_names[key[0]], graph.type_names[key[1]])
            raise InfeasibleSplit(
                f"relation {names[0]}-{names[1]}: only {taken} of {target} edges "
                "removable without isolating a node"
            )

    train_graph = HetGraph.from_arrays(
        node_type=graph.node_type,
        edges=edges[~removed],
        node_names=graph.node_names,
        type_names=graph.type_names,
    )
    test_edges = [(int(u), int(v)) for u, v in edges[removed]]
    return EdgeSplit(train_graph=train_graph, test_edges=test_edges, fraction=fraction)


def edge_embedding(fu: np.ndarray, fv: np.ndarray) -> np.ndarray:
    """Hadamard edge feature: the elementwise product of two node vectors."""
    if fu.shape != fv.shape:
        raise ShapeMismatch(f"vector shapes differ: {fu.shape} vs {fv.shape}")
    return fu * fv


class LogisticModel:
    """Multinomial logistic regression, full-batch gradient descent.

    Deterministic and dependency-free: zero init, fixed step size, fixed
    iteration count, L2 on the weights but not the bias.
    """

    def __init__(self, n_classes: int, l2: float = 1e-4, iterations: int = 500, lr: float = 0.1):
        self.n_classes = n_classes
        self.l2 = l2
        self.iterations = iterations
        self.lr = lr
        self.weights: np.ndarray | None = None  # (C, d)
        self.bias: np.ndarray | None = None  # (C,)

    def fit(self, features: np.ndarray, labels: np.ndarray) -> "LogisticModel":
        n, dim = features.shape
        onehot = np.zeros((n, self.n_classes))
        onehot[np.arange(n), labels] = 1.0
        self.weights = np.zeros((self.n_classes, dim))
        self.bias = np.zeros(self.n_classes)
        for _ in range(self.iterations):
            probs = self._probs(features)
            err = (probs - onehot) / n
            self.weights -= self.lr * (err.T @ features + self.l2 * self.weights)
            self.bias -= self.lr * err.sum(axis=0)
        return self

    def _probs(self, features: np.ndarray) -> np.ndarray:
        logits = features @ self.weights.T + self.bias
        logits -= logits.max(axis=1, keepdims=True)
        expl = np.exp(logits)
        return expl / expl.sum(axis=1, keepdims=True)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self._probs(features).argmax(axis=1)

    def decision_scores(self, features: np.ndarray) -> np.ndarray:
        """Score of the positive class; only meaningful for binary models."""
        return self._probs(features)[:, 1]


def micro_macro_f1(y_true: np.ndarray, y_pred: np.ndarray) -> tuple[float, float]:
    """Micro and macro F1 over the classes present in truth or prediction.

    For single-label problems micro F1 equals accuracy; classes that were
    never predicted contribute an F1 of zero to the macro average.
    """
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    classes = np.union1d(y_true, y_pred)
    micro = float(np.mean(y_true == y_pred))
    scores = []
    for cls in classes:
        tp = np.sum((y_pred == cls) & (y_true == cls))
        fp = np.sum((y_pred == cls) & (y_true != cls))
        fn = np.sum((y_pred != cls) & (y_true == cls))
        denominator = 2 * tp + fp + fn
        scores.append(2 * tp / denominator if denominator else 0.0)
    return micro, float(np.mean(scores))


@dataclass
class TaskResult:
    """Ranking outcome of one ordered relation task."""

    source_type: str
    target_type: str
    hits: int = 0
    evaluated: int = 0
    skipped: int = 0

    @property
    def hit_rate(self) -> float:
        return self.hits / self.evaluated if self.evaluated else 0.0

    @property
    def name(self) -> str:
        return f"{self.source_type}->{self.target_type}"


@dataclass
class LinkPredictionReport:
    tasks: dict[tuple[int, int], TaskResult] = field(default_factory=dict)

    @property
    def average_hit_rate(self) -> float:
        rates = [t.hit_rate for t in self.tasks.values() if t.evaluated]
        return float(np.mean(rates)) if rates else 0.0


def _sample_nonedge_pairs(
    graph: HetGraph,
    type_a: int,
    type_b: int,
    count: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Uniform same-typed node pairs that are not edges of ``graph``."""
    nodes_a = graph.nodes_of_type(type_a)
    nodes_b = graph.nodes_of_type(type_b)
    out_a = np.empty(count, dtype=np.int64)
    out_b = np.empty(count, dtype=np.int64)
    filled = 0
    attempts = 0
    max_attempts = 200 * count + 1000
    while filled < count:
        if attempts > max_attempts:
            raise InsufficientCandidates(
                f"could not sample {count} non-edges for relation "
                f"{graph.type_names[type_a]}-{graph.type_names[type_b]}"
            )
        chunk = max(count - filled, 32)
        a = nodes_a[rng.integers(len(nodes_a), size=chunk)]
        b = nodes_b[rng.integers(len(nodes_b), size=chunk)]
        attempts += chunk
        for u, v in zip(a, b):
            if filled == count:
                break
            if u == v or graph.has_edge(int(u), int(v)):
                continue
            out_a[filled] = u
            out_b[filled] = v
            filled += 1
    return out_a, out_b


def _rank_of_true(scores: np.ndarray, node_ids: np.ndarray) -> int:
    """Position of entry 0 when sorted by descending score, ascending id."""
    better = scores > scores[0]
    tied = (scores == scores[0]) & (node_ids < node_ids[0])
    return int(np.sum(better | tied))


def link_prediction_hit10(
    store: EmbeddingStore,
    split: EdgeSplit,
    g_full: HetGraph,
    rng: np.random.Generator,
    classifier_factory=None,
    threads: int = 1,
) -> LinkPredictionReport:
    """Hit rate at 10 per ordered relation task, plus the unweighted average.

    Per unordered relation one binary classifier is trained on the Hadamard
    features of training edges against an equal number of uniformly sampled
    same-typed non-edges of the full graph. Each test edge is then ranked in
    both directions against 99 candidates of the target type that form no
    edge with the source in either split; ties break toward the smaller
    node id. Test edges with fewer than 99 admissible candidates are
    skipped and counted.
    """
    vectors = store.node_vectors
    types = g_full.node_type
    train_edges = split.train_graph.edges()

    by_relation: dict[tuple[int, int], dict] = {}
    for u, v in split.test_edges:
        key = (min(int(types[u]), int(types[v])), max(int(types[u]), int(types[v])))
        by_relation.setdefault(key, {"test": []})["test"].append((u, v))
    for key in by_relation:
        tu = types[train_edges[:, 0]]
        tv = types[train_edges[:, 1]]
        mask = (np.minimum(tu, tv) == key[0]) & (np.maximum(tu, tv) == key[1])
        by_relation[key]["train"] = train_edges[mask]

    relation_keys = sorted(by_relation)
    relation_rngs = dict(zip(relation_keys, spawn(rng, len(relation_keys))))

    def evaluate_relation(key: tuple[int, int]) -> list[TaskResult]:
        data = by_relation[key]
        rel_rng = relation_rngs[key]
        train = data["train"]
        if len(train) == 0:
            raise InsufficientCandidates(
                f"relation {g_full.type_names[key[0]]}-{g_full.type_names[key[1]]} "
                "has test edges but no training edges to fit a classifier"
            )
        pos = edge_embedding(vectors[train[:, 0]], vectors[train[:, 1]])
        neg_a, neg_b = _sample_nonedge_pairs(g_full, key[0], key[1], len(train), rel_rng)
        neg = edge_embedding(vectors[neg_a], vectors[neg_b])
        features = np.concatenate([pos, neg])
        labels = np.concatenate([np.ones(len(pos), np.int64), np.zeros(len(neg), np.int64)])
        if classifier_factory is not None:
            model = classifier_factory(key, features, labels)
        else:
            model = LogisticModel(n_classes=2).fit(features, labels)

        directions = [(key[0], key[1])] if key[0] == key[1] else [(key[0], key[1]), (key[1], key[0])]
        results = []
        for src_t, tgt_t in directions:
            result = TaskResult(
                source_type=g_full.type_names[src_t], target_type=g_full.type_names[tgt_t]
            )
            target_nodes = g_full.nodes_of_type(tgt_t)
            for u, v in data["test"]:
                s, t = (u, v) if types[u] == src_t else (v, u)
                if types[s] != src_t or types[t] != tgt_t:
                    continue
                linked = g_full.neighbors_of_type(s, tgt_t)
                admissible = np.setdiff1d(target_nodes, linked, assume_unique=True)
                admissible = admissible[admissible != s]
                if len(admissible) < CANDIDATES_PER_EDGE:
                    result.skipped += 1
                    continue
                chosen = rel_rng.choice(admissible, size=CANDIDATES_PER_EDGE, replace=False)
                ids = np.concatenate([[t], chosen])
                scores = model.decision_scores(vectors[ids] * vectors[s][None, :])
                if _rank_of_true(scores, ids) < HIT_TOP_K:
                    result.hits += 1
                result.evaluated += 1
            results.append(result)
        return results

    report = LinkPredictionReport()
    if threads > 1 and len(relation_keys) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            all_results = list(pool.map(evaluate_relation, relation_keys))
    else:
        all_results = [evaluate_relation(key) for key in relation_keys]
    for results in all_results:
        for result in results:
            src = g_full.type_names.index(result.source_type)
            tgt = g_full.type_names.index(result.target_type)
            report.tasks[(src, tgt)] = result
    return report


@dataclass
class ClassificationResult:
    type_name: str
    micro_mean: float
    micro_std: float
    macro_mean: float
    macro_std: float


@dataclass
class ClassificationReport:
    per_type: list[ClassificationResult]

    @property
    def average_micro(self) -> float:
        return float(np.mean([r.micro_mean for r in self.per_type]))

    @property
    def average_macro(self) -> float:
        return float(np.mean([r.macro_mean for r in self.per_type]))


def node_classification_f1(
    store: EmbeddingStore,
    node_type: np.ndarray,
    type_names: list[str],
    labels: dict[int, str],
    rng: np.random.Generator,
    train_fraction: float = 0.8,
    repeats: int = 10,
) -> ClassificationReport:
    """Micro and macro F1 per node type, averaged over repeated splits.

    One multinomial classifier per node type is trained on the raw node
    vectors of a random ``train_fraction`` of its labeled nodes and scored
    on the rest.

    Raises SingleClass when a type's labels contain only one class.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    labeled = np.array(sorted(labels), dtype=np.int64)
    typed = {t: labeled[node_type[labeled] == t] for t in range(len(type_names))}
    evaluated_types = [t for t, nodes in typed.items() if len(nodes)]
    type_rngs = dict(zip(evaluated_types, spawn(rng, len(evaluated_types))))

    results = []
    for t in evaluated_types:
        nodes = typed[t]
        classes = sorted({labels[int(v)] for v in nodes})
        if len(classes) < 2:
            raise SingleClass(f"type {type_names[t]!r} has a single label class")
        class_ids = {c: i for i, c in enumerate(classes)}
        y = np.array([class_ids[labels[int(v)]] for v in nodes], dtype=np.int64)
        features = store.node_vectors[nodes]
        n_train = int(round(train_fraction * len(nodes)))
        n_train = min(max(n_train, 1), len(nodes) - 1)
        micro_scores, macro_scores = [], []
        t_rng = type_rngs[t]
        for _ in range(repeats):
            perm = t_rng.permutation(len(nodes))
            train_idx, test_idx = perm[:n_train], perm[n_train:]
            model = LogisticModel(n_classes=len(classes)).fit(features[train_idx], y[train_idx])
            predictions = model.predict(features[test_idx])
            micro, macro = micro_macro_f1(y[test_idx], predictions)
            micro_scores.append(micro)
            macro_scores.append(macro)
        results.append(ClassificationResult(
            type_name=type_names[t],
            micro_mean=float(np.mean(micro_scores)),
            micro_std=float(np.std(micro_scores)),
            macro_mean=float(np.mean(macro_scores)),
            macro_std=float(np.std(macro_scores)),
        ))
    return ClassificationReport(per_type=results)
