"""Extended skip-gram with type-matched negatives and per-task accounting.

Every (source, context) pair at forward offset hop+1 inside a walk defines
a scored positive; the negatives drawn for it share the context node's
type, so positive and negatives all belong to the same task triple
(hop, source type, context type). Scores are modulated per task by a
learned factor g that enters only as g*g, which keeps the per-dimension
task intensity non-negative without any projection.

The update path exists twice: a plain numpy implementation built on
``batch_gradients`` (the reference that the finite-difference tests check)
and a numba kernel doing the same accumulation in one pass. Both apply one
gradient step per batch, evaluated at the pre-update parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRatio, NonFiniteLoss
from .hetgraph import HetGraph, TaskId, TaskSet

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        return wrap


USE_NUMBA = HAVE_NUMBA

INITIAL_TASK_LOSS = math.log(2.0)  # loss of one scored pair when p = 0.5
FACTOR_FLOOR = 1e-150  # |g| below this is flushed to 0: intensity g*g underflows anyway


@dataclass
class EmbeddingStore:
    """Node vectors plus the per-task modulation table.

    ``task_factors[hop, source_type, context_type]`` holds g; the score of
    a pair is sum_d g_d^2 * f(context)_d * f(source)_d.
    """

    node_vectors: np.ndarray  # (V, d) float64
    task_factors: np.ndarray  # (window, T, T, d) float64

    @property
    def dim(self) -> int:
        return self.node_vectors.shape[1]

    @property
    def window(self) -> int:
        return self.task_factors.shape[0]

    @classmethod
    def init(
        cls,
        n_nodes: int,
        n_types: int,
        window: int,
        dim: int,
        rng: np.random.Generator,
    ) -> "EmbeddingStore":
        """Node vectors uniform in [-0.5/d, 0.5/d], task factors all ones."""
        vectors = (rng.random((n_nodes, dim)) - 0.5) / dim
        factors = np.ones((window, n_types, n_types, dim))
        return cls(node_vectors=vectors, task_factors=factors)


@dataclass
class PairBatch:
    """Training pairs with their negatives, one row per positive.

    ``negatives[i]`` holds m nodes of the same type as ``contexts[i]``.
    """

    sources: np.ndarray  # (N,)
    contexts: np.ndarray  # (N,)
    hops: np.ndarray  # (N,)
    negatives: np.ndarray  # (N, m)

    def __len__(self) -> int:
        return len(self.sources)

    @property
    def negatives_per_pair(self) -> int:
        return self.negatives.shape[1]


def extract_pairs(walk: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All (source, context, hop) with the context hop+1 positions ahead.

    Context is forward-only and truncated at the end of the walk.
    Returns (sources, contexts, hops) arrays.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    length = len(walk)
    pos = np.repeat(np.arange(length), window)
    hop = np.tile(np.arange(window), length)
    keep = pos + hop + 1 < length
    pos, hop = pos[keep], hop[keep]
    return walk[pos], walk[pos + hop + 1], hop


class NegativeTable:
    """Per-type sampler over nodes, probability proportional to degree**power."""

    def __init__(self, graph: HetGraph, power: float = 1.0):
        self.power = power
        degrees = graph.degrees().astype(np.float64)
        self._nodes: list[np.ndarray] = []
        self._cumulative: list[np.ndarray] = []
        for type_id in range(graph.type_count):
            nodes = graph.nodes_of_type(type_id)
            weights = degrees[nodes] ** power
            self._nodes.append(nodes)
            self._cumulative.append(np.cumsum(weights))

    def sample(self, type_id: int, count: int, rng: np.random.Generator) -> np.ndarray:
        cumulative = self._cumulative[type_id]
        draws = rng.random(count) * cumulative[-1]
        return self._nodes[type_id][np.searchsorted(cumulative, draws, side="right")]

    def sample_for_contexts(
        self,
        context_types: np.ndarray,
        per_pair: int,
        rng: np.random.Generator,
    ) -> np.ndarray:
        """Draw ``per_pair`` negatives per row, matching each context's type."""
        out = np.empty((len(context_types), per_pair), dtype=np.int64)
        for type_id in np.unique(context_types):
            rows = np.flatnonzero(context_types == type_id)
            out[rows] = self.sample(int(type_id), rows.size * per_pair, rng).reshape(-1, per_pair)
        return out


def score(
    context: int,
    source: int,
    hop: int,
    store: EmbeddingStore,
    node_type: np.ndarray,
) -> float:
    """Task-modulated inner product of one (context, source) pair."""
    g = store.task_factors[hop, node_type[source], node_type[context]]
    return float(np.sum(g * g * store.node_vectors[context] * store.node_vectors[source]))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _forward(batch: PairBatch, store: EmbeddingStore, node_type: np.ndarray):
    """Scores and per-pair inputs shared by the numpy loss and gradient paths."""
    n_types = store.task_factors.shape[1]
    src_types = node_type[batch.sources]
    ctx_types = node_type[batch.contexts]
    g = store.task_factors[batch.hops, src_types, ctx_types]  # (N, d)
    q_src = store.node_vectors[batch.sources]  # (N, d)
    others = np.concatenate([batch.contexts[:, None], batch.negatives], axis=1)  # (N, 1+m)
    q_other = store.node_vectors[others]  # (N, 1+m, d)
    rq_src = g * g * q_src
    scores = np.einsum("nd,njd->nj", rq_src, q_other)
    task_flat = (batch.hops * n_types + src_types) * n_types + ctx_types
    return g, q_src, others, q_other, rq_src, scores, task_flat


def _pair_losses(scores: np.ndarray) -> np.ndarray:
    """Column 0 is the positive, the rest negatives: -log sigma(+/- score)."""
    signed = scores.copy()
    signed[:, 0] *= -1.0
    return np.logaddexp(0.0, signed)


def batch_loss(batch: PairBatch, store: EmbeddingStore, node_type: np.ndarray) -> float:
    """Total skip-gram loss of the batch; no side effects."""
    if len(batch) == 0:
        return 0.0
    _, _, _, _, _, scores, _ = _forward(batch, store, node_type)
    return float(_pair_losses(scores).sum())


def batch_gradients(batch: PairBatch, store: EmbeddingStore, node_type: np.ndarray):
    """Closed-form gradients of the batch loss at the current parameters.

    Returns (loss, unique_nodes, node_grad, unique_tasks, task_grad,
    task_sums, task_counts) where ``node_grad`` rows align with
    ``unique_nodes`` and ``task_grad`` rows with the flattened task ids in
    ``unique_tasks``.
    """
    g, q_src, others, q_other, rq_src, scores, task_flat = _forward(batch, store, node_type)
    losses = _pair_losses(scores)
    total = float(losses.sum())

    labels = np.zeros_like(scores)
    labels[:, 0] = 1.0
    err = _sigmoid(scores) - labels  # (N, 1+m)

    grad_other = np.einsum("nj,nd->njd", err, rq_src)
    err_q_other = np.einsum("nj,njd->nd", err, q_other)
    grad_src = g * g * err_q_other
    grad_g = 2.0 * g * q_src * err_q_other

    dim = store.dim
    columns = np.arange(dim)
    touched = np.concatenate([batch.sources, others.ravel()])
    grads = np.concatenate([grad_src, grad_other.reshape(-1, dim)])
    unique_nodes, inverse = np.unique(touched, return_inverse=True)
    node_grad = np.bincount(
        (inverse[:, None] * dim + columns).ravel(),
        weights=grads.ravel(),
        minlength=len(unique_nodes) * dim,
    ).reshape(-1, dim)

    unique_tasks, task_inverse = np.unique(task_flat, return_inverse=True)
    task_grad = np.bincount(
        (task_inverse[:, None] * dim + columns).ravel(),
        weights=grad_g.ravel(),
        minlength=len(unique_tasks) * dim,
    ).reshape(-1, dim)

    size = store.window * store.task_factors.shape[1] ** 2
    task_sums = np.bincount(task_flat, weights=losses.sum(axis=1), minlength=size)
    task_counts = np.bincount(task_flat, minlength=size) * (1 + batch.negatives_per_pair)
    return total, unique_nodes, node_grad, unique_tasks, task_grad, task_sums, task_counts


class _Workspace:
    """Preallocated scratch for the kernel path, reused across batches."""

    def __init__(self, n_nodes: int, dim: int, n_tasks: int):
        self.node_grad = np.zeros((n_nodes, dim))
        self.node_flag = np.zeros(n_nodes, dtype=np.uint8)
        self.touched_nodes = np.empty(n_nodes, dtype=np.int64)
        self.task_grad = np.zeros((n_tasks, dim))
        self.task_flag = np.zeros(n_tasks, dtype=np.uint8)
        self.touched_tasks = np.empty(n_tasks, dtype=np.int64)
        self.task_sums = np.zeros(n_tasks)
        self.task_counts = np.zeros(n_tasks, dtype=np.int64)


def _workspace_for(store: EmbeddingStore, n_nodes: int) -> _Workspace:
    n_tasks = store.window * store.task_factors.shape[1] ** 2
    ws = getattr(store, "_workspace", None)
    if (ws is None or ws.node_grad.shape != (n_nodes, store.dim)
            or ws.task_grad.shape != (n_tasks, store.dim)):
        ws = _Workspace(n_nodes, store.dim, n_tasks)
        store._workspace = ws
    return ws


@njit(cache=True)
def _kernel_accumulate(sources, contexts, hops, negatives, vectors, factors,
                       node_type, n_types, node_grad, node_flag, touched_nodes,
                       task_grad, task_flag, touched_tasks, task_sums, task_counts):
    """Accumulate loss, gradients, and per-task sums; parameters untouched."""
    n_rows = sources.shape[0]
    n_neg = negatives.shape[1]
    dim = vectors.shape[1]
    total = 0.0
    n_touched = 0
    n_tasks_touched = 0
    for n in range(n_rows):
        src = sources[n]
        ctx = contexts[n]
        task = (hops[n] * n_types + node_type[src]) * n_types + node_type[ctx]
        if task_flag[task] == 0:
            task_flag[task] = 1
            touched_tasks[n_tasks_touched] = task
            n_tasks_touched += 1
        if node_flag[src] == 0:
            node_flag[src] = 1
            touched_nodes[n_touched] = src
            n_touched += 1
        task_counts[task] += 1 + n_neg
        for j in range(1 + n_neg):
            other = ctx if j == 0 else negatives[n, j - 1]
            s = 0.0
            for d in range(dim):
                s += factors[task, d] * factors[task, d] * vectors[src, d] * vectors[other, d]
            z = -s if j == 0 else s
            if z > 0.0:
                term = z + math.log1p(math.exp(-z))
            else:
                term = math.log1p(math.exp(z))
            total += term
            task_sums[task] += term
            if s >= 0.0:
                sig = 1.0 / (1.0 + math.exp(-s))
            else:
                es = math.exp(s)
                sig = es / (1.0 + es)
            err = sig - 1.0 if j == 0 else sig
            if node_flag[other] == 0:
                node_flag[other] = 1
                touched_nodes[n_touched] = other
                n_touched += 1
            for d in range(dim):
                r = factors[task, d] * factors[task, d]
                node_grad[other, d] += err * r * vectors[src, d]
                node_grad[src, d] += err * r * vectors[other, d]
                task_grad[task, d] += err * 2.0 * factors[task, d] * vectors[src, d] * vectors[other, d]
    return total, n_touched, n_tasks_touched


@njit(cache=True)
def _kernel_apply(vectors, factors, lr, node_grad, node_flag, touched_nodes,
                  n_touched, task_grad, task_flag, touched_tasks, n_tasks_touched,
                  factor_floor):
    """Take the gradient step and clear the scratch that was used."""
    dim = vectors.shape[1]
    for i in range(n_touched):
        v = touched_nodes[i]
        for d in range(dim):
            vectors[v, d] -= lr * node_grad[v, d]
            node_grad[v, d] = 0.0
        node_flag[v] = 0
    for i in range(n_tasks_touched):
        t = touched_tasks[i]
        for d in range(dim):
            factors[t, d] -= lr * task_grad[t, d]
            # keep intensities out of the subnormal range; g*g is 0 there anyway
            if -factor_floor < factors[t, d] < factor_floor:
                factors[t, d] = 0.0
            task_grad[t, d] = 0.0
        task_flag[t] = 0


@njit(cache=True)
def _kernel_clear(node_grad, node_flag, touched_nodes, n_touched,
                  task_grad, task_flag, touched_tasks, n_tasks_touched):
    dim = node_grad.shape[1]
    for i in range(n_touched):
        v = touched_nodes[i]
        for d in range(dim):
            node_grad[v, d] = 0.0
        node_flag[v] = 0
    for i in range(n_tasks_touched):
        t = touched_tasks[i]
        for d in range(dim):
            task_grad[t, d] = 0.0
        task_flag[t] = 0


def _update_numpy(batch, store, node_type, lr, tracker):
    total, unique_nodes, node_grad, unique_tasks, task_grad, sums, counts = batch_gradients(
        batch, store, node_type
    )
    if not np.isfinite(total):
        raise NonFiniteLoss("batch loss is not finite")
    if tracker is not None:
        tracker.accumulate(sums, counts)
    store.node_vectors[unique_nodes] -= lr * node_grad
    factors_flat = store.task_factors.reshape(-1, store.dim)
    updated = factors_flat[unique_tasks] - lr * task_grad
    updated[np.abs(updated) < FACTOR_FLOOR] = 0.0
    factors_flat[unique_tasks] = updated
    return total


def _update_numba(batch, store, node_type, lr, tracker):
    n_nodes = len(store.node_vectors)
    ws = _workspace_for(store, n_nodes)
    factors_flat = store.task_factors.reshape(-1, store.dim)
    total, n_touched, n_tasks_touched = _kernel_accumulate(
        batch.sources, batch.contexts, batch.hops, batch.negatives,
        store.node_vectors, factors_flat, node_type,
        store.task_factors.shape[1], ws.node_grad, ws.node_flag, ws.touched_nodes,
        ws.task_grad, ws.task_flag, ws.touched_tasks, ws.task_sums, ws.task_counts,
    )
    if not np.isfinite(total):
        _kernel_clear(ws.node_grad, ws.node_flag, ws.touched_nodes, n_touched,
                      ws.task_grad, ws.task_flag, ws.touched_tasks, n_tasks_touched)
        ws.task_sums.fill(0.0)
        ws.task_counts.fill(0)
        raise NonFiniteLoss("batch loss is not finite")
    if tracker is not None:
        tracker.accumulate(ws.task_sums, ws.task_counts)
    ws.task_sums.fill(0.0)
    ws.task_counts.fill(0)
    _kernel_apply(store.node_vectors, factors_flat, lr,
                  ws.node_grad, ws.node_flag, ws.touched_nodes, n_touched,
                  ws.task_grad, ws.task_flag, ws.touched_tasks, n_tasks_touched,
                  FACTOR_FLOOR)
    return total


def batch_loss_and_update(
    batch: PairBatch,
    store: EmbeddingStore,
    node_type: np.ndarray,
    lr: float,
    tracker: "TaskLossTracker | None" = None,
) -> float:
    """One full-batch gradient step on node vectors and task factors.

    Gradients are exact and evaluated at the pre-update parameters. Per-task
    loss sums and scored-pair counts are accumulated into ``tracker`` when
    given; each negative counts toward the task of its positive pair.

    Raises NonFiniteLoss, before touching any parameter, if the loss
    overflowed.
    """
    if lr <= 0:
        raise ValueError("learning rate must be > 0")
    if len(batch) == 0:
        return 0.0
    if USE_NUMBA:
        return _update_numba(batch, store, node_type, lr, tracker)
    return _update_numpy(batch, store, node_type, lr, tracker)


class TaskLossTracker:
    """Running per-task loss state across batches.

    Keeps, per possible task, the constant initial loss, the most recent
    mean loss per scored pair, and the current batch's running sums and
    counts. Tasks not seen in a batch keep their previous mean as a
    surrogate.
    """

    def __init__(self, tasks: TaskSet, n_types: int, initial_loss: float = INITIAL_TASK_LOSS):
        if initial_loss <= 0:
            raise ValueError("initial loss must be > 0")
        self.tasks = tasks
        self.n_types = n_types
        shape = (tasks.window, n_types, n_types)
        self.initial_loss = np.full(shape, initial_loss)
        self.last_loss = np.full(shape, initial_loss)
        self._sums = np.zeros(shape)
        self._counts = np.zeros(shape, dtype=np.int64)

    def accumulate(self, sums: np.ndarray, counts: np.ndarray) -> None:
        self._sums += sums.reshape(self._sums.shape)
        self._counts += counts.reshape(self._counts.shape)

    def per_task_losses(self) -> dict[TaskId, float]:
        """Mean loss per scored pair for every possible task, then reset.

        Tasks seen since the last call report (and store) their batch mean;
        unseen possible tasks report the surrogate from earlier batches.
        """
        seen = (self._counts > 0) & self.tasks.mask
        with np.errstate(invalid="ignore", divide="ignore"):
            means = np.where(seen, self._sums / np.maximum(self._counts, 1), self.last_loss)
        self.last_loss = np.where(seen, means, self.last_loss)
        self._sums.fill(0.0)
        self._counts.fill(0)
        return {task: float(means[task.hop, task.source_type, task.context_type])
                for task in self.tasks}

    def consistency_totals(self) -> tuple[np.ndarray, np.ndarray]:
        """Current running (sums, counts) before a roll; for verification."""
        return self._sums.copy(), self._counts.copy()


@dataclass
class RatioTensor:
    """Inverse training ratios per task; 1 marks impossible tasks."""

    values: np.ndarray  # (window, T, T) float64


def inverse_training_ratio(
    losses: dict[TaskId, float],
    tracker: TaskLossTracker,
    tasks: TaskSet,
    window: int,
) -> RatioTensor:
    """Normalized loss ratios: a task's loss over its initial loss, divided
    by the mean of that quantity across the possible tasks at the same hop.

    Entries above 1 mark under-trained tasks. Impossible tasks are pinned
    to exactly 1.
    """
    n_types = tracker.n_types
    values = np.ones((window, n_types, n_types))
    relative = np.zeros_like(values)
    for task, loss in losses.items():
        relative[task.hop, task.source_type, task.context_type] = (
            loss / tracker.initial_loss[task.hop, task.source_type, task.context_type]
        )
    for hop in range(window):
        mask = tasks.mask[hop]
        if not mask.any():
            continue
        mean = relative[hop][mask].mean()
        if not np.isfinite(mean) or mean <= 0.0:
            raise DegenerateRatio(f"mean relative loss at hop {hop} is {mean}")
        values[hop][mask] = relative[hop][mask] / mean
    return RatioTensor(values=values)
