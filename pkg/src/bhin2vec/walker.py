"""Type-transition matrix and biased random-walk generation.

The next node of a walk is chosen in two stages: first a neighbor type is
drawn from the current type's row of a row-stochastic matrix, then a node
is drawn uniformly among the current node's neighbors of that type. The
row is restricted to types the node actually has neighbors of and
renormalized, so every step is well defined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DeadEnd, IsolatedType
from .hetgraph import HetGraph, MetaNetwork

ROW_SUM_TOL = 1e-9


@dataclass
class StochasticMatrix:
    """Row-stochastic type-transition probabilities over a fixed support.

    ``support`` is the type-level adjacency; probabilities outside it are
    zero. Instances are treated as immutable snapshots: updates produce a
    new matrix.
    """

    values: np.ndarray  # (T, T) float64
    support: np.ndarray  # (T, T) bool

    @property
    def type_count(self) -> int:
        return len(self.values)

    def copy(self) -> "StochasticMatrix":
        return StochasticMatrix(self.values.copy(), self.support)

    def validate(self) -> None:
        if self.values.shape != self.support.shape or self.values.ndim != 2:
            raise ValueError("values and support must be square and congruent")
        if not self.support.any(axis=1).all():
            raise IsolatedType("a type has no neighbor in the type-level network")
        if np.any(self.values[~self.support] != 0.0):
            raise ValueError("probability mass outside the support")
        if np.any(self.values < 0.0) or np.any(self.values > 1.0):
            raise ValueError("entries must lie in [0, 1]")
        sums = self.values.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
            raise ValueError(f"row sums deviate from 1 by more than {ROW_SUM_TOL}")


def uniform_stochastic_matrix(meta: MetaNetwork) -> StochasticMatrix:
    """Equal probability for every adjacent type: 1 / degree of the source type."""
    degree = meta.type_degree
    if np.any(degree == 0):
        lonely = meta.type_names[int(np.argmin(degree))]
        raise IsolatedType(f"type {lonely!r} has no neighbor in the type-level network")
    values = np.where(meta.adjacency, 1.0 / degree[:, None], 0.0)
    matrix = StochasticMatrix(values=values, support=meta.adjacency.copy())
    matrix.validate()
    return matrix


def init_stochastic_matrix(meta: MetaNetwork) -> StochasticMatrix:
    """Ones on the support, then row-normalized; equals the uniform matrix."""
    return uniform_stochastic_matrix(meta)


def transition_power(matrix: StochasticMatrix, steps: int) -> np.ndarray:
    """The ``steps``-hop type-transition probabilities, a plain matrix power."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    return np.linalg.matrix_power(matrix.values, steps)


def sample_walk(
    graph: HetGraph,
    matrix: StochasticMatrix,
    start: int,
    length: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Generate one walk of exactly ``length`` nodes starting at ``start``.

    At each step the next type comes from the current type's row of
    ``matrix`` restricted to locally available types (renormalized; uniform
    over available types if the restricted row has no mass), then the next
    node is uniform among neighbors of that type.
    """
    if length < 1:
        raise ValueError("walk length must be >= 1")
    if not 0 <= start < graph.node_count:
        raise ValueError(f"start node {start} out of range")

    walk = np.empty(length, dtype=np.int64)
    walk[0] = start
    if length == 1:
        return walk

    values = matrix.values
    available = graph.available
    node_type = graph.node_type
    type_draws = rng.random(length - 1)
    node_draws = rng.random(length - 1)

    current = start
    for i in range(1, length):
        avail = available[current]
        if not avail.any():
            raise DeadEnd(f"node {graph.node_names[current]} has no neighbors")
        row = values[node_type[current]] * avail
        total = row.sum()
        if total <= 0.0:
            row = avail.astype(np.float64)
            total = row.sum()
        cumulative = np.cumsum(row)
        next_type = int(np.searchsorted(cumulative, type_draws[i - 1] * total, side="right"))
        next_type = min(next_type, len(row) - 1)
        bucket = graph.neighbors_of_type(current, next_type)
        current = int(bucket[int(node_draws[i - 1] * len(bucket))])
        walk[i] = current
    return walk


def sample_walk_neighbor_uniform(
    graph: HetGraph,
    start: int,
    length: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Baseline walk: the next node is uniform over all neighbors, type-blind."""
    if length < 1:
        raise ValueError("walk length must be >= 1")
    if not 0 <= start < graph.node_count:
        raise ValueError(f"start node {start} out of range")

    walk = np.empty(length, dtype=np.int64)
    walk[0] = start
    if length == 1:
        return walk

    draws = rng.random(length - 1)
    current = start
    for i in range(1, length):
        nbrs = graph.neighbors(current)
        if len(nbrs) == 0:
            raise DeadEnd(f"node {graph.node_names[current]} has no neighbors")
        current = int(nbrs[int(draws[i - 1] * len(nbrs))])
        walk[i] = current
    return walk
