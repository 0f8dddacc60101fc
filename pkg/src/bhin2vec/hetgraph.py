"""Typed-graph storage, loading, and the derived type-level network.

A heterogeneous network is stored CSR-style with each node's neighbor block
sorted by (neighbor type, neighbor id), so "neighbors of v having type t"
is a constant-time slice. Graphs are immutable after construction and safe
to read from any number of concurrent walkers.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import EmptyGraph, MalformedRecord, UnknownNodeType


def _iter_lines(source) -> Iterator[tuple[int, str]]:
    """Yield (1-based line number, line) from a path or any line iterable."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as handle:
            for number, line in enumerate(handle, start=1):
                yield number, line
    else:
        for number, line in enumerate(source, start=1):
            yield number, line


@dataclass
class HetGraph:
    """Undirected graph whose nodes carry one of a small set of types.

    Attributes:
        node_type: per-node type id, dense in [0, type_count).
        type_names: external name per type id.
        node_names: external name per node id.
        adj_indptr: CSR row pointer, one block per node.
        adj_indices: neighbor ids, each block sorted by (type, id).
        type_indptr: per node, offsets of each type's run inside its block.
        available: (V, T) bool, True where a node has a neighbor of a type.
    """

    node_type: np.ndarray
    type_names: list[str]
    node_names: list[str]
    adj_indptr: np.ndarray
    adj_indices: np.ndarray
    type_indptr: np.ndarray
    available: np.ndarray

    @property
    def node_count(self) -> int:
        return len(self.node_type)

    @property
    def type_count(self) -> int:
        return len(self.type_names)

    @property
    def edge_count(self) -> int:
        return len(self.adj_indices) // 2

    def neighbors(self, node: int) -> np.ndarray:
        return self.adj_indices[self.adj_indptr[node]:self.adj_indptr[node + 1]]

    def neighbors_of_type(self, node: int, type_id: int) -> np.ndarray:
        base = self.adj_indptr[node]
        lo = self.type_indptr[node, type_id]
        hi = self.type_indptr[node, type_id + 1]
        return self.adj_indices[base + lo:base + hi]

    def degree(self, node: int) -> int:
        return int(self.adj_indptr[node + 1] - self.adj_indptr[node])

    def degrees(self) -> np.ndarray:
        return np.diff(self.adj_indptr)

    def nodes_of_type(self, type_id: int) -> np.ndarray:
        return np.flatnonzero(self.node_type == type_id)

    def edges(self) -> np.ndarray:
        """Return all undirected edges once, as (E, 2) rows with u < v."""
        src = np.repeat(np.arange(self.node_count), np.diff(self.adj_indptr))
        dst = self.adj_indices
        keep = src < dst
        return np.column_stack([src[keep], dst[keep]])

    def has_edge(self, u: int, v: int) -> bool:
        block = self.neighbors_of_type(u, int(self.node_type[v]))
        pos = np.searchsorted(block, v)
        return pos < len(block) and block[pos] == v

    @classmethod
    def from_arrays(
        cls,
        node_type: np.ndarray,
        edges: np.ndarray,
        node_names: list[str] | None = None,
        type_names: list[str] | None = None,
    ) -> "HetGraph":
        """Build a graph directly from dense ids, without degree filtering.

        Self-loops and duplicate edges are dropped; every edge is stored in
        both directions.
        """
        node_type = np.asarray(node_type, dtype=np.int64)
        n_nodes = len(node_type)
        n_types = int(node_type.max()) + 1 if n_nodes else 0
        if type_names is None:
            type_names = [str(t) for t in range(n_types)]
        if node_names is None:
            node_names = [str(v) for v in range(n_nodes)]
        n_types = len(type_names)

        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(edges):
            lo = np.minimum(edges[:, 0], edges[:, 1])
            hi = np.maximum(edges[:, 0], edges[:, 1])
            keep = lo != hi
            edges = np.unique(np.column_stack([lo[keep], hi[keep]]), axis=0)

        src = np.concatenate([edges[:, 0], edges[:, 1]]) if len(edges) else np.empty(0, np.int64)
        dst = np.concatenate([edges[:, 1], edges[:, 0]]) if len(edges) else np.empty(0, np.int64)
        order = np.lexsort((dst, node_type[dst] if len(dst) else dst, src))
        src, dst = src[order], dst[order]

        counts = np.bincount(src, minlength=n_nodes)
        indptr = np.concatenate([[0], np.cumsum(counts)])

        per_type = np.zeros((n_nodes, n_types), dtype=np.int64)
        if len(dst):
            np.add.at(per_type, (src, node_type[dst]), 1)
        type_indptr = np.concatenate(
            [np.zeros((n_nodes, 1), dtype=np.int64), np.cumsum(per_type, axis=1)], axis=1
        )

        return cls(
            node_type=node_type,
            type_names=list(type_names),
            node_names=list(node_names),
            adj_indptr=indptr.astype(np.int64),
            adj_indices=dst,
            type_indptr=type_indptr,
            available=per_type > 0,
        )


@dataclass
class LoadReport:
    """What the loader did: pre-filter sizes and which nodes were dropped."""

    pre_filter_node_count: int
    pre_filter_edge_count: int
    dropped: list[tuple[str, int]]  # (node name, pre-filter degree)
    min_degree: int

    def dropped_names(self) -> set[str]:
        return {name for name, _ in self.dropped}

    def write(self, path) -> None:
        lines = [f"{name}\t{degree}\n" for name, degree in self.dropped]
        with open(path, "w", encoding="utf-8") as handle:
            handle.writelines(lines)


def load_graph(edges_source, types_source, min_degree: int = 2) -> tuple[HetGraph, LoadReport]:
    """Load a heterogeneous network from an edge list and a node-type table.

    The degree filter is a single pass over the original graph: nodes whose
    degree is below ``min_degree`` are removed first, then any node left
    without edges is removed as well. The report lists every dropped node
    with its pre-filter degree.

    Raises:
        MalformedRecord: a line does not have exactly two fields.
        UnknownNodeType: an edge references a node missing from the types.
        EmptyGraph: nothing survives the filter.
    """
    name_to_id: dict[str, int] = {}
    names: list[str] = []
    type_of: list[str] = []
    for number, line in _iter_lines(types_source):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 2:
            raise MalformedRecord(f"types line {number}: expected 2 fields, got {len(fields)}")
        node, type_name = fields
        if node in name_to_id:
            type_of[name_to_id[node]] = type_name
        else:
            name_to_id[node] = len(names)
            names.append(node)
            type_of.append(type_name)

    seen: set[tuple[int, int]] = set()
    for number, line in _iter_lines(edges_source):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 2:
            raise MalformedRecord(f"edges line {number}: expected 2 fields, got {len(fields)}")
        u_name, v_name = fields
        try:
            u, v = name_to_id[u_name], name_to_id[v_name]
        except KeyError as exc:
            raise UnknownNodeType(f"edges line {number}: node {exc.args[0]!r} has no type") from None
        if u == v:
            continue
        seen.add((u, v) if u < v else (v, u))

    n_pre = len(names)
    edges = np.array(sorted(seen), dtype=np.int64).reshape(-1, 2)
    degrees = np.zeros(n_pre, dtype=np.int64)
    if len(edges):
        degrees += np.bincount(edges[:, 0], minlength=n_pre)
        degrees += np.bincount(edges[:, 1], minlength=n_pre)

    keep = degrees >= min_degree
    if len(edges):
        kept_mask = keep[edges[:, 0]] & keep[edges[:, 1]]
        post = np.zeros(n_pre, dtype=np.int64)
        post += np.bincount(edges[kept_mask, 0], minlength=n_pre)
        post += np.bincount(edges[kept_mask, 1], minlength=n_pre)
        keep &= post > 0
        kept_mask = keep[edges[:, 0]] & keep[edges[:, 1]]
        edges = edges[kept_mask]
    else:
        keep &= False

    dropped = [(names[i], int(degrees[i])) for i in np.flatnonzero(~keep)]
    if not keep.any():
        raise EmptyGraph(
            f"no node has degree >= {min_degree} and at least one surviving edge"
        )

    new_id = np.cumsum(keep) - 1
    kept_idx = np.flatnonzero(keep)
    kept_names = [names[i] for i in kept_idx]
    kept_type_of = [type_of[i] for i in kept_idx]

    surviving_types = set(kept_type_of)
    type_names: list[str] = []
    type_ids: dict[str, int] = {}
    for name in type_of:  # id order follows first appearance in the type file
        if name in type_ids or name not in surviving_types:
            continue
        type_ids[name] = len(type_names)
        type_names.append(name)
    node_type = np.array([type_ids[t] for t in kept_type_of], dtype=np.int64)

    graph = HetGraph.from_arrays(
        node_type=node_type,
        edges=np.column_stack([new_id[edges[:, 0]], new_id[edges[:, 1]]]),
        node_names=kept_names,
        type_names=type_names,
    )
    report = LoadReport(
        pre_filter_node_count=n_pre,
        pre_filter_edge_count=len(seen),
        dropped=dropped,
        min_degree=min_degree,
    )
    return graph, report


def write_edge_file(graph: HetGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for u, v in graph.edges():
            handle.write(f"{graph.node_names[u]}\t{graph.node_names[v]}\n")


def write_type_file(graph: HetGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for node, type_id in enumerate(graph.node_type):
            handle.write(f"{graph.node_names[node]}\t{graph.type_names[type_id]}\n")


@dataclass
class MetaNetwork:
    """Graph over node types: two types are adjacent iff some edge joins them."""

    adjacency: np.ndarray  # (T, T) bool, symmetric
    type_names: list[str]
    type_degree: np.ndarray = field(init=False)

    def __post_init__(self):
        self.type_degree = self.adjacency.sum(axis=1).astype(np.int64)

    @property
    def type_count(self) -> int:
        return len(self.type_names)


def build_meta_network(graph: HetGraph) -> MetaNetwork:
    n_types = graph.type_count
    adjacency = np.zeros((n_types, n_types), dtype=bool)
    edges = graph.edges()
    if len(edges):
        tu = graph.node_type[edges[:, 0]]
        tv = graph.node_type[edges[:, 1]]
        adjacency[tu, tv] = True
        adjacency[tv, tu] = True
    return MetaNetwork(adjacency=adjacency, type_names=list(graph.type_names))


class TaskId(NamedTuple):
    """One virtual prediction task: context of ``context_type`` is reached
    from a source of ``source_type`` across ``hop`` intermediate nodes."""

    hop: int
    source_type: int
    context_type: int


@dataclass
class TaskSet:
    """Set of tasks realizable by some walk, with O(1) membership."""

    window: int
    mask: np.ndarray  # (window, T, T) bool

    def __contains__(self, task: TaskId) -> bool:
        hop, src, ctx = task
        if not 0 <= hop < self.window:
            return False
        return bool(self.mask[hop, src, ctx])

    def __iter__(self) -> Iterator[TaskId]:
        for hop, src, ctx in zip(*np.nonzero(self.mask)):
            yield TaskId(int(hop), int(src), int(ctx))

    def __len__(self) -> int:
        return int(self.mask.sum())


def possible_tasks(meta: MetaNetwork, window: int) -> TaskSet:
    """Tasks whose type pair is reachable in exactly hop+1 steps of the
    type-level network (hop = number of intermediate nodes)."""
    if window < 1:
        raise ValueError("window must be >= 1")
    n = meta.type_count
    adjacency = meta.adjacency.astype(np.int64)
    mask = np.zeros((window, n, n), dtype=bool)
    reach = adjacency.copy()
    for hop in range(window):
        mask[hop] = reach > 0
        reach = (reach @ adjacency > 0).astype(np.int64)
    return TaskSet(window=window, mask=mask)
