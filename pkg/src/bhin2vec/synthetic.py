"""Random heterogeneous networks with exact per-relation edge counts.

Edges are drawn uniformly without duplicates inside each relation, then a
rewiring pass guarantees that every node incident to at least one edge has
degree two or more, so loading the output with the default degree filter
never discards an edge. Nodes the draw left untouched stay listed in the
type file and are dropped cleanly at load time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleSpec


@dataclass
class SyntheticSpec:
    nodes_per_type: dict[str, int]  # type name -> node count
    relation_edges: dict[tuple[str, str], int]  # (type, type) -> edge count

    def validate(self) -> None:
        for name, count in self.nodes_per_type.items():
            if count < 1:
                raise InfeasibleSpec(f"type {name!r} needs at least one node")
        canonical = {tuple(sorted(key)) for key in self.relation_edges}
        if len(canonical) != len(self.relation_edges):
            raise InfeasibleSpec("a relation type pair is listed twice")
        for (a, b), count in self.relation_edges.items():
            if a not in self.nodes_per_type or b not in self.nodes_per_type:
                raise InfeasibleSpec(f"relation {a}-{b} references an unknown type")
            if count < 0:
                raise InfeasibleSpec(f"relation {a}-{b}: negative edge count")
            limit = self._max_edges(a, b)
            if count > limit:
                raise InfeasibleSpec(
                    f"relation {a}-{b}: {count} edges requested, at most {limit} exist"
                )

    def _max_edges(self, a: str, b: str) -> int:
        na, nb = self.nodes_per_type[a], self.nodes_per_type[b]
        return na * (na - 1) // 2 if a == b else na * nb


class _Builder:
    """Mutable edge state during generation: membership, degrees, per-relation lists."""

    def __init__(self, spec: SyntheticSpec):
        self.spec = spec
        self.offsets: dict[str, int] = {}
        total = 0
        for name, count in spec.nodes_per_type.items():
            self.offsets[name] = total
            total += count
        self.n_nodes = total
        self.degree = np.zeros(total, dtype=np.int64)
        self.edge_set: set[tuple[int, int]] = set()
        self.relation_edges: dict[tuple[str, str], list[tuple[int, int]]] = {}

    def node_range(self, type_name: str) -> tuple[int, int]:
        start = self.offsets[type_name]
        return start, start + self.spec.nodes_per_type[type_name]

    def add(self, relation: tuple[str, str], u: int, v: int) -> bool:
        key = (u, v) if u < v else (v, u)
        if u == v or key in self.edge_set:
            return False
        self.edge_set.add(key)
        self.relation_edges[relation].append(key)
        self.degree[u] += 1
        self.degree[v] += 1
        return True

    def remove(self, relation: tuple[str, str], index: int) -> tuple[int, int]:
        u, v = self.relation_edges[relation].pop(index)
        self.edge_set.remove((u, v))
        self.degree[u] -= 1
        self.degree[v] -= 1
        return u, v


def _draw_relation(builder: _Builder, relation: tuple[str, str], count: int,
                   rng: np.random.Generator) -> None:
    builder.relation_edges[relation] = []
    a, b = relation
    a_lo, a_hi = builder.node_range(a)
    b_lo, b_hi = builder.node_range(b)
    limit = builder.spec._max_edges(a, b)
    if count > 0.7 * limit:
        # dense relation: rejection sampling stalls, enumerate instead
        if a == b:
            iu, iv = np.triu_indices(a_hi - a_lo, k=1)
            pairs = np.column_stack([iu + a_lo, iv + a_lo])
        else:
            grid_u, grid_v = np.meshgrid(
                np.arange(a_lo, a_hi), np.arange(b_lo, b_hi), indexing="ij"
            )
            pairs = np.column_stack([grid_u.ravel(), grid_v.ravel()])
        for row in rng.permutation(len(pairs))[:count]:
            builder.add(relation, int(pairs[row, 0]), int(pairs[row, 1]))
        return
    while len(builder.relation_edges[relation]) < count:
        need = count - len(builder.relation_edges[relation])
        us = rng.integers(a_lo, a_hi, size=max(2 * need, 64))
        vs = rng.integers(b_lo, b_hi, size=len(us))
        for u, v in zip(us, vs):
            if len(builder.relation_edges[relation]) == count:
                break
            builder.add(relation, int(u), int(v))


def _relations_of_node(builder: _Builder, node: int) -> list[tuple[str, str]]:
    out = []
    for relation in builder.relation_edges:
        for type_name in relation:
            lo, hi = builder.node_range(type_name)
            if lo <= node < hi:
                out.append(relation)
                break
    return out


def _partner_types(relation: tuple[str, str], builder: _Builder, node: int) -> list[str]:
    a, b = relation
    a_lo, a_hi = builder.node_range(a)
    out = []
    if a_lo <= node < a_hi:
        out.append(b)
    b_lo, b_hi = builder.node_range(b)
    if b_lo <= node < b_hi and (a != b or not out):
        out.append(a)
    return out


def _try_attach(builder: _Builder, node: int, rng: np.random.Generator) -> bool:
    """Give ``node`` a second edge by moving one edge of a busy pair to it."""
    for relation in _relations_of_node(builder, node):
        edges = builder.relation_edges[relation]
        if len(edges) < 2:
            continue
        for partner_type in _partner_types(relation, builder, node):
            lo, hi = builder.node_range(partner_type)
            for _ in range(40):
                partner = int(rng.integers(lo, hi))
                key = (node, partner) if node < partner else (partner, node)
                if partner == node or key in builder.edge_set:
                    continue
                if builder.degree[partner] == 0:  # would create a new deficient node
                    continue
                for _ in range(60):
                    index = int(rng.integers(len(edges)))
                    x, y = edges[index]
                    if node in (x, y) or partner in (x, y):
                        continue
                    if builder.degree[x] >= 3 and builder.degree[y] >= 3:
                        builder.remove(relation, index)
                        ordered = relation
                        builder.add(ordered, node, partner)
                        return True
                break
    return False


def _try_detach(builder: _Builder, node: int, rng: np.random.Generator) -> bool:
    """Drop ``node``'s only edge and respawn it between two covered nodes."""
    for relation in list(builder.relation_edges):
        edges = builder.relation_edges[relation]
        for index, (x, y) in enumerate(edges):
            if node not in (x, y):
                continue
            other = y if x == node else x
            if builder.degree[other] == 2:  # removal would strand the neighbor
                continue
            a, b = relation
            a_lo, a_hi = builder.node_range(a)
            b_lo, b_hi = builder.node_range(b)
            for _ in range(80):
                p = int(rng.integers(a_lo, a_hi))
                q = int(rng.integers(b_lo, b_hi))
                key = (p, q) if p < q else (q, p)
                if p == q or key in builder.edge_set:
                    continue
                if builder.degree[p] == 0 or builder.degree[q] == 0:
                    continue
                if node in (p, q):
                    continue
                builder.remove(relation, index)
                builder.add(relation, p, q)
                return True
    return False


def generate(spec: SyntheticSpec, rng: np.random.Generator):
    """Return (node names, type per node, edge name pairs) for the spec.

    Raises InfeasibleSpec when a relation exceeds its maximum size or when
    the degree guarantee cannot be rewired into place.
    """
    spec.validate()
    builder = _Builder(spec)
    for relation, count in spec.relation_edges.items():
        _draw_relation(builder, relation, count, rng)

    while True:
        deficient = np.flatnonzero(builder.degree == 1)
        if len(deficient) == 0:
            break
        progress = False
        for node in deficient:
            if builder.degree[node] != 1:
                continue
            if _try_attach(builder, int(node), rng) or _try_detach(builder, int(node), rng):
                progress = True
        if not progress:
            raise InfeasibleSpec(
                "cannot guarantee degree 2 for every covered node; "
                "a relation is too small to rewire"
            )

    names = []
    types = []
    for type_name, count in spec.nodes_per_type.items():
        names.extend(f"{type_name}{i}" for i in range(count))
        types.extend([type_name] * count)
    edges = []
    for relation in spec.relation_edges:
        edges.extend(builder.relation_edges[relation])
    edge_names = [(names[u], names[v]) for u, v in edges]
    return names, types, edge_names


def write_files(names, types, edge_names, edges_path, types_path) -> None:
    with open(types_path, "w", encoding="utf-8") as handle:
        for name, type_name in zip(names, types):
            handle.write(f"{name}\t{type_name}\n")
    with open(edges_path, "w", encoding="utf-8") as handle:
        for u, v in edge_names:
            handle.write(f"{u}\t{v}\n")
