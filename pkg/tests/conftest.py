import numpy as np
import pytest

from bhin2vec.hetgraph import HetGraph, load_graph


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        print(f"\n[acceptance] {name}: {report.outcome.upper()}", flush=True)


def graph_from_lists(edge_lines, type_lines, min_degree=2):
    graph, _ = load_graph(edge_lines, type_lines, min_degree=min_degree)
    return graph


@pytest.fixture
def triangle_graph():
    # a:A - b:B - c:A triangle, every degree 2
    return graph_from_lists(["a b", "b c", "c a"], ["a A", "b B", "c A"])


@pytest.fixture
def bipartite_graph():
    # complete bipartite between 3 U and 3 G nodes
    edges = [f"u{i} g{j}" for i in range(3) for j in range(3)]
    types = [f"u{i} U" for i in range(3)] + [f"g{j} G" for j in range(3)]
    return graph_from_lists(edges, types)


@pytest.fixture
def cycle_graph():
    # homogeneous 4-cycle
    edges = ["n0 n1", "n1 n2", "n2 n3", "n3 n0"]
    types = [f"n{i} N" for i in range(4)]
    return graph_from_lists(edges, types)


def random_het_graph(rng, max_nodes=30, max_types=4, extra_edges=2.0):
    """Random typed graph where every node has degree >= 2.

    A shuffled cycle guarantees the degree floor, random extra edges add
    structure. Types are assigned uniformly at random but every type gets
    at least one node.
    """
    n_nodes = int(rng.integers(4, max_nodes + 1))
    n_types = int(rng.integers(1, min(max_types, n_nodes) + 1))
    types = rng.integers(0, n_types, size=n_nodes)
    types[:n_types] = np.arange(n_types)  # every type occupied
    order = rng.permutation(n_nodes)
    edges = [(order[i], order[(i + 1) % n_nodes]) for i in range(n_nodes)]
    for _ in range(int(extra_edges * n_nodes)):
        u, v = rng.integers(0, n_nodes, size=2)
        if u != v:
            edges.append((u, v))
    return HetGraph.from_arrays(node_type=types, edges=np.array(edges))


def type_complete_graph(n_per_type=6, n_types=3):
    """Every node has neighbors of every type (including its own)."""
    edges = []
    nodes = [(t, i) for t in range(n_types) for i in range(n_per_type)]
    ids = {node: k for k, node in enumerate(nodes)}
    for t1 in range(n_types):
        for t2 in range(t1, n_types):
            for i in range(n_per_type):
                for j in range(n_per_type):
                    if t1 == t2 and i >= j:
                        continue
                    edges.append((ids[(t1, i)], ids[(t2, j)]))
    types = np.array([t for t, _ in nodes])
    return HetGraph.from_arrays(node_type=types, edges=np.array(edges))
