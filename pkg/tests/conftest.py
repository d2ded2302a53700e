"""Shared fixtures: tiny deterministic graphs and batches."""

import numpy as np
import pytest

from giplab.graphs import Graph, disjoint_union


def random_graph(rng: np.random.Generator, n: int, p_edge: float, dim: int = 3, label: int = 0) -> Graph:
    iu, iv = np.triu_indices(n, k=1)
    mask = rng.random(iu.shape[0]) < p_edge
    edges = np.stack([iu[mask], iv[mask]], axis=1)
    return Graph(n, edges, rng.normal(size=(n, dim)), label)


@pytest.fixture
def path3() -> Graph:
    """Three nodes in a line: 0-1-2."""
    return Graph(3, [[0, 1], [1, 2]], np.eye(3), 0)


@pytest.fixture
def triangle() -> Graph:
    return Graph(3, [[0, 1], [0, 2], [1, 2]], np.arange(9, dtype=float).reshape(3, 3), 1)


@pytest.fixture
def pair_batch(path3, triangle):
    return disjoint_union([path3, triangle])


@pytest.fixture
def medium_batch():
    rng = np.random.default_rng(7)
    graphs = [random_graph(rng, n, 0.4, dim=4, label=i % 2) for i, n in enumerate([5, 3, 6, 4])]
    return disjoint_union(graphs)
