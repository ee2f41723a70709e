import numpy as np
import pytest

from pocfinder.graph import BipartiteGraph, TransactionRecord


def make_graph(edges, fraud, num_locations=None):
    """Small-graph helper: edges as (card, location) index pairs."""
    edges = list(edges)
    num_cards = len(fraud)
    if num_locations is None:
        num_locations = max(j for _, j in edges) + 1
    return BipartiteGraph.from_edge_arrays(
        [f"c{i}" for i in range(num_cards)],
        [f"t{j}:0" for j in range(num_locations)],
        np.array([i for i, _ in edges]),
        np.array([j for _, j in edges]),
        np.array(fraud, dtype=bool))


def make_record(card, terminal, timestamp=0, amount=100, fraud=False):
    return TransactionRecord(card, terminal, timestamp, amount, fraud)


@pytest.fixture
def worked_graph():
    """Two locations, three cards: c1 fraud at both locations, c2 fraud
    at the first only, c3 clean at the second only.  With alpha=beta=1
    the fixed point is theta = (2/3, 1/3)."""
    return make_graph([(0, 0), (0, 1), (1, 0), (2, 1)],
                      [True, True, False])
