"""Comparison rankers: fraud ratio, ratio with prior, greedy vertex
cover, and a linearized belief-propagation approximation.

All rankers return a full ordering of the locations as (index, score)
pairs, score descending with ties broken by ascending location index,
so the evaluator can sweep precision/recall curves uniformly.
"""

from __future__ import annotations

import heapq

import numpy as np

from .detector import PriorParams, segment_sums
from .graph import BipartiteGraph

RankedLocations = list[tuple[int, float]]


class DivergenceError(Exception):
    pass


def _rank(scores: np.ndarray) -> RankedLocations:
    order = np.lexsort((np.arange(len(scores)), -np.asarray(scores)))
    return [(int(j), float(scores[j])) for j in order]


def ratio_score(graph: BipartiteGraph) -> RankedLocations:
    """Plain fraud-card ratio F_j / |N_j|."""
    scores = graph.fraud_neighbor_counts() / graph.location_degrees()
    return _rank(scores)


def ratio_prior_score(graph: BipartiteGraph,
                      prior: PriorParams = PriorParams()) -> RankedLocations:
    """Fraud-card ratio smoothed by the Beta prior pseudo-counts."""
    scores = ((graph.fraud_neighbor_counts() + prior.alpha)
              / (graph.location_degrees() + prior.alpha + prior.beta))
    return _rank(scores)


def greedy_vertex_cover(graph: BipartiteGraph) -> RankedLocations:
    """Repeatedly pick the location covering the most uncovered
    fraud-cards (lower index on ties) until every fraud-card is covered
    or nothing new can be covered.  Selected locations are ranked by
    selection order and scored by their coverage at selection;
    unselected locations follow with score 0.
    """
    covered = np.zeros(graph.num_cards, dtype=bool)
    remaining = int(graph.fraud.sum())
    counts = graph.fraud_neighbor_counts()
    # Lazy-deletion max-heap; stale entries are re-scored on pop.
    heap = [(-int(counts[j]), j) for j in range(graph.num_locations)
            if counts[j] > 0]
    heapq.heapify(heap)
    selected: list[tuple[int, float]] = []
    chosen = np.zeros(graph.num_locations, dtype=bool)
    while remaining > 0 and heap:
        neg, j = heapq.heappop(heap)
        lo, hi = graph.loc_indptr[j], graph.loc_indptr[j + 1]
        neighbors = graph.loc_indices[lo:hi]
        gain = int(np.count_nonzero(graph.fraud[neighbors]
                                    & ~covered[neighbors]))
        if gain == 0:
            continue
        if gain < -neg:
            heapq.heappush(heap, (-gain, j))
            continue
        selected.append((j, float(gain)))
        chosen[j] = True
        covered[neighbors] = True
        remaining -= gain
    tail = [(int(j), 0.0) for j in range(graph.num_locations) if not chosen[j]]
    return selected + tail


FRAUD_CARD_PRIOR = 0.5
CLEAN_CARD_PRIOR = -0.1
LOCATION_PRIOR = 0.0


def safe_coupling(graph: BipartiteGraph) -> float:
    """Coupling strength guaranteed to keep the Jacobi sweeps contractive
    (c * max_degree + c^2 * max_degree < 1 with margin)."""
    dmax = max(int(graph.card_degrees().max(initial=1)),
               int(graph.location_degrees().max(initial=1)))
    return 0.5 / (dmax + 1)


def linearized_bp_score(
    graph: BipartiteGraph,
    homophily: float = 0.05,
    tol: float = 1e-8,
    max_sweeps: int = 10_000,
) -> RankedLocations:
    """Linearized belief propagation: solve b = phi + c*A*b - c^2*D*b by
    Jacobi sweeps over the combined card+location vector, then rank
    locations by final belief.  Raises DivergenceError if the residual
    grows for 10 consecutive sweeps (try a smaller homophily)."""
    if not 0 < homophily < 1:
        raise ValueError("homophily must be in (0, 1)")
    c = homophily
    num_cards, num_locations = graph.num_cards, graph.num_locations
    phi = np.empty(num_cards + num_locations, dtype=np.float64)
    phi[:num_cards] = np.where(graph.fraud, FRAUD_CARD_PRIOR, CLEAN_CARD_PRIOR)
    phi[num_cards:] = LOCATION_PRIOR
    degrees = np.concatenate([graph.card_degrees(),
                              graph.location_degrees()]).astype(np.float64)

    def adjacency_times(b: np.ndarray) -> np.ndarray:
        out = np.empty_like(b)
        out[:num_cards] = segment_sums(
            b[num_cards + graph.card_indices], graph.card_indptr)
        out[num_cards:] = segment_sums(
            b[graph.loc_indices], graph.loc_indptr)
        return out

    b = phi.copy()
    prev_residual = np.inf
    growth_streak = 0
    for _ in range(max_sweeps):
        b_next = phi + c * adjacency_times(b) - c * c * degrees * b
        residual = float(np.abs(b_next - b).max())
        b = b_next
        if residual < tol:
            break
        growth_streak = growth_streak + 1 if residual > prev_residual else 0
        if growth_streak >= 10:
            raise DivergenceError(
                f"belief sweeps diverging (residual {residual:.3g}); "
                "use a smaller homophily")
        prev_residual = residual
    else:
        raise DivergenceError(
            f"no convergence in {max_sweeps} sweeps; use a smaller homophily")
    return _rank(b[num_cards:])
