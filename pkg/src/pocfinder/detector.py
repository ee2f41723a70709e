"""Alternating blame / compromise-probability estimation.

Each fraud-card spreads one unit of blame over its neighboring
locations in proportion to their current compromise probabilities;
each location's probability is the Beta-Binomial posterior mean of the
blame it collected.  The two updates alternate until the l1 change in
the probability vector drops below epsilon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import BipartiteGraph


@dataclass(frozen=True)
class PriorParams:
    """Beta prior pseudo-counts plus loop controls.

    alpha acts as virtual fraud-cards at every location, beta as
    virtual clean cards; alpha/(alpha+beta) is the prior probability
    that a random location is compromised.
    """

    alpha: float = 0.2
    beta: float = 15.0
    epsilon: float = 1e-6
    max_iterations: int = 100

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class DetectionResult:
    theta: np.ndarray
    blames: np.ndarray
    residuals: list[float]
    converged: bool
    iterations: int


def segment_sums(values: np.ndarray, indptr: np.ndarray) -> np.ndarray:
    """Sum ``values`` over the segments delimited by ``indptr``.

    Summation within each segment follows the fixed stored order, so
    results are reproducible run to run. Empty segments sum to zero.
    """
    n = len(indptr) - 1
    out = np.zeros(n, dtype=np.float64)
    if values.size == 0:
        return out
    starts = np.asarray(indptr[:-1])
    nonempty = np.asarray(indptr[1:]) > starts
    sums = np.add.reduceat(values, np.minimum(starts, values.size - 1))
    out[nonempty] = sums[nonempty]
    return out


def init_uniform_blames(graph: BipartiteGraph) -> np.ndarray:
    """Uniform blame over each fraud-card's neighbors; zero elsewhere."""
    degrees = graph.card_degrees()
    fraud_cards = np.flatnonzero(graph.fraud)
    if fraud_cards.size and degrees[fraud_cards].min() == 0:
        raise ValueError("fraud-card with no neighboring locations")
    blames = np.zeros(graph.num_edges, dtype=np.float64)
    fraud_edge = graph.fraud[graph.card_of_edge]
    blames[fraud_edge] = 1.0 / degrees[graph.card_of_edge[fraud_edge]]
    return blames


def update_poc_probabilities(
    blames: np.ndarray,
    graph: BipartiteGraph,
    prior: PriorParams,
) -> np.ndarray:
    """Posterior mean theta_j = (z_j + alpha) / (|N_j| + alpha + beta)."""
    z = segment_sums(blames[graph.loc_edge_perm], graph.loc_indptr)
    denom = graph.location_degrees() + prior.alpha + prior.beta
    return (z + prior.alpha) / denom


def blame_totals(blames: np.ndarray, graph: BipartiteGraph) -> np.ndarray:
    """Total blame z_j collected by each location."""
    return segment_sums(blames[graph.loc_edge_perm], graph.loc_indptr)


def update_blames(theta: np.ndarray, graph: BipartiteGraph) -> np.ndarray:
    """Blame proportional to theta among each fraud-card's neighbors."""
    edge_theta = theta[graph.card_indices]
    sums = segment_sums(edge_theta, graph.card_indptr)
    blames = np.zeros(graph.num_edges, dtype=np.float64)
    fraud_edge = graph.fraud[graph.card_of_edge]
    blames[fraud_edge] = (edge_theta[fraud_edge]
                          / sums[graph.card_of_edge[fraud_edge]])
    return blames


def run(graph: BipartiteGraph, prior: PriorParams = PriorParams()
        ) -> DetectionResult:
    """Alternate the two updates from uniform blames until the l1 change
    in theta falls below epsilon, or max_iterations is hit (the last
    iterate is returned with ``converged=False`` in that case)."""
    blames = init_uniform_blames(graph)
    theta = update_poc_probabilities(blames, graph, prior)
    residuals: list[float] = []
    converged = False
    iterations = 0
    for _ in range(prior.max_iterations):
        blames = update_blames(theta, graph)
        theta_prev = theta
        theta = update_poc_probabilities(blames, graph, prior)
        iterations += 1
        residual = float(np.abs(theta - theta_prev).sum())
        residuals.append(residual)
        if residual < prior.epsilon:
            converged = True
            break
    return DetectionResult(theta=theta, blames=blames, residuals=residuals,
                           converged=converged, iterations=iterations)


def ranked_locations(theta: np.ndarray) -> list[tuple[int, float]]:
    """Locations sorted by score descending, index ascending on ties."""
    order = np.lexsort((np.arange(len(theta)), -np.asarray(theta)))
    return [(int(j), float(theta[j])) for j in order]
