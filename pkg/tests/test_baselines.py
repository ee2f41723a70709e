import numpy as np
import pytest

from conftest import make_graph
from pocfinder import baselines, detector
from pocfinder.baselines import (DivergenceError, greedy_vertex_cover,
                                 linearized_bp_score, ratio_prior_score,
                                 ratio_score, safe_coupling)
from pocfinder.detector import PriorParams
from pocfinder.synth import random_bipartite_graph


def scores_by_index(ranked):
    return dict(ranked)


# --- ratio -------------------------------------------------------------------


def test_ratio_basic():
    # location 0: 3 fraud of 6; location 1: 0 fraud of 2
    g = make_graph([(i, 0) for i in range(6)] + [(6, 1), (7, 1)],
                   [True, True, True, False, False, False, False, False])
    scores = scores_by_index(ratio_score(g))
    assert scores[0] == pytest.approx(0.5)
    assert scores[1] == 0.0


def test_ratio_confidence_failure():
    # 200/600 scores below 3/6 even though it is far stronger evidence
    edges = [(i, 0) for i in range(600)] + [(600 + i, 1) for i in range(6)]
    fraud = [i < 200 for i in range(600)] + [True, True, True, False, False,
                                             False]
    g = make_graph(edges, fraud)
    scores = scores_by_index(ratio_score(g))
    assert scores[1] > scores[0]
    assert scores[0] == pytest.approx(200 / 600)


# --- ratio + prior --------------------------------------------------------------


def test_ratio_prior_basic():
    g = make_graph([(i, 0) for i in range(6)],
                   [True, True, True, False, False, False])
    scores = scores_by_index(ratio_prior_score(g, PriorParams(0.2, 15.0)))
    assert scores[0] == pytest.approx(3.2 / 21.2, abs=1e-12)


def test_ratio_prior_restores_confidence_ordering():
    edges = [(i, 0) for i in range(600)] + [(600 + i, 1) for i in range(6)]
    fraud = [i < 200 for i in range(600)] + [True, True, True, False, False,
                                             False]
    g = make_graph(edges, fraud)
    scores = scores_by_index(ratio_prior_score(g, PriorParams(0.2, 15.0)))
    assert scores[0] == pytest.approx(200.2 / 615.2, abs=1e-12)
    assert scores[0] > scores[1]


def test_ratio_prior_degenerates_to_ratio():
    g = random_bipartite_graph(40, 15, 200, 0.3, 0)
    tiny = PriorParams(alpha=1e-12, beta=1e-12)
    with_prior = scores_by_index(ratio_prior_score(g, tiny))
    plain = scores_by_index(ratio_score(g))
    for j in plain:
        assert with_prior[j] == pytest.approx(plain[j], abs=1e-9)


def test_ratio_prior_equals_theta_on_single_neighbor_fraud_cards():
    # every fraud-card has exactly one neighbor: blames are forced to 1
    edges = [(0, 0), (1, 0), (2, 1), (3, 0), (3, 1), (4, 1)]
    fraud = [True, True, True, False, False, False]
    g = make_graph(edges, fraud)
    prior = PriorParams(epsilon=1e-12)
    result = detector.run(g, prior)
    scores = scores_by_index(ratio_prior_score(g, prior))
    for j in range(g.num_locations):
        assert result.theta[j] == pytest.approx(scores[j], abs=1e-12)


# --- greedy vertex cover ----------------------------------------------------------


def test_cover_forced_choice():
    g = make_graph([(0, 0), (1, 0), (2, 1)], [True, True, False])
    ranked = greedy_vertex_cover(g)
    assert ranked[0] == (0, 2.0)
    assert scores_by_index(ranked)[1] == 0.0


def test_cover_star_example():
    # j0 covers {c0,c1,c2}; j1 covers {c2,c3}
    g = make_graph([(0, 0), (1, 0), (2, 0), (2, 1), (3, 1)], [True] * 4)
    ranked = greedy_vertex_cover(g)
    assert ranked[:2] == [(0, 3.0), (1, 1.0)]


def test_cover_tie_break_lower_index():
    g = make_graph([(0, 0), (1, 0), (2, 1), (3, 1)], [True] * 4)
    ranked = greedy_vertex_cover(g)
    assert [j for j, _ in ranked[:2]] == [0, 1]


def test_cover_is_valid_cover():
    for seed in range(8):
        g = random_bipartite_graph(60, 20, 300, 0.3, seed)
        ranked = greedy_vertex_cover(g)
        selected = {j for j, s in ranked if s > 0}
        for i in np.flatnonzero(g.fraud):
            neighbors = g.card_indices[g.card_indptr[i]:g.card_indptr[i + 1]]
            assert selected.intersection(neighbors.tolist())


def test_cover_ranks_every_location_once():
    g = random_bipartite_graph(60, 20, 300, 0.3, 1)
    ranked = greedy_vertex_cover(g)
    assert sorted(j for j, _ in ranked) == list(range(g.num_locations))


# --- linearized belief propagation ---------------------------------------------------


def test_fabp_small_coupling_matches_first_order():
    g = random_bipartite_graph(50, 18, 250, 0.3, 2)
    ranked = linearized_bp_score(g, homophily=1e-6)
    fraud_counts = g.fraud_neighbor_counts()
    degrees = g.location_degrees()
    first_order = 0.5 * fraud_counts - 0.1 * (degrees - fraud_counts)
    # ranking must be consistent with the first-order score (ties may
    # be broken by higher-order terms)
    ordered = [first_order[j] for j, _ in ranked]
    assert all(a >= b - 1e-9 for a, b in zip(ordered, ordered[1:]))


def test_fabp_worked_example_ordering(worked_graph):
    ranked = linearized_bp_score(worked_graph, homophily=0.05)
    assert ranked[0][0] == 0  # the doubly-blamed location wins


def test_fabp_no_fraud_cards_defined():
    g = random_bipartite_graph(30, 10, 100, 0.0, 3)
    ranked = linearized_bp_score(g, homophily=0.01)
    assert len(ranked) == g.num_locations
    assert all(score <= 0 for _, score in ranked)


def test_fabp_matches_dense_solve(worked_graph):
    g = worked_graph
    c = 0.05
    n = g.num_cards + g.num_locations
    A = np.zeros((n, n))
    for i in range(g.num_cards):
        for e in range(g.card_indptr[i], g.card_indptr[i + 1]):
            j = g.num_cards + int(g.card_indices[e])
            A[i, j] = A[j, i] = 1.0
    D = np.diag(A.sum(axis=1))
    phi = np.concatenate([np.where(g.fraud, 0.5, -0.1),
                          np.zeros(g.num_locations)])
    b = np.linalg.solve(np.eye(n) - c * A + c * c * D, phi)
    ranked = linearized_bp_score(g, homophily=c)
    for j, score in ranked:
        assert score == pytest.approx(b[g.num_cards + j], abs=1e-7)


def test_fabp_divergence_guard():
    g = random_bipartite_graph(200, 40, 3000, 0.3, 4)
    with pytest.raises(DivergenceError):
        linearized_bp_score(g, homophily=0.9)


def test_fabp_homophily_validation():
    g = make_graph([(0, 0)], [True])
    for bad in (0.0, 1.0, -0.1, 2.0):
        with pytest.raises(ValueError):
            linearized_bp_score(g, homophily=bad)


def test_safe_coupling_converges():
    for seed in range(4):
        g = random_bipartite_graph(100, 30, 1500, 0.2, seed)
        c = safe_coupling(g)
        dmax = max(int(g.card_degrees().max()), int(g.location_degrees().max()))
        assert c * dmax + c * c * dmax < 1
        linearized_bp_score(g, homophily=c)  # must not raise
