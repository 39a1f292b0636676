import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from echo_pathways import metrics
from echo_pathways.graph import FollowGraph


# ---------------------------------------------------------------------------
# brute-force oracles
# ---------------------------------------------------------------------------

def brute_histogram(values, edges):
    counts = np.zeros(len(edges) - 1, dtype=int)
    for d in values:
        for k in range(len(edges) - 1):
            last = k == len(edges) - 2
            if edges[k] <= d < edges[k + 1] or (last and d == edges[k + 1]):
                counts[k] += 1
                break
    return counts / counts.sum()


def brute_all_pairs(opinions):
    return [abs(a - b) for a, b in itertools.combinations(opinions, 2)]


def brute_triads(graph: FollowGraph) -> int:
    n = graph.n
    count = 0
    for a in range(n):
        for b in range(n):
            for c in range(n):
                if a != b and a != c and b != c:
                    if graph.adj[a, b] and graph.adj[a, c] and graph.adj[b, c]:
                        count += 1
    return count


# ---------------------------------------------------------------------------
# homophily
# ---------------------------------------------------------------------------

class TestHomophily:
    def test_perfect_homophily(self):
        g = FollowGraph.from_out_edges([[1], [0]])
        rho, i_h = metrics.homophily(g, np.array([0.1, 0.2]), 0.45, baseline=0.4)
        assert rho == 1.0 and i_h == 1.0

    def test_baseline_zero_point(self):
        g = FollowGraph.from_out_edges([[1, 2], [0], [0]])
        x = np.array([0.0, 0.1, 0.9])
        # shares: agent 0 -> 1/2, agent 1 -> 1, agent 2 -> 0; rho = 1/2
        rho, i_h = metrics.homophily(g, x, 0.45, baseline=0.5)
        assert rho == pytest.approx(0.5)
        assert i_h == 0.0

    def test_below_baseline_clamps(self):
        g = FollowGraph.from_out_edges([[1], [0]])
        _, i_h = metrics.homophily(g, np.array([-1.0, 1.0]), 0.45, baseline=0.4)
        assert i_h == 0.0

    def test_zero_degree_agents_excluded(self):
        g = FollowGraph.from_out_edges([[1], [0], []])
        rho, _ = metrics.homophily(g, np.array([0.0, 0.1, 5e-1]), 0.45, 0.4)
        assert rho == 1.0
        with pytest.raises(ValueError):
            metrics.homophily(FollowGraph.from_out_edges([[], []]),
                              np.array([0.0, 0.1]), 0.45, 0.4)


class TestBaseline:
    def test_paper_formula(self):
        assert metrics.baseline_rho(0.45, "paper") == pytest.approx(0.4246875, abs=1e-12)

    def test_monte_carlo_full_range(self):
        assert metrics.baseline_rho(2.0, "monte_carlo") == 1.0

    def test_monte_carlo_golden_value(self):
        # frozen from the documented default stream (seed 181818), 10^6 pairs
        assert metrics.baseline_rho(0.45, "monte_carlo") == 0.398808

    def test_monte_carlo_error_bar(self):
        est, se = metrics.monte_carlo_baseline(0.45, np.random.default_rng(5))
        assert se < 1e-3
        others = [
            metrics.monte_carlo_baseline(0.45, np.random.default_rng(s))[0]
            for s in range(6)
        ]
        for other in others:
            assert abs(other - est) < 3 * se * 2  # both estimates carry se

    def test_monte_carlo_tracks_direct_derivation(self):
        # the empirical probability matches eps - eps^2/4, not the paper form
        est, se = metrics.monte_carlo_baseline(0.45, np.random.default_rng(11))
        assert abs(est - (0.45 - 0.45**2 / 4)) < 4 * se


# ---------------------------------------------------------------------------
# histograms and divergence
# ---------------------------------------------------------------------------

class TestDistanceHistogram:
    def test_single_pair_extreme(self):
        h = metrics.distance_histogram(np.array([-1.0, 1.0]), "all_pairs", 40)
        assert h.mass[-1] == 1.0 and h.mass[:-1].sum() == 0.0

    def test_all_equal(self):
        h = metrics.distance_histogram(np.zeros(5), "all_pairs", 40)
        assert h.mass[0] == 1.0

    def test_two_cluster_enumeration(self):
        h = metrics.distance_histogram(np.array([-1.0, -1, 1, 1]), "all_pairs", 40)
        assert h.mass[0] == pytest.approx(1 / 3)
        assert h.mass[-1] == pytest.approx(2 / 3)

    def test_matches_brute_force_on_random_samples(self):
        rng = np.random.default_rng(17)
        for trial in range(20):
            x = rng.uniform(-1, 1, rng.integers(3, 40))
            bins = int(rng.integers(2, 20))
            h = metrics.distance_histogram(x, "all_pairs", bins)
            expected = brute_histogram(brute_all_pairs(x), h.bin_edges)
            assert np.allclose(h.mass, expected, atol=1e-12)

    def test_edge_source_uses_directed_edges(self):
        g = FollowGraph.from_out_edges([[1], [0], [0]])
        x = np.array([0.0, 1.0, 0.5])
        h = metrics.distance_histogram(x, "edges", 4, graph=g)
        expected = brute_histogram([1.0, 1.0, 0.5], h.bin_edges)
        assert np.allclose(h.mass, expected)

    def test_empty_pair_sources_error(self):
        with pytest.raises(ValueError):
            metrics.distance_histogram(np.array([0.5]), "all_pairs", 10)
        with pytest.raises(ValueError):
            metrics.distance_histogram(
                np.array([0.5, 0.1]), "edges", 10,
                graph=FollowGraph.from_out_edges([[], []]),
            )


class TestReferences:
    def test_first_bin_mass_by_quadrature(self):
        refs = metrics.reference_distributions(40)
        oracle, _ = quad(lambda d: (2 - d) / 2, 0, 0.05)
        assert refs.random.mass[0] == pytest.approx(oracle, abs=1e-12)
        assert round(float(refs.random.mass[0]), 4) == 0.0494

    def test_every_bin_matches_quadrature(self):
        refs = metrics.reference_distributions(17)
        edges = refs.random.bin_edges
        for k in range(17):
            oracle, _ = quad(lambda d: (2 - d) / 2, edges[k], edges[k + 1])
            assert refs.random.mass[k] == pytest.approx(oracle, abs=1e-10)

    def test_clustered_masses(self):
        refs = metrics.reference_distributions(40)
        assert refs.clustered_objective.mass[0] == 0.5
        assert refs.clustered_objective.mass[-1] == 0.5
        assert refs.clustered_subjective.mass[0] == 1.0

    def test_monte_carlo_sampling_matches_triangular(self):
        rng = np.random.default_rng(3)
        u = rng.uniform(-1, 1, 1_000_000)
        v = rng.uniform(-1, 1, 1_000_000)
        counts, _ = np.histogram(np.abs(u - v), bins=np.linspace(0, 2, 41))
        refs = metrics.reference_distributions(40)
        tv = 0.5 * np.abs(counts / counts.sum() - refs.random.mass).sum()
        assert tv < 0.01


class TestJsDivergence:
    def _hist(self, mass):
        mass = np.asarray(mass, dtype=np.float64)
        edges = np.linspace(0, 2, len(mass) + 1)
        return metrics.DistanceHistogram(edges, mass)

    def test_identity(self):
        p = self._hist([0.25, 0.25, 0.5])
        assert metrics.js_divergence(p, p) == 0.0

    def test_disjoint_supports_reach_ln2(self):
        p = self._hist([1.0, 0.0])
        q = self._hist([0.0, 1.0])
        assert metrics.js_divergence(p, q) == pytest.approx(math.log(2), abs=1e-12)

    def test_hand_value(self):
        p = self._hist([0.5, 0.5])
        q = self._hist([1.0, 0.0])
        expected = 0.5 * (0.5 * math.log(2 / 3) + 0.5 * math.log(2)) \
            + 0.5 * math.log(4 / 3)
        assert metrics.js_divergence(p, q) == pytest.approx(expected, abs=1e-12)
        assert metrics.js_divergence(p, q) == pytest.approx(0.21576, abs=5e-6)

    def test_mismatched_bins_error(self):
        with pytest.raises(ValueError):
            metrics.js_divergence(self._hist([1.0, 0.0]), self._hist([0.5, 0.25, 0.25]))

    @given(st.lists(st.floats(0.01, 1), min_size=4, max_size=4),
           st.lists(st.floats(0.01, 1), min_size=4, max_size=4))
    @settings(max_examples=60, deadline=None)
    def test_symmetric_bounded_nonnegative(self, raw_p, raw_q):
        p = self._hist(np.array(raw_p) / np.sum(raw_p))
        q = self._hist(np.array(raw_q) / np.sum(raw_q))
        d_pq = metrics.js_divergence(p, q)
        d_qp = metrics.js_divergence(q, p)
        assert d_pq == pytest.approx(d_qp, abs=1e-12)
        assert -1e-15 <= d_pq <= math.log(2) + 1e-12


class TestPolarizationIndices:
    def test_normalization_points(self):
        refs = metrics.reference_distributions(40)
        i_p, i_s = metrics.polarization_indices(
            refs.clustered_objective, refs.clustered_subjective, refs
        )
        assert i_p == 1.0 and i_s == 1.0
        i_p, i_s = metrics.polarization_indices(refs.random, refs.random, refs)
        assert i_p == 0.0 and i_s == 0.0


# ---------------------------------------------------------------------------
# trajectory metrics
# ---------------------------------------------------------------------------

class TestPathwayIndex:
    def test_unit_area(self):
        traj = [(0.0, 1.0), (0.5, 1.0), (1.0, 1.0)]
        assert metrics.pathway_index(traj) == pytest.approx(1.0)

    def test_zero_homophily(self):
        traj = [(0.0, 0.0), (1.0, 0.0)]
        assert metrics.pathway_index(traj) == 0.0

    def test_diagonal_triangle(self):
        traj = [(0.0, 0.0), (1.0, 1.0)]
        assert metrics.pathway_index(traj) == pytest.approx(0.5)

    def test_collinear_resampling_invariance(self):
        traj = [(0.0, 0.2), (0.6, 0.8), (1.0, 0.1)]
        dense = [(0.0, 0.2), (0.3, 0.5), (0.6, 0.8), (0.8, 0.45), (1.0, 0.1)]
        assert abs(metrics.pathway_index(traj) - metrics.pathway_index(dense)) < 1e-12

    def test_backtracking_contributes_signed(self):
        out_and_back = [(0.0, 1.0), (1.0, 1.0), (0.0, 1.0)]
        assert metrics.pathway_index(out_and_back) == pytest.approx(0.0)


class TestTrajectoryIndex:
    def test_monotone_is_one(self):
        assert metrics.trajectory_index([0.0, 0.2, 0.5, 0.9], 3) == pytest.approx(1.0)

    def test_oscillation(self):
        assert metrics.trajectory_index([0.0, 1.0, 0.5], 2) == pytest.approx(3.0)

    def test_constant_is_undefined(self):
        assert metrics.trajectory_index([0.4, 0.4, 0.4], 2) is None

    @given(st.lists(st.floats(-1, 1), min_size=3, max_size=12))
    @settings(max_examples=80, deadline=None)
    def test_at_least_one_when_rising(self, series):
        t = len(series) - 1
        if series[t] - series[0] > 1e-6:
            assert metrics.trajectory_index(series, t) >= 1.0 - 1e-9


class TestActivityTime:
    def test_threshold_from_final_value(self):
        assert metrics.activity_time([0.1, 0.5, 0.76, 0.8], 3) == 3

    def test_early_crossing(self):
        assert metrics.activity_time([0.2, 0.8, 0.8, 0.8], 3) == 1

    def test_never_crossing_falls_back_to_final(self):
        assert metrics.activity_time([0.1, 0.2, 0.1, 0.0], 3) == 3


class TestAucAndRewiring:
    def test_flat_unit(self):
        assert metrics.auc_subjective(np.ones(11), 10) == pytest.approx(1.0)

    def test_ramp(self):
        assert metrics.auc_subjective(np.linspace(0, 1, 11), 10) == pytest.approx(0.5)

    def test_zero(self):
        assert metrics.auc_subjective(np.zeros(11), 10) == 0.0

    def test_rewiring_stats(self):
        assert metrics.rewiring_stats([10, 20, 30], 100) == (3, pytest.approx(0.2))
        assert metrics.rewiring_stats([], 50) == (0, None)
        assert metrics.rewiring_stats([100], 100) == (1, pytest.approx(1.0))

    def test_rewiring_after_activity_exceeds_one(self):
        count, mean = metrics.rewiring_stats([150], 100)
        assert count == 1 and mean == pytest.approx(1.5)


# ---------------------------------------------------------------------------
# structure
# ---------------------------------------------------------------------------

class TestClosedTriads:
    def test_single_pattern(self):
        g = FollowGraph.from_out_edges([[1, 2], [2], []])
        assert metrics.closed_triads(g) == 1

    def test_complete_digraph_three(self):
        g = FollowGraph.from_out_edges([[1, 2], [0, 2], [0, 1]])
        assert metrics.closed_triads(g) == brute_triads(g) == 6

    def test_directed_path_has_none(self):
        g = FollowGraph.from_out_edges([[1], [2], [3], []])
        assert metrics.closed_triads(g) == 0

    def test_brute_force_equality_on_random_small_digraphs(self):
        # acceptance: 10^3 random digraphs on <= 5 nodes
        rng = np.random.default_rng(23)
        for _ in range(1000):
            n = int(rng.integers(2, 6))
            adj = rng.random((n, n)) < rng.uniform(0.1, 0.9)
            np.fill_diagonal(adj, False)
            out_edges = [list(np.nonzero(adj[i])[0]) for i in range(n)]
            g = FollowGraph.from_out_edges(out_edges)
            assert metrics.closed_triads(g) == brute_triads(g)


class TestOpinionPeaks:
    def test_two_tight_clusters(self):
        x = np.concatenate([np.full(50, -0.8), np.full(50, 0.8)])
        x += np.random.default_rng(0).normal(0, 0.01, 100)
        assert metrics.opinion_peaks(x) == 2

    def test_all_equal(self):
        assert metrics.opinion_peaks(np.full(30, 0.3)) == 1

    def test_trimodal(self):
        assert metrics.opinion_peaks(np.repeat([-0.9, 0.0, 0.9], 40)) == 3


class TestCommunities:
    def _clique_edges(self, members):
        return {m: [o for o in members if o != m] for m in members}

    def test_two_disconnected_clusters(self):
        edges = {}
        edges.update(self._clique_edges(range(0, 8)))
        edges.update(self._clique_edges(range(8, 16)))
        g = FollowGraph.from_out_edges([edges[i] for i in range(16)])
        assert metrics.community_count(g) == 2

    def test_single_clique(self):
        g = FollowGraph.from_out_edges([[j for j in range(6) if j != i] for i in range(6)])
        assert metrics.community_count(g) == 1

    def test_two_cliques_one_bridge(self):
        edges = {}
        edges.update(self._clique_edges(range(0, 20)))
        edges.update(self._clique_edges(range(20, 40)))
        edges[0] = edges[0] + [20]
        g = FollowGraph.from_out_edges([edges[i] for i in range(40)])
        assert metrics.community_count(g) == 2


class TestRegime:
    def test_symmetric_is_balanced(self):
        d, label = metrics.regime(0.3, 0.3)
        assert d == 0.0 and label == "balanced"

    def test_rewiring_paramount(self):
        d, label = metrics.regime(0.01, 1.0)
        assert d == pytest.approx(2.0) and label == "rewiring-paramount"

    def test_hand_logarithm(self):
        d, label = metrics.regime(0.05, 0.025)
        assert d == pytest.approx(-0.30103, abs=1e-5) and label == "balanced"

    def test_cutpoints(self):
        assert metrics.regime(1.0, 10**0.5 * 1.0)[1] == "rewiring-dominant"   # D=0.5
        assert metrics.regime(10**0.5, 1.0)[1] == "influence-dominant"        # D=-0.5
        assert metrics.regime(1.0, 10**1.5)[1] == "rewiring-paramount"        # D=1.5
        assert metrics.regime(10**1.5, 1.0)[1] == "influence-paramount"       # D=-1.5
        assert metrics.regime(1.0, 10**0.49)[1] == "balanced"

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError):
            metrics.regime(0.0, 0.5)


class TestPathwaySummary:
    def test_classification_threshold(self):
        i_p = np.array([0.0, 0.5, 1.0])
        i_h_high = np.array([1.0, 1.0, 1.0])
        i_s = np.array([0.0, 0.5, 0.9])
        summary = metrics.pathway_summary(i_p, i_h_high, i_s, 2)
        assert summary.i_w == pytest.approx(1.0)
        assert summary.classification == "SbP"
        low = metrics.pathway_summary(i_p, np.zeros(3), i_s, 2)
        assert low.classification == "PbS"
