"""Indices over states, series, and event logs.

Everything here is a pure function of its inputs. The per-step indices are:

* rho / homophily index: share of follow edges whose endpoints hold opinions
  within the confidence boundary, normalized against the random-graph
  baseline.
* objective / subjective polarization: Jensen-Shannon divergence of the
  opinion-distance histogram (all pairs / connected pairs) from a random
  reference, normalized by the divergence of a fully clustered reference.

Trajectory-level quantities (pathway index, trajectory index, activity time,
AUC) summarize whole runs; the structural measures (closed triads, community
count, opinion peaks) describe final states.
"""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
import numpy as np
from scipy.stats import gaussian_kde

from .config import PATHWAY_SPLIT
from .graph import FollowGraph

DEFAULT_BINS = 40

REGIME_LABELS = (
    "rewiring-paramount",
    "rewiring-dominant",
    "balanced",
    "influence-dominant",
    "influence-paramount",
)


# ---------------------------------------------------------------------------
# distance histograms and divergences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DistanceHistogram:
    """Normalized histogram of opinion distances on [0, 2]."""

    bin_edges: np.ndarray  # B+1 edges
    mass: np.ndarray       # B probabilities

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=np.float64)
        mass = np.asarray(self.mass, dtype=np.float64)
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "mass", mass)
        if len(edges) != len(mass) + 1:
            raise ValueError("need B+1 edges for B masses")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if np.any(mass < 0) or abs(float(mass.sum()) - 1.0) > 1e-12:
            raise ValueError("histogram mass must be nonnegative and sum to 1")


def _counts_below(sorted_values: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """#values strictly below each threshold, for a sorted 1-d array."""
    return np.searchsorted(sorted_values, thresholds, side="left")


def _pair_counts_below(sorted_x: np.ndarray, threshold: float) -> int:
    """#unordered pairs (i < j) with x_j - x_i < threshold, x sorted ascending.

    Avoids materializing the n^2/2 distances: for each j, the qualifying i
    are a suffix of [0, j).
    """
    idx = np.searchsorted(sorted_x, sorted_x - threshold, side="right")
    return int(np.maximum(0, np.arange(len(sorted_x)) - idx).sum())


def distance_histogram(
    opinions: np.ndarray,
    pair_source: str = "all_pairs",
    bins: int = DEFAULT_BINS,
    graph: FollowGraph | None = None,
) -> DistanceHistogram:
    """Histogram of |x_i - x_j| over all unordered distinct pairs
    (``all_pairs``) or over directed follow edges (``edges``)."""
    x = np.asarray(opinions, dtype=np.float64)
    edges = np.linspace(0.0, 2.0, bins + 1)
    if pair_source == "all_pairs":
        if len(x) < 2:
            raise ValueError("need at least 2 agents for the all-pairs histogram")
        xs = np.sort(x)
        cum = np.array([_pair_counts_below(xs, e) for e in edges], dtype=np.int64)
        total = len(x) * (len(x) - 1) // 2
    elif pair_source == "edges":
        if graph is None:
            raise ValueError("pair_source='edges' requires a graph")
        if len(graph.targets) == 0:
            raise ValueError("need at least 1 edge for the subjective histogram")
        rows = np.repeat(np.arange(graph.n), graph.degrees)
        d = np.sort(np.abs(x[rows] - x[graph.targets]))
        cum = _counts_below(d, edges).astype(np.int64)
        total = len(d)
    else:
        raise ValueError(f"unknown pair_source {pair_source!r}")
    counts = np.diff(cum)
    counts[-1] = total - cum[-2]  # top bin is closed: includes d == 2
    return DistanceHistogram(edges, counts / total)


@dataclass(frozen=True)
class ReferenceSet:
    """Reference histograms for the polarization indices."""

    random: DistanceHistogram          # |u - v| for independent uniforms
    clustered_objective: DistanceHistogram  # equal bipolar clusters
    clustered_subjective: DistanceHistogram  # within-cluster edges only


def reference_distributions(bins: int = DEFAULT_BINS) -> ReferenceSet:
    """Analytic references: the triangular density (2-d)/2 integrated per
    bin, and the asymptotic two-equal-clusters distribution (half the pairs
    at distance 0, half at distance 2; all connected pairs at distance 0)."""
    if bins < 2:
        raise ValueError("need at least 2 bins")
    edges = np.linspace(0.0, 2.0, bins + 1)
    cdf = edges - edges**2 / 4.0  # P(|u - v| <= d) for u, v ~ U[-1, 1]
    f_r = DistanceHistogram(edges, np.diff(cdf))
    clustered = np.zeros(bins)
    clustered[0] = 0.5
    clustered[-1] = 0.5
    f_c_obj = DistanceHistogram(edges, clustered)
    within = np.zeros(bins)
    within[0] = 1.0
    f_c_subj = DistanceHistogram(edges, within)
    return ReferenceSet(f_r, f_c_obj, f_c_subj)


def js_divergence(p: DistanceHistogram, q: DistanceHistogram) -> float:
    """Jensen-Shannon divergence (natural log); bounded by ln 2."""
    if not np.array_equal(p.bin_edges, q.bin_edges):
        raise ValueError("histograms have mismatched bin edges")
    pm, qm = p.mass, q.mass
    m = 0.5 * (pm + qm)
    kl_p = np.where(pm > 0, pm * np.log(np.where(pm > 0, pm / np.where(m > 0, m, 1.0), 1.0)), 0.0)
    kl_q = np.where(qm > 0, qm * np.log(np.where(qm > 0, qm / np.where(m > 0, m, 1.0), 1.0)), 0.0)
    return float(0.5 * kl_p.sum() + 0.5 * kl_q.sum())


def polarization_indices(
    f_obj: DistanceHistogram, f_subj: DistanceHistogram, refs: ReferenceSet
) -> tuple[float, float]:
    """(objective, subjective) polarization: JS divergence from the random
    reference, normalized by the clustered reference's divergence."""
    denom_obj = js_divergence(refs.clustered_objective, refs.random)
    denom_subj = js_divergence(refs.clustered_subjective, refs.random)
    if denom_obj <= 0 or denom_subj <= 0:
        raise ValueError("degenerate reference distributions")
    i_p = js_divergence(f_obj, refs.random) / denom_obj
    i_s = js_divergence(f_subj, refs.random) / denom_subj
    return i_p, i_s


# ---------------------------------------------------------------------------
# homophily
# ---------------------------------------------------------------------------

def homophily(
    graph: FollowGraph, opinions: np.ndarray, epsilon: float, baseline: float
) -> tuple[float, float]:
    """(rho, homophily index): rho is the mean over agents of the concordant
    share of their followees; the index rescales rho so the random baseline
    maps to 0 and full concordance to 1, clamped at 0."""
    if not 0 <= baseline < 1:
        raise ValueError(f"baseline must be in [0, 1), got {baseline}")
    x = np.asarray(opinions, dtype=np.float64)
    deg = graph.degrees
    if not np.any(deg > 0):
        raise ValueError("homophily is undefined on a graph with no edges")
    rows = np.repeat(np.arange(graph.n), deg)
    conc = (np.abs(x[rows] - x[graph.targets]) < epsilon).astype(np.float64)
    sums = np.zeros(graph.n)
    np.add.at(sums, rows, conc)
    nonzero = deg > 0
    rho = float(np.mean(sums[nonzero] / deg[nonzero]))
    i_h = max(0.0, (rho - baseline) / (1.0 - baseline))
    return rho, i_h


def monte_carlo_baseline(
    epsilon: float, rng: np.random.Generator, samples: int = 1_000_000
) -> tuple[float, float]:
    """Empirical P(|u - v| < epsilon) for independent uniforms on [-1, 1],
    with its standard error."""
    u = rng.uniform(-1.0, 1.0, samples)
    v = rng.uniform(-1.0, 1.0, samples)
    hits = np.abs(u - v) < epsilon
    est = float(hits.mean())
    se = float(np.sqrt(est * (1.0 - est) / samples))
    return est, se


def baseline_rho(
    epsilon: float, mode: str = "paper", rng: np.random.Generator | None = None
) -> float:
    """Expected concordant-edge share of a freshly randomized scenario.

    ``paper`` uses the closed form eps - eps^2/8; ``monte_carlo`` estimates
    P(|u - v| < eps) directly from 10^6 uniform pairs. The two disagree (the
    direct derivation gives eps - eps^2/4); both are kept so either
    convention can be reproduced.
    """
    if not 0 < epsilon <= 2:
        raise ValueError(f"epsilon must be in (0, 2], got {epsilon}")
    if mode == "paper":
        return epsilon - epsilon**2 / 8.0
    if mode == "monte_carlo":
        if rng is None:
            rng = np.random.default_rng(181818)
        est, _ = monte_carlo_baseline(epsilon, rng)
        return est
    raise ValueError(f"unknown baseline mode {mode!r}")


# ---------------------------------------------------------------------------
# trajectory summaries
# ---------------------------------------------------------------------------

def pathway_index(traj) -> float:
    """Signed area under the trajectory on the (polarization, homophily)
    plane: sum of mean-height times polarization increment per segment."""
    pts = np.asarray(traj, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError("need a sequence of at least 2 (I_p, I_h) points")
    ip, ih = pts[:, 0], pts[:, 1]
    return float(np.sum(0.5 * (ih[1:] + ih[:-1]) * np.diff(ip)))


TRAJECTORY_NET_CHANGE_FLOOR = 1e-9


def trajectory_index(f, t: int) -> float | None:
    """Total variation of f over [0, t] divided by its net change; equals 1
    for monotone series, larger when the series oscillates. Returns None
    (undefined) when the net change is below the guard floor."""
    series = np.asarray(f, dtype=np.float64)
    if t < 1 or t >= len(series):
        raise ValueError(f"t must be in [1, len(f)-1], got {t}")
    tv = float(np.abs(np.diff(series[: t + 1])).sum())
    net = float(series[t] - series[0])
    if abs(net) < TRAJECTORY_NET_CHANGE_FLOOR:
        return None
    return tv / net


def activity_time(i_s_series, final_step: int) -> int:
    """Earliest step at which the subjective polarization index reaches
    max(0.98 * final value, 0.75); the final step if it never does."""
    series = np.asarray(i_s_series, dtype=np.float64)
    if len(series) != final_step + 1:
        raise ValueError("series must have final_step + 1 entries")
    threshold = max(0.98 * float(series[final_step]), 0.75)
    hits = np.nonzero(series >= threshold)[0]
    return int(hits[0]) if len(hits) else final_step


def auc_subjective(i_s_series, t_a: int) -> float:
    """Time-normalized trapezoidal integral of the subjective polarization
    index over [0, t_a]; near 1 when local clustering completes early."""
    series = np.asarray(i_s_series, dtype=np.float64)
    if t_a < 1 or t_a >= len(series):
        raise ValueError(f"t_a must be in [1, len(series)-1], got {t_a}")
    return float(np.trapezoid(series[: t_a + 1])) / t_a


def rewiring_stats(events, t_a: int) -> tuple[int, float | None]:
    """(count, mean step / t_a) over rewiring events; events after t_a keep
    normalized times > 1. Mean is None when there were no events."""
    if t_a < 1:
        raise ValueError(f"t_a must be >= 1, got {t_a}")
    steps = np.array([getattr(e, "step", e) for e in events], dtype=np.float64)
    if len(steps) == 0:
        return 0, None
    return len(steps), float(np.mean(steps / t_a))


# ---------------------------------------------------------------------------
# structure
# ---------------------------------------------------------------------------

def closed_triads(graph: FollowGraph) -> int:
    """Ordered triples (a, b, c) of distinct agents with a->b, a->c, b->c.

    sum over edges (b, c) of the common-follower count of b and c; the
    float32 matmul is exact for counts this small.
    """
    f = graph.adj.astype(np.float32)
    common_followers = f.T @ f
    return int(round(float((common_followers * f).sum(dtype=np.float64))))


def community_count(graph: FollowGraph) -> int:
    """Number of communities from greedy modularity maximization on the
    undirected projection (reciprocal follow pairs weigh 2)."""
    g = nx.Graph()
    g.add_nodes_from(range(graph.n))
    for u, v in graph.edge_list():
        a, b = (u, v) if u < v else (v, u)
        if g.has_edge(a, b):
            g[a][b]["weight"] += 1
        else:
            g.add_edge(a, b, weight=1)
    if g.number_of_edges() == 0:
        return graph.n
    communities = nx.community.greedy_modularity_communities(g, weight="weight")
    return len(communities)


PEAK_GRID_POINTS = 201
PEAK_PROMINENCE_FRACTION = 0.10


def opinion_peaks(final_opinions) -> int:
    """Modes of the final opinion distribution: local maxima of a Gaussian
    KDE (Silverman bandwidth) on a 201-point grid over [-1, 1], ignoring
    maxima below 10% of the tallest.

    The bandwidth is floored at the grid spacing: converged runs have
    sub-tolerance spreads whose unfloored kernels fall between grid points
    and evaluate to numerical noise.
    """
    x = np.asarray(final_opinions, dtype=np.float64)
    if len(x) < 2:
        raise ValueError("need at least 2 agents")
    sd = float(np.std(x, ddof=1))
    if sd == 0.0:
        return 1
    grid = np.linspace(-1.0, 1.0, PEAK_GRID_POINTS)
    spacing = float(grid[1] - grid[0])
    kde = gaussian_kde(x, bw_method="silverman")
    if float(np.sqrt(kde.covariance[0, 0])) < spacing:
        kde = gaussian_kde(x, bw_method=spacing / sd)
    density = kde(grid)
    floor = PEAK_PROMINENCE_FRACTION * float(density.max())
    left = np.empty_like(density)
    right = np.empty_like(density)
    left[0], left[1:] = -np.inf, density[:-1]
    right[-1], right[:-1] = -np.inf, density[1:]
    is_peak = (density >= left) & (density >= right) & ((density > left) | (density > right))
    return int(np.count_nonzero(is_peak & (density >= floor)))


def regime(alpha: float, q: float) -> tuple[float, str]:
    """Balance measure D = log10(q) - log10(alpha) and its regime label."""
    if alpha <= 0 or q <= 0:
        raise ValueError("alpha and q must be positive")
    d = float(np.log10(q) - np.log10(alpha))
    if d >= 1.5:
        label = "rewiring-paramount"
    elif d >= 0.5:
        label = "rewiring-dominant"
    elif d > -0.5:
        label = "balanced"
    elif d > -1.5:
        label = "influence-dominant"
    else:
        label = "influence-paramount"
    return d, label


@dataclass(frozen=True)
class PathwaySummary:
    """How a run reached its final state, condensed."""

    i_w: float
    t_a: int
    classification: str          # "SbP" iff i_w >= the 0.6 split
    i_p_trajectory: float | None  # oscillation of the objective index up to t_a
    i_h_trajectory: float | None

    def __post_init__(self):
        expected = "SbP" if self.i_w >= PATHWAY_SPLIT else "PbS"
        if self.classification != expected:
            raise ValueError("classification inconsistent with the pathway index")


def pathway_summary(i_p, i_h, i_s, final_step: int) -> PathwaySummary:
    """Pathway index, activity time, and trajectory indices of one run."""
    i_p = np.asarray(i_p, dtype=np.float64)
    i_h = np.asarray(i_h, dtype=np.float64)
    t_a = activity_time(i_s, final_step)
    t_eff = max(t_a, 1)  # t_a = 0 only for runs born past the threshold
    i_w = pathway_index(np.column_stack([i_p, i_h]))
    return PathwaySummary(
        i_w=i_w,
        t_a=t_a,
        classification="SbP" if i_w >= PATHWAY_SPLIT else "PbS",
        i_p_trajectory=trajectory_index(i_p, t_eff),
        i_h_trajectory=trajectory_index(i_h, t_eff),
    )


# ---------------------------------------------------------------------------
# per-step convenience
# ---------------------------------------------------------------------------

def step_indices(
    opinions: np.ndarray,
    graph: FollowGraph,
    epsilon: float,
    baseline: float,
    refs: ReferenceSet,
    bins: int = DEFAULT_BINS,
) -> tuple[float, float, float, float]:
    """(rho, I_h, I_p, I_s) of one state, via the individual metrics."""
    rho, i_h = homophily(graph, opinions, epsilon, baseline)
    f_obj = distance_histogram(opinions, "all_pairs", bins)
    f_subj = distance_histogram(opinions, "edges", bins, graph=graph)
    i_p, i_s = polarization_indices(f_obj, f_subj, refs)
    return rho, i_h, i_p, i_s
