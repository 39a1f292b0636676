"""The three curation strategies behind a single slate interface.

All strategies share one eligibility rule: a post can be recommended to an
agent only if its origin author is neither the agent nor one of the agent's
current followees. Slates hold at most ``k_R`` posts.

Selection is deterministic given the run seed. Ties are broken with the
agent's per-step substream:

* random: Fisher-Yates prefix of the eligible pool (uniform sample without
  replacement).
* opinion: posts ranked by |post opinion - agent opinion| over a window of
  the last ``k_h`` delivery steps; exact distance ties competing for the
  last slots are filled by a uniform draw among the tied posts.
* structure: non-followed candidates ranked by shared-followee count;
  within an equal-score group candidates are visited in uniformly random
  order, each contributing its most recent authored posts until the slate
  fills.

The compiled step kernel re-implements these routines on flat arrays; the
two are held bit-identical by the engine-equivalence tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import FollowGraph
from .posts import Post, StepPosts
from .rng import Substream


@dataclass(frozen=True)
class StateView:
    """Read-only view of the simulation state a recommender may consult."""

    step: int
    opinions: np.ndarray
    graph: FollowGraph
    buffers: tuple[StepPosts, ...]  # ascending delivered_at, newest == step
    k_h: int = 0


@dataclass(frozen=True)
class Slate:
    agent: int
    posts: tuple[Post, ...]


def _eligible(state: StateView, agent: int, origin: int) -> bool:
    return origin != agent and not state.graph.adj[agent, origin]


def recommendable_pool(state: StateView, agent: int, window: int) -> list[Post]:
    """Eligible posts delivered within the last ``window`` steps (0 means the
    current delivery only), ordered by (delivered_at, carrier)."""
    if window < 0:
        raise ValueError("window must be >= 0")
    lo = state.step - window
    pool: list[Post] = []
    for buf in state.buffers:
        if buf.delivered_at < lo or buf.delivered_at > state.step:
            continue
        for carrier in range(len(buf)):
            if _eligible(state, agent, int(buf.origin[carrier])):
                pool.append(buf.post(carrier))
    return pool


def recommend_random(state: StateView, agent: int, k_r: int, rng: Substream) -> Slate:
    """Uniform sample without replacement from the current-step pool."""
    pool = recommendable_pool(state, agent, window=0)
    if len(pool) <= k_r:
        return Slate(agent, tuple(pool))
    return Slate(agent, tuple(rng.partial_shuffle(pool, k_r)))


def recommend_opinion(
    state: StateView, agent: int, k_r: int, k_h: int, rng: Substream
) -> Slate:
    """The k_R eligible posts closest in opinion to the agent."""
    pool = recommendable_pool(state, agent, window=k_h)
    if len(pool) < k_r:
        return Slate(agent, tuple(pool))
    x = float(state.opinions[agent])
    dists = np.array([abs(post.opinion - x) for post in pool])
    d_star = np.sort(dists)[k_r - 1]
    strict = [post for post, d in zip(pool, dists) if d < d_star]
    ties = [post for post, d in zip(pool, dists) if d == d_star]
    need = k_r - len(strict)
    chosen = rng.partial_shuffle(ties, need)
    return Slate(agent, tuple(strict + chosen))


def recommend_structure(state: StateView, agent: int, k_r: int, rng: Substream) -> Slate:
    """Most recent posts authored by the non-followed agents that share the
    most followees with the target agent."""
    graph = state.graph
    adj_agent = graph.adj[agent]
    candidates = [c for c in range(graph.n) if c != agent and not adj_agent[c]]
    scores = {c: int(np.count_nonzero(adj_agent & graph.adj[c])) for c in candidates}

    window = max(state.k_h, 1)
    lo = state.step - window
    if not any(lo <= buf.delivered_at <= state.step and len(buf) for buf in state.buffers):
        return Slate(agent, ())
    # authored posts per candidate, most recent delivery first
    by_author: dict[int, list[Post]] = {}
    for buf in reversed(state.buffers):
        if buf.delivered_at < lo or buf.delivered_at > state.step:
            continue
        for carrier in range(len(buf)):
            origin = int(buf.origin[carrier])
            if origin in scores:
                by_author.setdefault(origin, []).append(buf.post(carrier))

    posts: list[Post] = []
    for score in sorted(set(scores.values()), reverse=True):
        group = [c for c in candidates if scores[c] == score]
        while group and len(posts) < k_r:
            pick = rng.index_below(len(group))
            candidate = group[pick]
            group[pick] = group[-1]  # swap-remove, mirrored by the kernel
            group.pop()
            for post in by_author.get(candidate, []):
                posts.append(post)
                if len(posts) == k_r:
                    break
        if len(posts) == k_r:
            break
    return Slate(agent, tuple(posts))


def recommend(
    state: StateView, agent: int, strategy: str, k_r: int, k_h: int, rng: Substream
) -> Slate:
    if strategy == "random":
        return recommend_random(state, agent, k_r, rng)
    if strategy == "opinion":
        return recommend_opinion(state, agent, k_r, k_h, rng)
    if strategy == "structure":
        return recommend_structure(state, agent, k_r, rng)
    raise ValueError(f"unknown strategy {strategy!r}")
