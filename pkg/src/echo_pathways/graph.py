"""Directed follower network with degree-preserving rewiring.

The edge set lives in a CSR-style layout (``offsets``/``targets``). Because
rewiring is always a one-for-one swap, per-agent out-degree never changes and
the offsets are fixed for the lifetime of a run; a rewire just overwrites one
entry of ``targets`` in place. A dense boolean adjacency matrix is kept in
sync for O(1) membership tests (n is a few hundred in practice, so the matrix
is cheap and it doubles as the operand for structural-similarity scores).
"""

from __future__ import annotations

import numpy as np

from .config import ConfigError


class FollowGraph:
    """Follower network: agent i follows every agent in ``out_edges(i)``."""

    def __init__(self, n: int, offsets: np.ndarray, targets: np.ndarray):
        self.n = int(n)
        self.offsets = np.ascontiguousarray(offsets, dtype=np.int64)
        self.targets = np.ascontiguousarray(targets, dtype=np.int32)
        self.adj = np.zeros((n, n), dtype=np.bool_)
        rows = np.repeat(np.arange(n), np.diff(self.offsets))
        self.adj[rows, self.targets] = True
        self._check()

    def _check(self) -> None:
        rows = np.repeat(np.arange(self.n), np.diff(self.offsets))
        if np.any(rows == self.targets):
            raise ValueError("self-loop in follow graph")
        if int(self.adj.sum()) != len(self.targets):
            raise ValueError("duplicate edge in follow graph")

    @classmethod
    def from_out_edges(cls, out_edges: list[list[int]]) -> "FollowGraph":
        n = len(out_edges)
        offsets = np.zeros(n + 1, dtype=np.int64)
        offsets[1:] = np.cumsum([len(e) for e in out_edges])
        targets = np.fromiter(
            (t for edges in out_edges for t in edges), dtype=np.int32, count=offsets[-1]
        )
        return cls(n, offsets, targets)

    def out_edges(self, agent: int) -> np.ndarray:
        """Current followees of ``agent`` (read-only view, stable order)."""
        return self.targets[self.offsets[agent]:self.offsets[agent + 1]]

    def out_degree(self, agent: int) -> int:
        return int(self.offsets[agent + 1] - self.offsets[agent])

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.offsets)

    def has_edge(self, agent: int, followee: int) -> bool:
        return bool(self.adj[agent, followee])

    def swap_edge(self, agent: int, unfollowed: int, followed: int) -> None:
        """Replace edge agent->unfollowed with agent->followed in place."""
        if not self.adj[agent, unfollowed]:
            raise ValueError(f"agent {agent} does not follow {unfollowed}")
        if self.adj[agent, followed] or followed == agent:
            raise ValueError(f"agent {agent} cannot follow {followed}")
        block = self.targets[self.offsets[agent]:self.offsets[agent + 1]]
        # position is unique: no duplicate edges
        pos = int(np.nonzero(block == unfollowed)[0][0])
        block[pos] = followed
        self.adj[agent, unfollowed] = False
        self.adj[agent, followed] = True

    def copy(self) -> "FollowGraph":
        return FollowGraph(self.n, self.offsets.copy(), self.targets.copy())

    def edge_list(self) -> list[tuple[int, int]]:
        rows = np.repeat(np.arange(self.n), np.diff(self.offsets))
        return list(zip(rows.tolist(), self.targets.tolist()))

    def common_followees(self) -> np.ndarray:
        """Matrix of |out(i) & out(j)| counts (structural similarity)."""
        a = self.adj.astype(np.float32)
        return np.rint(a @ a.T).astype(np.int32)


def build_initial_network(n: int, k_o: float, rng: np.random.Generator) -> FollowGraph:
    """Random digraph: each ordered pair (i, j), i != j, is an edge
    independently with probability k_o / (n - 1)."""
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ConfigError("n", f"need an integer >= 2, got {n!r}")
    if not 0 < k_o <= n - 1:
        raise ConfigError("k_o", f"need 0 < k_o <= n-1, got {k_o!r}")
    p_edge = k_o / (n - 1)
    mask = rng.random((n, n)) < p_edge
    np.fill_diagonal(mask, False)
    offsets = np.zeros(n + 1, dtype=np.int64)
    offsets[1:] = np.cumsum(mask.sum(axis=1))
    targets = np.nonzero(mask)[1].astype(np.int32)
    return FollowGraph(n, offsets, targets)
