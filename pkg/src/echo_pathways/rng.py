"""Counter-based random substreams shared by the fast and reference engines.

Every stochastic decision in a run draws from a substream keyed by
(seed, purpose, step, agent). Substreams are independent of each other, so
the number of draws one decision consumes never shifts the values another
decision sees, and per-agent work could be evaluated in any order (or in
parallel) without changing a run. The generator is a splitmix64 counter
sequence; all arithmetic is plain uint64, which behaves identically under
numba and under numpy, so the compiled kernels and the pure-Python
reference engine produce bit-identical draws.
"""

from __future__ import annotations

import numba
import numpy as np

# Substream purposes. Keep values stable: they are part of the
# reproducibility contract for persisted runs.
PURPOSE_RECOMMEND = 1
PURPOSE_REWIRE = 2
PURPOSE_POST = 3
PURPOSE_BASELINE = 4

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53


@numba.njit(numba.uint64(numba.uint64), cache=True)
def mix64(z):
    # splitmix64 finalizer
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@numba.njit(numba.uint64(numba.uint64, numba.uint64, numba.uint64, numba.uint64), cache=True)
def stream_state(seed, purpose, step, agent):
    """Initial counter for the (seed, purpose, step, agent) substream."""
    s = mix64(seed + _GOLDEN * purpose)
    s = mix64(s + _GOLDEN * step)
    s = mix64(s + _GOLDEN * (agent + np.uint64(1)))
    return s


@numba.njit(numba.types.Tuple((numba.uint64, numba.float64))(numba.uint64), cache=True)
def stream_next(state):
    """Advance one draw; returns (new_state, uniform in [0, 1))."""
    state = state + _GOLDEN
    bits = mix64(state)
    return state, np.float64(bits >> np.uint64(11)) * _INV_2_53


class Substream:
    """Python-side view of one substream, for the reference engine and ops."""

    __slots__ = ("_state",)

    def __init__(self, seed: int, purpose: int, step: int, agent: int):
        self._state = stream_state(
            np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
            np.uint64(purpose),
            np.uint64(step),
            np.uint64(agent & 0xFFFFFFFFFFFFFFFF),
        )

    def uniform(self) -> float:
        self._state, u = stream_next(self._state)
        return u

    def index_below(self, m: int) -> int:
        """Uniform integer in [0, m). Consumes exactly one draw."""
        j = int(self.uniform() * m)
        # u*m can round up to exactly m for u within half an ulp of 1
        return j if j < m else m - 1

    def partial_shuffle(self, items: list, k: int) -> list:
        """First k entries of a uniform shuffle (Fisher-Yates prefix).

        Mutates ``items`` in place and consumes exactly k draws.
        """
        m = len(items)
        for i in range(k):
            j = i + self.index_below(m - i)
            items[i], items[j] = items[j], items[i]
        return items[:k]
