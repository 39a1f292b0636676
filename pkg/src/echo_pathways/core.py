"""Synchronous step loop: feeds, opinion updates, rewiring, content.

Each step t reads only time-t state:

1. every agent's feed is the set of posts delivered at t by its current
   followees, merged with a recommender slate;
2. posts are split into concordant and discordant by the confidence
   boundary;
3. all opinions move synchronously toward the mean concordant opinion,
   scaled by the influence parameter;
4. with the rewiring probability, an agent drops one discordant followee
   (the carrier of a discordant feed post) and follows the author of a
   concordant recommended post instead, keeping its out-degree;
5. every agent emits exactly one post for delivery at t+1: a copy of a
   random concordant post (repost) with the repost probability, otherwise a
   fresh post carrying its updated opinion.

Two engines implement the same semantics: a compiled kernel (fast, the
default) and a pure-Python reference built from the operation functions
below. They share the substream RNG and are bit-identical; the test suite
enforces this.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .config import ConfigError, ScenarioConfig
from .graph import FollowGraph, build_initial_network
from .metrics import ReferenceSet, baseline_rho, reference_distributions, step_indices
from .posts import Post, StepPosts
from .recommenders import Slate, StateView, recommend
from .rng import PURPOSE_POST, PURPOSE_RECOMMEND, PURPOSE_REWIRE, Substream

STOP_CONVERGED = "converged"
STOP_MAX_STEPS = "max_steps"

# Opinion snapshots are persisted at this many rows or fewer; longer runs
# are strided (see records.snapshot_steps).
SNAPSHOT_BUDGET = 2000


@dataclass(frozen=True)
class RewireEvent:
    step: int
    agent: int
    unfollowed: int
    followed: int


@dataclass(frozen=True)
class InterventionEvent:
    step: int
    kind: str      # "set_strategy" | "set_param"
    payload: dict  # {"strategy": ..., "k_h": ...} or {"name": ..., "value": ...}


@dataclass(frozen=True)
class StepRecord:
    step: int            # index of the step just executed
    max_delta: float     # largest absolute opinion change
    rewire_count: int
    repost_count: int


# ---------------------------------------------------------------------------
# operation functions (also the reference-engine building blocks)
# ---------------------------------------------------------------------------

def partition_concordant(
    x: float, posts: Sequence[Post], epsilon: float
) -> tuple[list[Post], list[Post]]:
    """Split posts into (concordant, discordant) by |tau - x| < epsilon,
    strict at the boundary; input order is preserved within each part."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    concordant, discordant = [], []
    for post in posts:
        (concordant if abs(post.opinion - x) < epsilon else discordant).append(post)
    return concordant, discordant


def update_opinion(x: float, concordant_opinions: Sequence[float], alpha: float) -> float:
    """Move x toward the mean concordant opinion by a factor alpha; x is
    returned unchanged when there is nothing concordant."""
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must be in [0, 1]")
    count = len(concordant_opinions)
    if count == 0:
        return x
    total = 0.0
    for tau in concordant_opinions:  # fixed order: summation must match the kernel
        total += tau - x
    result = x + alpha * (total / count)
    return min(1.0, max(-1.0, result))


def rewire(
    agent: int,
    discordant_followee_carriers: Sequence[int],
    concordant_rec_authors: Sequence[int],
    q: float,
    graph: FollowGraph,
    rng: Substream,
) -> RewireEvent | None:
    """With probability q, unfollow a uniformly chosen discordant carrier and
    follow a uniformly chosen concordant recommended author that is not yet
    followed. Returns None (and consumes only the coin draw) when either
    candidate set is empty; out-degree is preserved either way."""
    if rng.uniform() >= q:
        return None
    if not discordant_followee_carriers:
        return None
    eligible = []
    for author in dict.fromkeys(concordant_rec_authors):
        if author != agent and not graph.has_edge(agent, author):
            eligible.append(author)
    if not eligible:
        return None
    unfollowed = discordant_followee_carriers[rng.index_below(len(discordant_followee_carriers))]
    followed = eligible[rng.index_below(len(eligible))]
    graph.swap_edge(agent, unfollowed, followed)
    return RewireEvent(step=-1, agent=agent, unfollowed=int(unfollowed), followed=int(followed))


def generate_post(
    agent: int,
    x_next: float,
    concordant_pool: Sequence[Post],
    p: float,
    t: int,
    rng: Substream,
) -> Post:
    """One post for delivery at t+1: with probability p a repost of a
    uniformly chosen concordant post (payload, origin, and creation step
    copied), otherwise an original post carrying x_next."""
    u = rng.uniform()
    if u < p and concordant_pool:
        source = concordant_pool[rng.index_below(len(concordant_pool))]
        return Post(
            origin_author=source.origin_author,
            carrier=agent,
            created_at=source.created_at,
            delivered_at=t + 1,
            opinion=source.opinion,
            is_repost=True,
        )
    return Post(
        origin_author=agent,
        carrier=agent,
        created_at=t,
        delivered_at=t + 1,
        opinion=x_next,
        is_repost=False,
    )


# ---------------------------------------------------------------------------
# run record
# ---------------------------------------------------------------------------

@dataclass
class RunRecord:
    """Everything a finished run leaves behind, in memory."""

    config: ScenarioConfig
    stop_step: int
    stop_reason: str
    rho: np.ndarray            # per-step series, length stop_step + 1
    i_h: np.ndarray
    i_p: np.ndarray
    i_s: np.ndarray
    events: list               # RewireEvent | InterventionEvent, ordered by step
    opinions: np.ndarray       # float32 [stop_step + 1, n], one row per step
    fod: np.ndarray            # float32 [stop_step, n], NaN where no concordant followees
    final_opinions: np.ndarray
    final_graph: FollowGraph
    baseline: float

    @property
    def rewire_events(self) -> list[RewireEvent]:
        return [e for e in self.events if isinstance(e, RewireEvent)]

    def nod_samples(self):
        from . import landscape

        return landscape.nod_samples(self, self.config.alpha)

    def fod_samples(self):
        from . import landscape

        return landscape.fod_samples(self)


# ---------------------------------------------------------------------------
# the simulation
# ---------------------------------------------------------------------------

class Simulation:
    """One mutable run; create, then call step() until ``finished``.

    Strategy and the alpha/q/p parameters may be changed between steps via
    apply_intervention(); changes are logged so a run can be replayed
    exactly from (config, seed, intervention log).
    """

    def __init__(self, config: ScenarioConfig, engine: str = "fast"):
        config.validate()
        if engine not in ("fast", "reference"):
            raise ValueError(f"unknown engine {engine!r}")
        self.config = config
        self.engine = engine
        self.n = config.n
        self.seed = config.seed & 0xFFFFFFFFFFFFFFFF

        init_rng = np.random.default_rng(np.uint64(self.seed))
        self.x = init_rng.uniform(-1.0, 1.0, config.n)
        self.graph = build_initial_network(config.n, config.k_o, init_rng)

        # live parameters (interventions may change them between steps)
        self.alpha = config.alpha
        self.q = config.q
        self.p = config.p
        self.strategy = config.strategy
        self.k_h = config.k_h

        self.step_index = 0
        self.finished = False
        self.stop_reason: str | None = None
        self._quiet = 0

        self.buffers: list[StepPosts] = []
        self._common: np.ndarray | None = None
        if self.strategy == "structure":
            self._common = self.graph.common_followees()

        self.refs: ReferenceSet = reference_distributions()
        # the closed-form baseline exceeds 1 for wide confidence boundaries
        # (eps > ~1.17); clamp into the index's valid range
        raw_baseline = baseline_rho(
            config.epsilon,
            config.baseline_formula,
            rng=np.random.default_rng(np.uint64(self.seed ^ 0x0BA5E11E)),
        )
        self.baseline = min(max(raw_baseline, 0.0), 1.0 - 1e-9)

        self.series_rho: list[float] = []
        self.series_ih: list[float] = []
        self.series_ip: list[float] = []
        self.series_is: list[float] = []
        self._snapshots: list[np.ndarray] = []
        self._fod_rows: list[np.ndarray] = []
        self._event_blocks: list[tuple[int, np.ndarray]] = []  # (step, [k,3] int32)
        self.interventions: list[InterventionEvent] = []
        self._rewire_total = 0

        self._record_state()

        if engine == "fast":
            from . import _kernels

            self._kernels = _kernels

    # -- bookkeeping -------------------------------------------------------

    def _record_state(self) -> None:
        rho, i_h, i_p, i_s = step_indices(
            self.x, self.graph, self.config.epsilon, self.baseline, self.refs
        )
        self.series_rho.append(rho)
        self.series_ih.append(i_h)
        self.series_ip.append(i_p)
        self.series_is.append(i_s)
        self._snapshots.append(self.x.astype(np.float32))

    def _retention(self) -> int:
        return max(10, self.k_h + 2)

    def _window_rows(self) -> list[StepPosts]:
        """Delivery buffers the current strategy may read, oldest first."""
        if self.strategy == "opinion":
            need = self.k_h + 1
        elif self.strategy == "structure":
            need = max(self.k_h, 1) + 1
        else:
            need = 1
        return self.buffers[-need:] if need else []

    @property
    def rewire_count(self) -> int:
        return self._rewire_total

    # -- interventions -----------------------------------------------------

    def apply_intervention(self, kind: str, payload: dict) -> InterventionEvent:
        """Apply a parameter or strategy change at the current step boundary."""
        if self.finished:
            raise ValueError("cannot intervene on a finished run")
        if kind == "set_strategy":
            strategy = payload.get("strategy")
            k_h = payload.get("k_h", self.k_h)
            probe = ScenarioConfig(epsilon=self.config.epsilon)
            probe = probe.with_overrides({"strategy": strategy, "k_h": k_h})
            self.strategy = strategy
            self.k_h = k_h
            if strategy == "structure" and self._common is None:
                self._common = self.graph.common_followees()
            event = InterventionEvent(
                self.step_index, kind, {"strategy": strategy, "k_h": k_h}
            )
        elif kind == "set_param":
            name = payload.get("name")
            if name not in ("p", "q", "alpha"):
                raise ConfigError(str(name), "interventions may set p, q, or alpha")
            value = payload.get("value")
            ScenarioConfig(epsilon=self.config.epsilon).with_overrides({name: value})
            setattr(self, name, float(value))
            event = InterventionEvent(self.step_index, kind, {"name": name, "value": float(value)})
        else:
            raise ConfigError(kind, "unknown intervention kind")
        self.interventions.append(event)
        return event

    # -- stepping ----------------------------------------------------------

    def step(self) -> StepRecord:
        if self.finished:
            raise ValueError("run already finished")
        if self.engine == "fast":
            record = self._step_fast()
        else:
            record = self._step_reference()
        self.step_index += 1
        self._record_state()
        quiet = record.max_delta < self.config.opinion_tol and record.rewire_count == 0
        self._quiet = self._quiet + 1 if quiet else 0
        if self._quiet >= self.config.quiet_steps:
            self.finished = True
            self.stop_reason = STOP_CONVERGED
        elif self.step_index >= self.config.max_steps:
            self.finished = True
            self.stop_reason = STOP_MAX_STEPS
        return record

    def run_to_completion(self) -> None:
        while not self.finished:
            self.step()

    # -- reference engine ----------------------------------------------------

    def _step_reference(self) -> StepRecord:
        t = self.step_index
        n = self.n
        eps = self.config.epsilon
        window = tuple(self._window_rows())
        view = StateView(t, self.x, self.graph, window, self.k_h)
        feed_buf = window[-1] if window and window[-1].delivered_at == t else None

        slates: list[Slate] = []
        for i in range(n):
            rng = Substream(self.seed, PURPOSE_RECOMMEND, t, i)
            slates.append(recommend(view, i, self.strategy, self.config.k_R, self.k_h, rng))

        x_new = np.empty_like(self.x)
        fod = np.full(n, np.nan, dtype=np.float32)
        conc_feed: list[list[Post]] = []
        disc_feed: list[list[Post]] = []
        conc_rec: list[list[Post]] = []
        for i in range(n):
            feed = (
                [feed_buf.post(int(j)) for j in self.graph.out_edges(i)]
                if feed_buf is not None
                else []
            )
            n_i, d_i = partition_concordant(self.x[i], feed, eps)
            m_i, _ = partition_concordant(self.x[i], slates[i].posts, eps)
            conc_feed.append(n_i)
            disc_feed.append(d_i)
            conc_rec.append(m_i)
            taus = [post.opinion for post in n_i] + [post.opinion for post in m_i]
            x_new[i] = update_opinion(self.x[i], taus, self.alpha)
            if n_i:
                total = 0.0
                for post in n_i:
                    total += post.opinion - self.x[i]
                fod[i] = total / len(n_i)

        events = np.empty((0, 3), dtype=np.int32)
        ev_rows = []
        for i in range(n):
            rng = Substream(self.seed, PURPOSE_REWIRE, t, i)
            carriers = [post.carrier for post in disc_feed[i]]
            authors = [post.origin_author for post in conc_rec[i]]
            ev = rewire(i, carriers, authors, self.q, self.graph, rng)
            if ev is not None:
                ev_rows.append((i, ev.unfollowed, ev.followed))
        if ev_rows:
            events = np.array(ev_rows, dtype=np.int32)

        posts = []
        repost_count = 0
        for i in range(n):
            rng = Substream(self.seed, PURPOSE_POST, t, i)
            pool = conc_feed[i] + conc_rec[i]
            post = generate_post(i, float(x_new[i]), pool, self.p, t, rng)
            repost_count += int(post.is_repost)
            posts.append(post)
        new_buf = StepPosts(
            t + 1,
            np.array([post.opinion for post in posts]),
            np.array([post.origin_author for post in posts], dtype=np.int32),
            np.array([post.created_at for post in posts], dtype=np.int32),
            np.array([post.is_repost for post in posts], dtype=np.bool_),
        )
        return self._finish_step(t, x_new, fod, events, new_buf, repost_count)

    # -- fast engine -------------------------------------------------------

    def _step_fast(self) -> StepRecord:
        t = self.step_index
        n = self.n
        window = self._window_rows()
        w = len(window)
        if w:
            buf_op = np.stack([b.opinion for b in window])
            buf_origin = np.stack([b.origin for b in window])
            buf_created = np.stack([b.created for b in window])
        else:
            buf_op = np.empty((0, n))
            buf_origin = np.empty((0, n), dtype=np.int32)
            buf_created = np.empty((0, n), dtype=np.int32)

        common = self._common
        maintain = self.strategy == "structure"
        if common is None:
            common = np.zeros((1, 1), dtype=np.int32)

        out = self._kernels.step_kernel(
            np.uint64(t),
            self.x,
            self.graph.offsets,
            self.graph.targets,
            self.graph.adj,
            common,
            maintain,
            buf_op,
            buf_origin,
            buf_created,
            self._kernels.STRATEGY_CODES[self.strategy],
            self.config.k_R,
            self.k_h,
            self.config.epsilon,
            self.alpha,
            self.q,
            self.p,
            np.uint64(self.seed),
        )
        x_new, fod, events, nb_op, nb_origin, nb_created, nb_isrep, repost_count = out
        new_buf = StepPosts(t + 1, nb_op, nb_origin, nb_created, nb_isrep)
        return self._finish_step(t, x_new, fod.astype(np.float32), events, new_buf, repost_count)

    def _finish_step(self, t, x_new, fod, events, new_buf, repost_count) -> StepRecord:
        max_delta = float(np.max(np.abs(x_new - self.x))) if self.n else 0.0
        self.x = x_new
        self._fod_rows.append(fod)
        if len(events):
            self._event_blocks.append((t, events))
            self._rewire_total += len(events)
        self.buffers.append(new_buf)
        keep = self._retention()
        if len(self.buffers) > keep:
            del self.buffers[: len(self.buffers) - keep]
        return StepRecord(
            step=t,
            max_delta=max_delta,
            rewire_count=int(len(events)),
            repost_count=int(repost_count),
        )

    # -- output ------------------------------------------------------------

    def iter_rewire_events(self) -> Iterable[RewireEvent]:
        for step, block in self._event_blocks:
            for agent, unfollowed, followed in block:
                yield RewireEvent(step, int(agent), int(unfollowed), int(followed))

    def build_record(self) -> RunRecord:
        if not self.finished:
            raise ValueError("run is not finished")
        # interventions apply at the boundary before a step's rewires; stable
        # sort keeps that order within a step
        events: list = list(self.interventions) + list(self.iter_rewire_events())
        events.sort(key=lambda e: e.step)
        fod = (
            np.stack(self._fod_rows)
            if self._fod_rows
            else np.empty((0, self.n), dtype=np.float32)
        )
        return RunRecord(
            config=self.config,
            stop_step=self.step_index,
            stop_reason=self.stop_reason or STOP_MAX_STEPS,
            rho=np.array(self.series_rho),
            i_h=np.array(self.series_ih),
            i_p=np.array(self.series_ip),
            i_s=np.array(self.series_is),
            events=events,
            opinions=np.stack(self._snapshots),
            fod=fod,
            final_opinions=self.x.copy(),
            final_graph=self.graph,
            baseline=self.baseline,
        )


def run(
    config: ScenarioConfig,
    interventions: Sequence[InterventionEvent] = (),
    engine: str = "fast",
) -> RunRecord:
    """Drive a run to convergence or the step cap, applying any interventions
    at their recorded step boundaries."""
    sim = Simulation(config, engine=engine)
    pending = sorted(interventions, key=lambda e: e.step)
    idx = 0
    while not sim.finished:
        while idx < len(pending) and pending[idx].step == sim.step_index:
            ev = pending[idx]
            sim.apply_intervention(ev.kind, ev.payload)
            idx += 1
        sim.step()
    return sim.build_record()
