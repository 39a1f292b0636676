"""Posts and per-step post buffers.

Every agent emits exactly one post per step, so the buffer of posts delivered
at step t is naturally indexed by the carrier: row j holds the post that
agent j's followers (and the recommenders) see at t. A repost keeps the
source's origin author, opinion payload, and creation step; only the carrier
and delivery step are new.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Post:
    origin_author: int
    carrier: int
    created_at: int
    delivered_at: int
    opinion: float
    is_repost: bool

    def __post_init__(self):
        if not -1.0 <= self.opinion <= 1.0:
            raise ValueError(f"post opinion {self.opinion} outside [-1, 1]")
        if not self.is_repost and self.carrier != self.origin_author:
            raise ValueError("original post must be carried by its author")


class StepPosts:
    """Columnar buffer of the n posts delivered at one step (row = carrier)."""

    __slots__ = ("delivered_at", "opinion", "origin", "created", "is_repost")

    def __init__(self, delivered_at: int, opinion, origin, created, is_repost):
        self.delivered_at = int(delivered_at)
        self.opinion = np.asarray(opinion, dtype=np.float64)
        self.origin = np.asarray(origin, dtype=np.int32)
        self.created = np.asarray(created, dtype=np.int32)
        self.is_repost = np.asarray(is_repost, dtype=np.bool_)

    def __len__(self) -> int:
        return len(self.opinion)

    def post(self, carrier: int) -> Post:
        return Post(
            origin_author=int(self.origin[carrier]),
            carrier=int(carrier),
            created_at=int(self.created[carrier]),
            delivered_at=self.delivered_at,
            opinion=float(self.opinion[carrier]),
            is_repost=bool(self.is_repost[carrier]),
        )

    @classmethod
    def originals(cls, delivered_at: int, opinions: np.ndarray) -> "StepPosts":
        n = len(opinions)
        created = np.full(n, delivered_at - 1, dtype=np.int32)
        return cls(
            delivered_at,
            opinions.astype(np.float64, copy=True),
            np.arange(n, dtype=np.int32),
            created,
            np.zeros(n, dtype=np.bool_),
        )
