"""Comparison rankers sharing the recommender's output interface.

Five reference strategies: seeded random permutation, interaction
popularity, clickout popularity, co-occurrence K nearest neighbors, and
metadata K nearest neighbors. Each exposes ``name`` and
``rank(session, candidates, t)`` returning a RankedList, the same duck type
as NextItemRecommender.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np

from .affinity import AffinityGraph, PopularityTable, interaction_counts
from .errors import ParseError
from .recommender import RankedList, order_candidates
from .sessions import Action, SessionCorpus


class Ranker(Protocol):
    name: str

    def rank(
        self, session: Sequence[Action], candidates: Sequence[str], t: int
    ) -> RankedList: ...


def _dedupe(candidates: Sequence[str]) -> list[str]:
    return list(dict.fromkeys(candidates))


def _previous_item(session: Sequence[Action], clickout_only: bool) -> str | None:
    """Most recent action with a revealed item, optionally clickouts only."""
    for action in reversed(session):
        if action.item_ref is None:
            continue
        if clickout_only and not action.is_clickout:
            continue
        return action.item_ref
    return None


class RandomRanker:
    """Uniform random permutation of the candidates, seeded.

    The per-call generator is derived from (seed, session id, candidates), so
    identical inputs reproduce the same permutation while distinct sessions
    get independent draws.
    """

    name = "random"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def rank(self, session, candidates, t) -> RankedList:
        unique = _dedupe(candidates)
        sid = session[0].session_id if session else ""
        rng = np.random.default_rng(self._call_seed(sid, unique))
        perm = rng.permutation(len(unique))
        n = len(unique)
        scored = [(unique[k], (n - pos) / n) for pos, k in enumerate(perm)]
        return order_candidates(scored, t, None, anchor=None, fallback_used=False)

    def _call_seed(self, session_id: str, candidates: Sequence[str]) -> int:
        h = hashlib.blake2b(digest_size=8)
        h.update(str(self.seed).encode())
        h.update(session_id.encode())
        for c in candidates:
            h.update(b"\x00")
            h.update(c.encode())
        return int.from_bytes(h.digest(), "big")


class _CountRanker:
    """Rank by a fixed per-item count; unseen items count 0."""

    def __init__(self, counts: Mapping[str, int]):
        self.counts = dict(counts)

    def rank(self, session, candidates, t) -> RankedList:
        scored = [(c, float(self.counts.get(c, 0))) for c in _dedupe(candidates)]
        return order_candidates(scored, t, None, anchor=None, fallback_used=False)


class InteractionPopularityRanker(_CountRanker):
    """Most interacted-with items first."""

    name = "ipop"

    def __init__(self, corpus: SessionCorpus):
        super().__init__(interaction_counts(corpus, clickout_only=False))


class ClickoutPopularityRanker(_CountRanker):
    """Most clicked-out items first."""

    name = "icpop"

    def __init__(self, corpus: SessionCorpus):
        super().__init__(interaction_counts(corpus, clickout_only=True))


class CooccurrenceKnnRanker:
    """Score candidates by session co-occurrence with the previous item.

    Only the ``k`` strongest neighbors of the previous item can receive a
    similarity score; everything else tails out by popularity. Sessions with
    no usable previous item fall back to popularity ordering.
    """

    name = "icknn"

    def __init__(self, graph: AffinityGraph, k: int = 100, clickout_only: bool = False):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.graph = graph
        self.k = k
        self.clickout_only = clickout_only

    def rank(self, session, candidates, t) -> RankedList:
        unique = _dedupe(candidates)
        prev = _previous_item(session, self.clickout_only)
        if prev is None:
            scored = [(c, self.graph.popularity.get(c, 0.0)) for c in unique]
            return order_candidates(scored, t, None, anchor=None, fallback_used=True)
        near = dict(self.graph.neighbors(prev)[: self.k])
        scored = [(c, near.get(c, 0.0)) for c in unique]
        return order_candidates(
            scored, t, self.graph.popularity, anchor=prev, fallback_used=False
        )


class MetadataKnnRanker:
    """Score candidates by metadata cosine against the previous item.

    Item metadata is a set of property tokens; similarity is the cosine of
    the binary property vectors. ``k`` caps how many candidates may carry a
    similarity score, mirroring the co-occurrence variant.
    """

    name = "imknn"

    def __init__(
        self,
        metadata: Mapping[str, frozenset[str]],
        k: int = 100,
        popularity: PopularityTable | None = None,
        clickout_only: bool = False,
    ):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.metadata = dict(metadata)
        self.k = k
        self.popularity = popularity
        self.clickout_only = clickout_only

    def rank(self, session, candidates, t) -> RankedList:
        unique = _dedupe(candidates)
        prev = _previous_item(session, self.clickout_only)
        if prev is None or prev not in self.metadata:
            pop = self.popularity
            scored = [
                (c, pop.get(c, 0.0) if pop is not None else 0.0) for c in unique
            ]
            return order_candidates(scored, t, None, anchor=None, fallback_used=True)
        props = self.metadata[prev]
        scored = sorted(
            ((c, self._cosine(props, c)) for c in unique),
            key=lambda cs: (-cs[1], cs[0]),
        )
        trimmed = [
            (c, s if pos < self.k else 0.0) for pos, (c, s) in enumerate(scored)
        ]
        return order_candidates(
            trimmed, t, self.popularity, anchor=prev, fallback_used=False
        )

    def _cosine(self, props: frozenset[str], candidate: str) -> float:
        other = self.metadata.get(candidate)
        if not props or not other:
            return 0.0
        return len(props & other) / (len(props) * len(other)) ** 0.5


def load_metadata(path: str | Path) -> dict[str, frozenset[str]]:
    """Read an item-properties file: ``item_id<TAB>a|b|c`` per line."""
    metadata: dict[str, frozenset[str]] = {}
    with open(path, "r", encoding="utf-8") as stream:
        for n, line in enumerate(stream, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise ParseError(f"malformed metadata line in {path}", n)
            metadata[fields[0]] = frozenset(
                tok for tok in fields[1].split("|") if tok
            )
    return metadata


def write_metadata(metadata: Mapping[str, frozenset[str]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as out:
        for item in sorted(metadata):
            out.write(f"{item}\t{'|'.join(sorted(metadata[item]))}\n")
