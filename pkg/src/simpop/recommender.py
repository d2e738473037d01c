"""Next-item ranking by connection probability to a session anchor.

The anchor is the most popular item the user touched in the active session;
candidates are ordered by their probability of connecting to it. Candidates
the model cannot score sink to the tail, ordered by global popularity, and a
session with no scorable item at all falls back to a pure popularity ranking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .affinity import PopularityTable
from .errors import NoAnchorError, ValidationError
from .model import EmbeddingModel, connection_probabilities
from .sessions import Action


@dataclass(frozen=True)
class RankedList:
    """Scored candidates in non-increasing score order."""

    items: tuple[tuple[str, float], ...]
    anchor: str | None
    fallback_used: bool

    def __post_init__(self):
        seen = set()
        prev = float("inf")
        for item, score in self.items:
            if item in seen:
                raise ValidationError(f"duplicate item {item!r} in ranked list")
            seen.add(item)
            if score > prev:
                raise ValidationError("ranked list scores must be non-increasing")
            prev = score

    def item_ids(self) -> tuple[str, ...]:
        return tuple(item for item, _ in self.items)

    def rank_of(self, item: str) -> int | None:
        """1-based position of ``item``, or None when absent."""
        for pos, (candidate, _) in enumerate(self.items, start=1):
            if candidate == item:
                return pos
        return None

    def __len__(self) -> int:
        return len(self.items)


def order_candidates(
    scored: Iterable[tuple[str, float]],
    t: int,
    popularity: PopularityTable | None,
    anchor: str | None,
    fallback_used: bool,
) -> RankedList:
    """Shared ordering policy: score desc, then popularity desc, then id."""
    pop = popularity.get if popularity is not None else (lambda item, d=0.0: d)
    ordered = sorted(scored, key=lambda cs: (-cs[1], -pop(cs[0]), cs[0]))
    return RankedList(
        items=tuple(ordered[: max(t, 0)]),
        anchor=anchor,
        fallback_used=fallback_used,
    )


def anchor_item(
    session: Sequence[Action],
    popularity: PopularityTable,
    universe: Iterable[str] | None = None,
    mode: str = "global",
) -> str:
    """Pick the session's anchor: its most popular interacted item.

    ``mode='global'`` ranks by table popularity; ``mode='session'`` by
    in-session interaction count. Ties prefer the most recently touched item,
    then the lexicographically smallest id. ``universe`` optionally restricts
    eligibility (e.g. to items a model can score).

    Raises NoAnchorError when no action references an eligible item.
    """
    if mode not in ("global", "session"):
        raise ValueError(f"unknown anchor mode {mode!r}")
    allowed = set(universe) if universe is not None else None
    weight: dict[str, float] = {}
    last_seen: dict[str, int] = {}
    for pos, action in enumerate(session):
        item = action.item_ref
        if item is None or item not in popularity:
            continue
        if allowed is not None and item not in allowed:
            continue
        if mode == "global":
            weight[item] = popularity[item]
        else:
            weight[item] = weight.get(item, 0.0) + 1.0
        last_seen[item] = pos
    if not weight:
        raise NoAnchorError("session has no item eligible as anchor")
    return min(weight, key=lambda i: (-weight[i], -last_seen[i], i))


def rank_candidates(
    model: EmbeddingModel,
    anchor: str,
    candidates: Sequence[str],
    t: int,
    popularity: PopularityTable | None = None,
) -> RankedList:
    """Score candidates by connection probability to ``anchor``.

    Candidates missing from the model score 0 and land at the tail ordered
    by popularity; the anchor itself is never recommended. ``popularity``
    defaults to the model's own table and supplies tie/tail ordering.
    """
    model.index_of(anchor)  # raises MissingItemError for unknown anchors
    pop = popularity if popularity is not None else _model_popularity(model)
    unique = list(dict.fromkeys(c for c in candidates if c != anchor))
    known = [c for c in unique if c in model]
    scores = dict.fromkeys(unique, 0.0)
    if known:
        for item, p in zip(known, connection_probabilities(model, anchor, known)):
            scores[item] = float(p)
    return order_candidates(
        scores.items(), t, pop, anchor=anchor, fallback_used=False
    )


def recommend(
    model: EmbeddingModel,
    session: Sequence[Action],
    candidates: Sequence[str] | None = None,
    t: int = 10,
    popularity: PopularityTable | None = None,
    anchor_mode: str = "global",
) -> RankedList:
    """Rank next-item candidates for an active session.

    With ``candidates`` this reranks the given list (impression reranking);
    without, it returns the model items nearest to the anchor in connection
    probability. A session with no model-scorable item falls back to
    popularity ordering with ``fallback_used=True``.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    pop = popularity if popularity is not None else _model_popularity(model)
    try:
        anchor = anchor_item(session, pop, universe=model.ids, mode=anchor_mode)
    except NoAnchorError:
        pool = candidates if candidates is not None else model.ids
        unique = dict.fromkeys(pool)
        return order_candidates(
            ((c, pop.get(c, 0.0)) for c in unique),
            t,
            None,
            anchor=None,
            fallback_used=True,
        )
    pool = candidates if candidates is not None else model.ids
    return rank_candidates(model, anchor, pool, t, popularity=pop)


def _model_popularity(model: EmbeddingModel) -> PopularityTable:
    return PopularityTable(
        {item: float(k) for item, k in zip(model.ids, model.kappa)}
    )


class NextItemRecommender:
    """Ranking interface over a fitted model, for evaluation harnesses."""

    name = "proposed"

    def __init__(
        self,
        model: EmbeddingModel,
        popularity: PopularityTable | None = None,
        anchor_mode: str = "global",
        t: int = 25,
    ):
        self.model = model
        self.popularity = popularity if popularity is not None else _model_popularity(model)
        self.anchor_mode = anchor_mode
        self.default_t = t

    def rank(
        self,
        session: Sequence[Action],
        candidates: Sequence[str] | None = None,
        t: int | None = None,
    ) -> RankedList:
        return recommend(
            self.model,
            session,
            candidates=candidates,
            t=t if t is not None else self.default_t,
            popularity=self.popularity,
            anchor_mode=self.anchor_mode,
        )
