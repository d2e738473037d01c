"""Session log parsing, validation, and the canonical on-disk format.

A session is one user's ordered action sequence within a visit. The canonical
file format is UTF-8 CSV with a header row

    user_id,session_id,timestamp,step,action_type,reference,impressions

where ``step`` is a 1-based contiguous counter within the session,
``reference`` names the acted-on item (empty when the action touches no item,
or when a test target has been hidden), and ``impressions`` is a
pipe-separated candidate list of at most 25 items, attached to clickout rows.
Files ending in ``.gz`` are read and written gzip-compressed. The column
layout mirrors the public Trivago/RecSys-2019 session logs, so those load
with the default schema; extra columns are ignored.
"""

from __future__ import annotations

import csv
import gzip
import io
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .errors import ParseError, ValidationError

log = logging.getLogger(__name__)

#: Action type string of the distinguished clickout kind. Any other string is
#: treated as a generic item interaction.
CLICKOUT = "clickout item"

MAX_IMPRESSIONS = 25

#: Default mapping from Action field to column name (the canonical layout).
DEFAULT_SCHEMA: dict[str, str] = {
    "user_id": "user_id",
    "session_id": "session_id",
    "timestamp": "timestamp",
    "step": "step",
    "action_type": "action_type",
    "item_ref": "reference",
    "impressions": "impressions",
}

_CANONICAL_COLUMNS = (
    "user_id",
    "session_id",
    "timestamp",
    "step",
    "action_type",
    "reference",
    "impressions",
)


class Role(Enum):
    TRAIN = "train"
    TEST = "test"


@dataclass(frozen=True)
class Action:
    """One logged user action within a session."""

    session_id: str
    user_id: str
    step: int
    action_type: str
    item_ref: str | None
    impressions: tuple[str, ...] | None
    timestamp: int

    @property
    def is_clickout(self) -> bool:
        return self.action_type == CLICKOUT


@dataclass(frozen=True)
class SessionCorpus:
    """Immutable collection of validated sessions.

    ``sessions`` maps session_id to the step-ordered action tuple;
    ``item_vocabulary`` contains every item seen as a reference or inside an
    impression list.
    """

    sessions: dict[str, tuple[Action, ...]]
    item_vocabulary: frozenset[str]
    role: Role

    @property
    def n_sessions(self) -> int:
        return len(self.sessions)

    @property
    def n_actions(self) -> int:
        return sum(len(a) for a in self.sessions.values())

    def session_ids(self) -> list[str]:
        return sorted(self.sessions)

    @classmethod
    def from_actions(cls, actions: Iterable[Action], role: Role) -> "SessionCorpus":
        """Group actions by session, order by step, and validate invariants."""
        grouped: dict[str, list[Action]] = {}
        for a in actions:
            grouped.setdefault(a.session_id, []).append(a)
        sessions = {
            sid: _validate_session(sid, acts) for sid, acts in grouped.items()
        }
        return cls(sessions=sessions, item_vocabulary=_vocabulary(sessions), role=role)


def _validate_session(sid: str, actions: list[Action]) -> tuple[Action, ...]:
    actions = sorted(actions, key=lambda a: a.step)
    prev = 0
    for a in actions:
        if a.step == prev:
            raise ValidationError(f"session {sid}: duplicate step {a.step}")
        if a.step != prev + 1:
            raise ValidationError(
                f"session {sid}: steps must be contiguous from 1, "
                f"found {a.step} after {prev}"
            )
        prev = a.step
        if a.impressions is not None and len(a.impressions) > MAX_IMPRESSIONS:
            raise ValidationError(
                f"session {sid} step {a.step}: {len(a.impressions)} impressions "
                f"exceed the maximum of {MAX_IMPRESSIONS}"
            )
        if a.is_clickout:
            if not a.impressions:
                raise ValidationError(
                    f"session {sid} step {a.step}: clickout without impressions"
                )
            if a.item_ref is not None and a.item_ref not in a.impressions:
                raise ValidationError(
                    f"session {sid} step {a.step}: clicked item {a.item_ref} "
                    f"not in its impression list"
                )
    return tuple(actions)


def _vocabulary(sessions: Mapping[str, Sequence[Action]]) -> frozenset[str]:
    vocab: set[str] = set()
    for acts in sessions.values():
        for a in acts:
            if a.item_ref is not None:
                vocab.add(a.item_ref)
            if a.impressions:
                vocab.update(a.impressions)
    return frozenset(vocab)


# ---------------------------------------------------------------------------
# Parsing and serialization
# ---------------------------------------------------------------------------


def parse_session_log(
    source: str | Path | IO,
    schema: Mapping[str, str] | None = None,
    role: Role = Role.TRAIN,
    delimiter: str = ",",
) -> SessionCorpus:
    """Parse a delimiter-separated session log into a validated corpus.

    Args:
        source: path to a (optionally ``.gz``) file, or an open stream.
        schema: mapping from Action field names (``user_id``, ``session_id``,
            ``timestamp``, ``step``, ``action_type``, ``item_ref``,
            ``impressions``) to column names; defaults to the canonical
            layout.
        role: corpus role to stamp on the result.
        delimiter: field separator, comma by default.

    Raises:
        ParseError: wrong column count, unknown required column, or a
            non-integer step/timestamp, with the offending line number.
        ValidationError: duplicate or non-contiguous steps, or a clickout
            violating the impression invariants.
    """
    schema = dict(DEFAULT_SCHEMA, **(schema or {}))
    with _open_text(source) as stream:
        reader = csv.reader(stream, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty input, expected a header row", 1) from None
        col_index: dict[str, int] = {}
        for field, column in schema.items():
            try:
                col_index[field] = header.index(column)
            except ValueError:
                raise ParseError(
                    f"required column {column!r} (for field {field!r}) "
                    f"not in header", 1
                ) from None

        actions: list[Action] = []
        n_cols = len(header)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != n_cols:
                raise ParseError(
                    f"expected {n_cols} columns, got {len(row)}", line
                )
            actions.append(_row_to_action(row, col_index, line))
    return SessionCorpus.from_actions(actions, role)


def _row_to_action(row: list[str], col: Mapping[str, int], line: int) -> Action:
    def _int(field: str) -> int:
        raw = row[col[field]]
        try:
            return int(raw)
        except ValueError:
            raise ParseError(f"non-integer {field} {raw!r}", line) from None

    ref = row[col["item_ref"]].strip()
    imp_raw = row[col["impressions"]].strip()
    impressions = (
        tuple(tok for tok in imp_raw.split("|") if tok) if imp_raw else None
    )
    return Action(
        session_id=row[col["session_id"]],
        user_id=row[col["user_id"]],
        step=_int("step"),
        action_type=row[col["action_type"]],
        item_ref=ref or None,
        impressions=impressions,
        timestamp=_int("timestamp"),
    )


def _open_text(source: str | Path | IO) -> IO:
    if isinstance(source, (str, Path)):
        path = Path(source)
        if path.suffix == ".gz":
            return gzip.open(path, "rt", encoding="utf-8", newline="")
        return open(path, "r", encoding="utf-8", newline="")
    if isinstance(source, io.TextIOBase):
        return _nonclosing(source)
    return _nonclosing(io.TextIOWrapper(source, encoding="utf-8", newline=""))


class _nonclosing:
    """Context wrapper that leaves caller-owned streams open."""

    def __init__(self, stream: IO):
        self.stream = stream

    def __enter__(self) -> IO:
        return self.stream

    def __exit__(self, *exc) -> None:
        pass


def write_corpus(corpus: SessionCorpus, path: str | Path) -> None:
    """Write a corpus in the canonical CSV format (gzip if path ends .gz).

    Sessions are ordered by id and actions by step, so output bytes are a
    deterministic function of the corpus.
    """
    path = Path(path)
    if path.suffix == ".gz":
        # fixed mtime and empty name keep gzip output byte-stable across runs
        raw = open(path, "wb")
        stream: IO = io.TextIOWrapper(
            gzip.GzipFile(filename="", fileobj=raw, mode="wb", mtime=0),
            encoding="utf-8",
            newline="",
        )
    else:
        raw = None
        stream = open(path, "w", encoding="utf-8", newline="")
    try:
        writer = csv.writer(stream)
        writer.writerow(_CANONICAL_COLUMNS)
        for sid in sorted(corpus.sessions):
            for a in corpus.sessions[sid]:
                writer.writerow(
                    (
                        a.user_id,
                        a.session_id,
                        a.timestamp,
                        a.step,
                        a.action_type,
                        a.item_ref or "",
                        "|".join(a.impressions) if a.impressions else "",
                    )
                )
    finally:
        stream.close()
        if raw is not None:
            raw.close()


def write_truth(truth: Mapping[str, str], path: str | Path) -> None:
    """Write a hidden-target map as CSV ``session_id,item_id``."""
    with open(path, "w", encoding="utf-8", newline="") as stream:
        writer = csv.writer(stream)
        writer.writerow(("session_id", "item_id"))
        for sid in sorted(truth):
            writer.writerow((sid, truth[sid]))


def read_truth(path: str | Path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8", newline="") as stream:
        reader = csv.reader(stream)
        header = next(reader, None)
        if header != ["session_id", "item_id"]:
            raise ParseError("expected header 'session_id,item_id'", 1)
        return {row[0]: row[1] for row in reader if row}


# ---------------------------------------------------------------------------
# Corpus transforms
# ---------------------------------------------------------------------------


def filter_bookable_sessions(corpus: SessionCorpus) -> SessionCorpus:
    """Keep only sessions that contain at least one clickout action."""
    if corpus.role is not Role.TRAIN:
        raise ValidationError("filter_bookable_sessions expects a TRAIN corpus")
    kept = {
        sid: acts
        for sid, acts in corpus.sessions.items()
        if any(a.is_clickout for a in acts)
    }
    dropped = len(corpus.sessions) - len(kept)
    if dropped:
        log.info("dropped %d sessions without a clickout (%d kept)", dropped, len(kept))
    return SessionCorpus(
        sessions=kept, item_vocabulary=_vocabulary(kept), role=corpus.role
    )


def hide_test_targets(
    corpus: SessionCorpus,
) -> tuple[SessionCorpus, dict[str, str]]:
    """Blank the final clickout's item of every test session.

    Returns the blinded corpus plus the truth map session_id -> hidden item.
    The impression list of the blanked clickout is retained, since it is the
    candidate set the ranker must reorder.
    """
    if corpus.role is not Role.TEST:
        raise ValidationError("hide_test_targets expects a TEST corpus")
    blinded: dict[str, tuple[Action, ...]] = {}
    truth: dict[str, str] = {}
    for sid, acts in corpus.sessions.items():
        target_idx = _last_clickout_index(acts)
        if target_idx is None:
            raise ValidationError(f"session {sid}: no clickout to hide")
        target = acts[target_idx]
        if target.item_ref is None:
            raise ValidationError(
                f"session {sid}: final clickout has no revealed item"
            )
        truth[sid] = target.item_ref
        hidden = replace(target, item_ref=None)
        blinded[sid] = acts[:target_idx] + (hidden,) + acts[target_idx + 1 :]
    return (
        SessionCorpus(
            sessions=blinded, item_vocabulary=_vocabulary(blinded), role=corpus.role
        ),
        truth,
    )


def _last_clickout_index(acts: Sequence[Action]) -> int | None:
    for idx in range(len(acts) - 1, -1, -1):
        if acts[idx].is_clickout:
            return idx
    return None


def prepare_holdout(
    corpus: SessionCorpus,
) -> tuple[SessionCorpus, dict[str, str], int]:
    """Turn any clickout-bearing corpus into a blinded holdout set.

    Sessions without a hideable final clickout are dropped rather than
    rejected, which is what evaluation over an arbitrary split needs.
    Returns (blinded corpus, truth map, number of dropped sessions).
    """
    usable: dict[str, tuple[Action, ...]] = {}
    for sid, acts in corpus.sessions.items():
        idx = _last_clickout_index(acts)
        if idx is not None and acts[idx].item_ref is not None:
            usable[sid] = acts
    dropped = len(corpus.sessions) - len(usable)
    holdout = SessionCorpus(
        sessions=usable, item_vocabulary=_vocabulary(usable), role=Role.TEST
    )
    blinded, truth = hide_test_targets(holdout)
    return blinded, truth, dropped


def subsample_sessions(
    corpus: SessionCorpus,
    fraction: float,
    seed: int = 0,
    stratify_by_length: bool = True,
) -> SessionCorpus:
    """Draw a deterministic session subsample.

    With ``stratify_by_length`` the draw preserves the session-length
    distribution: sessions are bucketed by action count and sampled
    independently, rounding each bucket's quota.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    rng = np.random.default_rng(seed)
    buckets: dict[int, list[str]] = {}
    for sid in sorted(corpus.sessions):
        key = len(corpus.sessions[sid]) if stratify_by_length else 0
        buckets.setdefault(key, []).append(sid)
    chosen: list[str] = []
    for key in sorted(buckets):
        sids = buckets[key]
        quota = int(round(fraction * len(sids)))
        if quota:
            picked = rng.choice(len(sids), size=quota, replace=False)
            chosen.extend(sids[i] for i in sorted(picked))
    kept = {sid: corpus.sessions[sid] for sid in chosen}
    return SessionCorpus(
        sessions=kept, item_vocabulary=_vocabulary(kept), role=corpus.role
    )


def split_by_time(
    corpus: SessionCorpus, holdout_fraction: float = 0.1
) -> tuple[SessionCorpus, SessionCorpus]:
    """Split off the chronologically last fraction of sessions.

    Ordering is by first-action timestamp with session id as tiebreaker;
    returns (head, tail) corpora with the original role.
    """
    if not 0.0 < holdout_fraction < 1.0:
        raise ValueError(f"holdout_fraction must be in (0, 1), got {holdout_fraction}")
    order = sorted(
        corpus.sessions, key=lambda sid: (corpus.sessions[sid][0].timestamp, sid)
    )
    n_tail = max(1, math.ceil(holdout_fraction * len(order))) if order else 0
    head_ids, tail_ids = order[: len(order) - n_tail], order[len(order) - n_tail :]

    def _sub(ids: list[str]) -> SessionCorpus:
        kept = {sid: corpus.sessions[sid] for sid in ids}
        return SessionCorpus(
            sessions=kept, item_vocabulary=_vocabulary(kept), role=corpus.role
        )

    return _sub(head_ids), _sub(tail_ids)
