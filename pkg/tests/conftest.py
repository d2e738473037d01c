"""Shared fixtures: tiny hand-built corpora used across the suite."""

import pytest

from simpop.sessions import CLICKOUT, Action, Role, SessionCorpus


def make_action(
    sid,
    step,
    item=None,
    kind="interaction item info",
    impressions=None,
    user=None,
    ts=None,
):
    return Action(
        session_id=sid,
        user_id=user or f"user_{sid}",
        step=step,
        action_type=kind,
        item_ref=item,
        impressions=tuple(impressions) if impressions else None,
        timestamp=ts if ts is not None else 1_500_000_000 + step,
    )


def clickout(sid, step, item, impressions, ts=None):
    return make_action(
        sid, step, item=item, kind=CLICKOUT, impressions=impressions, ts=ts
    )


@pytest.fixture
def toy_train():
    """Three sessions over items A..E; two sessions end in clickouts."""
    actions = [
        make_action("s1", 1, item="A"),
        make_action("s1", 2, item="B"),
        clickout("s1", 3, "C", ["A", "B", "C", "D"]),
        make_action("s2", 1, item="B"),
        make_action("s2", 2, item="C"),
        clickout("s2", 3, "D", ["B", "C", "D", "E"]),
        make_action("s3", 1, item="A"),
        make_action("s3", 2, item="E"),
    ]
    return SessionCorpus.from_actions(actions, Role.TRAIN)


@pytest.fixture
def toy_test():
    """Two test sessions, each ending with a revealed clickout to hide."""
    actions = [
        make_action("t1", 1, item="A"),
        clickout("t1", 2, "B", ["A", "B", "C"]),
        make_action("t2", 1, item="C"),
        make_action("t2", 2, item="D"),
        clickout("t2", 3, "E", ["C", "D", "E"]),
    ]
    return SessionCorpus.from_actions(actions, Role.TEST)
