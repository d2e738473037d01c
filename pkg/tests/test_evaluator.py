"""Metric definitions against hand-computed values, the evaluation protocol,
and the hyperparameter grid."""

from fractions import Fraction

import pytest

from simpop.baselines import RandomRanker
from simpop.errors import ValidationError
from simpop.evaluator import (
    SearchGrid,
    evaluate,
    grid_search,
    map_at_n,
    reciprocal_rank,
    write_grid_table,
    write_report,
)
from simpop.recommender import RankedList
from simpop.sessions import Role, SessionCorpus, hide_test_targets, split_by_time
from simpop.synth import SynthConfig, generate

from conftest import clickout, make_action


def ranked_of(*items):
    n = len(items)
    return RankedList(
        items=tuple((item, float(n - k)) for k, item in enumerate(items)),
        anchor=None,
        fallback_used=False,
    )


class LexicographicRanker:
    """Deterministic stand-in ranker: candidates in sorted order."""

    name = "lex"

    def rank(self, session, candidates, t):
        ordered = sorted(dict.fromkeys(candidates))
        return ranked_of(*ordered[:t])


class TestReciprocalRank:
    def test_first_position_is_one(self):
        assert reciprocal_rank(ranked_of("hit", "b", "c"), "hit") == 1.0

    def test_last_position_of_length_t(self):
        ranked = ranked_of(*[f"c{k}" for k in range(7)], "hit")
        assert reciprocal_rank(ranked, "hit") == pytest.approx(1 / 8)

    def test_absent_truth_is_zero(self):
        assert reciprocal_rank(ranked_of("a", "b"), "missing") == 0.0


class TestMapAtN:
    def test_inside_cutoff_scales_by_n(self):
        ranked = ranked_of("a", "hit", "c")
        assert map_at_n(ranked, "hit", 3) == pytest.approx(1 / 3)

    def test_outside_cutoff_is_zero(self):
        ranked = ranked_of("a", "hit")
        assert map_at_n(ranked, "hit", 1) == 0.0

    def test_top_one_hit(self):
        assert map_at_n(ranked_of("hit"), "hit", 1) == 1.0

    def test_bounded_by_one_over_n(self):
        ranked = ranked_of("hit", "b")
        for n in (1, 2, 3, 10):
            assert map_at_n(ranked, "hit", n) <= 1 / n

    def test_rejects_bad_cutoff(self):
        with pytest.raises(ValueError):
            map_at_n(ranked_of("a"), "a", 0)


def three_session_fixture():
    """Hand-built corpus whose lexicographic reranking has known ranks.

    Session u1: impressions c1..c5, truth c1 -> rank 1
    Session u2: impressions c1..c5, truth c2 -> rank 2
    Session u3: impressions c1..c5, truth c4 -> rank 4
    """
    imps = ["c1", "c2", "c3", "c4", "c5"]
    actions = [
        make_action("u1", 1, item="c3"),
        clickout("u1", 2, "c1", imps),
        make_action("u2", 1, item="c3"),
        clickout("u2", 2, "c2", imps),
        make_action("u3", 1, item="c3"),
        clickout("u3", 2, "c4", imps),
    ]
    corpus = SessionCorpus.from_actions(actions, Role.TEST)
    return hide_test_targets(corpus)


class TestEvaluateProtocol:
    def test_hand_computed_aggregates(self):
        blinded, truth = three_session_fixture()
        report = evaluate(LexicographicRanker(), blinded, truth)
        # ranks are 1, 2, 4
        assert report.mrr == pytest.approx(float(Fraction(1, 1) + Fraction(1, 2) + Fraction(1, 4)) / 3)
        assert report.map_at[1] == pytest.approx(float(Fraction(1, 3)))
        assert report.map_at[3] == pytest.approx(float(Fraction(2, 3)) / 3)
        assert report.map_at[5] == pytest.approx(float(Fraction(3, 3)) / 5)
        assert report.map_at[10] == pytest.approx(float(Fraction(3, 3)) / 10)
        assert report.n_sessions == 3
        assert report.n_skipped == 0
        assert dict(report.per_session) == {"u1": 1, "u2": 2, "u3": 4}

    def test_perfect_ranker_reaches_upper_bounds(self):
        blinded, truth = three_session_fixture()

        class Oracle:
            name = "oracle"

            def rank(self, session, candidates, t):
                sid = session[0].session_id
                rest = [c for c in candidates if c != truth[sid]]
                return ranked_of(truth[sid], *rest[: t - 1])

        report = evaluate(Oracle(), blinded, truth)
        assert report.mrr == 1.0
        assert report.map_at[1] == 1.0

    def test_truth_missing_from_impressions_is_retained_miss(self):
        imps = ["c1", "c2"]
        corpus = SessionCorpus.from_actions(
            [clickout("u1", 1, "c1", imps)], Role.TEST
        )
        blinded, truth = hide_test_targets(corpus)
        truth["u1"] = "not_shown"
        report = evaluate(LexicographicRanker(), blinded, truth)
        assert report.n_sessions == 1
        assert report.mrr == 0.0
        assert report.per_session == (("u1", None),)

    def test_sessions_without_truth_are_skipped(self):
        blinded, truth = three_session_fixture()
        del truth["u2"]
        report = evaluate(LexicographicRanker(), blinded, truth)
        assert report.n_sessions == 2
        assert report.n_skipped == 1

    def test_deterministic_reports(self):
        blinded, truth = three_session_fixture()
        a = evaluate(LexicographicRanker(), blinded, truth)
        b = evaluate(LexicographicRanker(), blinded, truth)
        assert a == b

    def test_mrr_at_least_map_at_one(self):
        blinded, truth = three_session_fixture()
        report = evaluate(LexicographicRanker(), blinded, truth)
        assert report.mrr >= report.map_at[1]

    def test_random_ranker_near_analytic_expectation(self):
        # over 25 candidates the expected reciprocal rank is H_25/25
        n_cands, n_sessions = 25, 10_000
        imps = [f"c{k:02d}" for k in range(n_cands)]
        actions = []
        for s in range(n_sessions):
            sid = f"s{s:05d}"
            actions.append(make_action(sid, 1, item="c00"))
            actions.append(clickout(sid, 2, imps[s % n_cands], imps))
        corpus = SessionCorpus.from_actions(actions, Role.TEST)
        blinded, truth = hide_test_targets(corpus)
        report = evaluate(RandomRanker(seed=123), blinded, truth)
        expected = sum(1.0 / r for r in range(1, n_cands + 1)) / n_cands
        assert report.mrr == pytest.approx(expected, abs=0.01)


class TestReportExport:
    def test_csv_layout(self, tmp_path):
        blinded, truth = three_session_fixture()
        report = evaluate(LexicographicRanker(), blinded, truth)
        path = tmp_path / "report.csv"
        write_report(report, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "ranker,sessions,skipped,MRR,MAP@1,MAP@3,MAP@5,MAP@10"
        assert lines[1].startswith("lex,3,0,0.583333")
        assert "session_id,rank" in lines
        assert lines[-1] == "u3,4"

    def test_export_is_deterministic(self, tmp_path):
        blinded, truth = three_session_fixture()
        report = evaluate(LexicographicRanker(), blinded, truth)
        write_report(report, tmp_path / "a.csv")
        write_report(report, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


@pytest.fixture(scope="module")
def small_world():
    config = SynthConfig(
        n_items=120,
        n_clusters=4,
        n_train_sessions=400,
        n_test_sessions=0,
        seed=5,
        mean_interactions=5.0,
        kappa_max=6.0,
    )
    data = generate(config)
    return split_by_time(data.train, 0.25)


class TestGridSearch:
    def test_single_cell_grid(self, small_world):
        train, validation = small_world
        grid = SearchGrid(dims=(4,), lambdas=(0.01,), alphas=(2.0,))
        best, table = grid_search(
            train, validation, grid=grid, max_iterations=60, min_sessions=2
        )
        assert len(table) == 1
        assert best.params.dim == 4
        assert not table[0].failed

    def test_full_table_row_count_and_tie_rule(self, small_world):
        train, validation = small_world
        grid = SearchGrid(dims=(2, 4), lambdas=(0.1, 0.01), alphas=(2.0,))
        best, table = grid_search(
            train, validation, grid=grid, max_iterations=40
        )
        assert len(table) == 4
        mrrs = [c.mrr for c in table]
        top = max(mrrs)
        # ties break toward smaller dim, then larger lambda
        contenders = [c for c in table if c.mrr == top]
        expected = min(contenders, key=lambda c: (c.dim, -c.lam, c.alpha))
        assert (best.params.dim, best.params.lam, best.params.alpha) == (
            expected.dim,
            expected.lam,
            expected.alpha,
        )

    def test_overlapping_split_rejected(self, small_world):
        train, _ = small_world
        with pytest.raises(ValidationError):
            grid_search(train, train)

    def test_table_export(self, small_world, tmp_path):
        train, validation = small_world
        grid = SearchGrid(dims=(2,), lambdas=(0.01,), alphas=(2.0, 3.0))
        _, table = grid_search(train, validation, grid=grid, max_iterations=30)
        path = tmp_path / "grid.csv"
        write_grid_table(table, path)
        lines = path.read_text().splitlines()
        assert len(lines) == 3
        assert lines[0].startswith("dim,lambda,alpha,seed,mrr")
