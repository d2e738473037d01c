"""Offline evaluation: reciprocal-rank metrics and hyperparameter search.

Every test session contributes the rank of its hidden item within the
reranked impression list. The aggregate scores are

    MRR    = mean over sessions of 1 / rank         (0 on a miss)
    MAP@N  = mean over sessions of hit(N) / N

where hit(N) is 1 when the hidden item sits within the first N positions.
Note the 1/N scaling: MAP@N is bounded by 1/N, not 1.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .affinity import AffinityGraph, build_affinity_graph
from .baselines import Ranker
from .embedder import FitConfig, fit_embedding
from .errors import DivergenceError, SimpopError, ValidationError
from .model import ModelParams
from .recommender import NextItemRecommender, RankedList
from .sessions import SessionCorpus, prepare_holdout

log = logging.getLogger(__name__)

DEFAULT_MAP_CUTOFFS = (1, 3, 5, 10)


def reciprocal_rank(ranked: RankedList, truth: str) -> float:
    """1 / position of the truth item, 0 when it is absent from the list."""
    pos = ranked.rank_of(truth)
    return 1.0 / pos if pos is not None else 0.0


def map_at_n(ranked: RankedList, truth: str, n: int) -> float:
    """hit-within-top-n indicator divided by n (so the ceiling is 1/n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    pos = ranked.rank_of(truth)
    return 1.0 / n if pos is not None and pos <= n else 0.0


@dataclass(frozen=True)
class EvalReport:
    """Per-session ranks plus aggregate metrics for one ranker run."""

    ranker_name: str
    per_session: tuple[tuple[str, int | None], ...]
    mrr: float
    map_at: dict[int, float]
    n_sessions: int
    n_skipped: int
    hyperparameters: dict | None = None


def evaluate(
    ranker: Ranker,
    test: SessionCorpus,
    truth: Mapping[str, str],
    ns: Sequence[int] = DEFAULT_MAP_CUTOFFS,
    hyperparameters: dict | None = None,
) -> EvalReport:
    """Rerank each test session's impression list and aggregate the metrics.

    Sessions without a target clickout carrying impressions, or without an
    entry in the truth map, are skipped and counted separately. A truth item
    missing from its own impression list is a retained miss (rank None).
    """
    per_session: list[tuple[str, int | None]] = []
    rr_sum = 0.0
    hit_sums = {n: 0.0 for n in ns}
    skipped = 0
    for sid in sorted(test.sessions):
        actions = test.sessions[sid]
        target = _target_clickout(actions)
        if target is None or sid not in truth:
            skipped += 1
            continue
        candidates = list(target.impressions)
        ranked = ranker.rank(actions, candidates, len(candidates))
        rank = ranked.rank_of(truth[sid])
        per_session.append((sid, rank))
        if rank is not None:
            rr_sum += 1.0 / rank
            for n in ns:
                if rank <= n:
                    hit_sums[n] += 1.0
    n_eval = len(per_session)
    if skipped:
        log.info("skipped %d sessions without target or truth", skipped)
    return EvalReport(
        ranker_name=ranker.name,
        per_session=tuple(per_session),
        mrr=rr_sum / n_eval if n_eval else 0.0,
        map_at={n: hit_sums[n] / (n * n_eval) if n_eval else 0.0 for n in ns},
        n_sessions=n_eval,
        n_skipped=skipped,
        hyperparameters=hyperparameters,
    )


def _target_clickout(actions):
    for action in reversed(actions):
        if action.is_clickout and action.impressions:
            return action
    return None


def write_report(report: EvalReport, path: str | Path) -> None:
    """Write the summary block and the per-session ranks as CSV."""
    cutoffs = sorted(report.map_at)
    with open(path, "w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out)
        writer.writerow(
            ["ranker", "sessions", "skipped", "MRR"]
            + [f"MAP@{n}" for n in cutoffs]
        )
        writer.writerow(
            [report.ranker_name, report.n_sessions, report.n_skipped]
            + [f"{report.mrr:.6f}"]
            + [f"{report.map_at[n]:.6f}" for n in cutoffs]
        )
        writer.writerow([])
        writer.writerow(["session_id", "rank"])
        for sid, rank in report.per_session:
            writer.writerow([sid, "" if rank is None else rank])


# ---------------------------------------------------------------------------
# Grid search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SearchGrid:
    """Hyperparameter candidates; defaults are the standard tuning grid."""

    dims: tuple[int, ...] = (5, 10, 20)
    lambdas: tuple[float, ...] = (0.1, 0.01)
    alphas: tuple[float, ...] = (1.0, 2.0, 3.0)

    def cells(self) -> list[tuple[int, float, float]]:
        return [
            (d, lam, alpha)
            for d in self.dims
            for lam in self.lambdas
            for alpha in self.alphas
        ]


@dataclass
class GridCell:
    dim: int
    lam: float
    alpha: float
    seed: int
    mrr: float = math.nan
    iterations: int = 0
    objective: float = math.nan
    converged: bool = False
    failed: bool = False
    error: str = ""


@dataclass(frozen=True)
class _CellJob:
    graph: AffinityGraph
    holdout: SessionCorpus
    truth: dict[str, str]
    config: FitConfig


def _run_cell(job: _CellJob) -> GridCell:
    cfg = job.config
    cell = GridCell(
        dim=cfg.params.dim, lam=cfg.params.lam, alpha=cfg.params.alpha, seed=cfg.seed
    )
    try:
        model, trace = fit_embedding(job.graph, cfg)
    except DivergenceError as exc:
        cell.failed = True
        cell.error = str(exc)
        return cell
    ranker = NextItemRecommender(model, popularity=job.graph.popularity)
    report = evaluate(ranker, job.holdout, job.truth)
    cell.mrr = report.mrr
    cell.iterations = trace.iterations
    cell.objective = trace.objectives[-1]
    cell.converged = trace.converged
    return cell


def grid_search(
    train: SessionCorpus,
    validation: SessionCorpus,
    grid: SearchGrid | None = None,
    seeds: Sequence[int] = (0,),
    min_sessions: int = 2,
    max_pairs_per_item: int = 500,
    max_iterations: int = 500,
    gradient_tolerance: float = 1e-4,
    init_scale: float = 1.0,
    memory: int = 10,
    n_jobs: int = 1,
) -> tuple[FitConfig, list[GridCell]]:
    """Fit one embedding per grid cell and score validation MRR.

    Train and validation must be disjoint session sets. Each cell is fitted
    once per seed; a cell's row keeps its best seed. Failed (diverged) cells
    stay in the table with ``failed=True``. The best configuration is the
    highest validation MRR, ties broken toward smaller dimension, then larger
    regularization, then smaller alpha.
    """
    if set(train.sessions) & set(validation.sessions):
        raise ValidationError("train and validation sessions overlap")
    grid = grid or SearchGrid()
    if not seeds:
        raise ValueError("at least one seed is required")

    graph = build_affinity_graph(train, min_sessions, max_pairs_per_item)
    holdout, truth, dropped = prepare_holdout(validation)
    if dropped:
        log.info("grid search: %d validation sessions unusable", dropped)
    if holdout.n_sessions == 0:
        raise ValidationError("validation corpus has no usable sessions")

    jobs = [
        _CellJob(
            graph=graph,
            holdout=holdout,
            truth=truth,
            config=FitConfig(
                params=ModelParams(alpha=alpha, dim=dim, lam=lam),
                seed=seed,
                init_scale=init_scale,
                max_iterations=max_iterations,
                gradient_tolerance=gradient_tolerance,
                memory=memory,
            ),
        )
        for dim, lam, alpha in grid.cells()
        for seed in seeds
    ]

    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(job) for job in jobs]

    # one row per grid cell: the best seed wins
    by_cell: dict[tuple[int, float, float], GridCell] = {}
    for cell in results:
        key = (cell.dim, cell.lam, cell.alpha)
        best = by_cell.get(key)
        if best is None or _cell_score(cell) > _cell_score(best):
            by_cell[key] = cell
    table = [by_cell[(d, l, a)] for d, l, a in grid.cells()]

    usable = [c for c in table if not c.failed]
    if not usable:
        raise SimpopError("every grid cell failed")
    winner = min(usable, key=lambda c: (-c.mrr, c.dim, -c.lam, c.alpha, c.seed))
    best_config = FitConfig(
        params=ModelParams(alpha=winner.alpha, dim=winner.dim, lam=winner.lam),
        seed=winner.seed,
        init_scale=init_scale,
        max_iterations=max_iterations,
        gradient_tolerance=gradient_tolerance,
        memory=memory,
    )
    log.info(
        "grid search winner: dim=%d lambda=%g alpha=%g (MRR %.4f)",
        winner.dim,
        winner.lam,
        winner.alpha,
        winner.mrr,
    )
    return best_config, table


def _cell_score(cell: GridCell) -> float:
    return -math.inf if cell.failed else cell.mrr


def write_grid_table(table: Sequence[GridCell], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out)
        writer.writerow(
            ["dim", "lambda", "alpha", "seed", "mrr", "iterations",
             "objective", "converged", "failed", "error"]
        )
        for c in table:
            writer.writerow(
                [
                    c.dim,
                    repr(c.lam),
                    repr(c.alpha),
                    c.seed,
                    "" if math.isnan(c.mrr) else f"{c.mrr:.6f}",
                    c.iterations,
                    "" if math.isnan(c.objective) else repr(c.objective),
                    c.converged,
                    c.failed,
                    c.error,
                ]
            )
