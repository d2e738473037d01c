"""Coordinate fitting by regularized squared-distance least squares.

Given target squared distances t_ij over a sparse pair set P, the fit
minimizes

    f(x) = sum_{(i,j) in P} (|x^i - x^j|^2 - t_ij)^2 + lam * sum_i |x^i|^2

whose gradient at item i is

    df/dx^i = sum_{pairs containing i} 4 (x^i - x^j)(|x^i - x^j|^2 - t_ij)
              + 2 lam x^i.

The objective is non-convex, so only a local minimum is found and the start
point matters: an all-equal initialization (e.g. all zeros) is a stationary
point with exactly zero gradient, so coordinates must be randomized. Descent
is limited-memory quasi-Newton (two-loop recursion) with Armijo backtracking,
degrading to plain gradient steps whenever no valid curvature pairs are held.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .affinity import AffinityGraph
from .errors import DivergenceError, MissingItemError, ValidationError
from .model import EmbeddingModel, ModelParams, derive_squared_distance

_ARMIJO_C1 = 1e-4
_MAX_BACKTRACKS = 60
_CURVATURE_EPS = 1e-10


@dataclass(frozen=True)
class FitConfig:
    """Knobs for one embedding fit; the tolerance is relative to the
    initial gradient norm."""

    params: ModelParams
    seed: int = 0
    init_scale: float = 1.0
    max_iterations: int = 500
    gradient_tolerance: float = 1e-4
    memory: int = 10

    def __post_init__(self):
        if not self.init_scale > 0:
            raise ValueError("init_scale must be > 0")
        if not self.gradient_tolerance > 0:
            raise ValueError("gradient_tolerance must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.memory < 1:
            raise ValueError("memory must be >= 1")


@dataclass
class FitTrace:
    """Objective/gradient history over accepted iterates."""

    objectives: list[float] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    iterations: int = 0
    final_grad_norm: float = float("nan")
    wall_time_s: float = 0.0
    converged: bool = False
    stop_reason: str = ""


def objective(
    coords: Mapping[str, Sequence[float]],
    targets: Mapping[tuple[str, str], float],
    lam: float,
) -> float:
    """Evaluate f at a coordinate assignment given sparse distance targets."""
    total = 0.0
    for (i, j), t in targets.items():
        diff = _coord(coords, i) - _coord(coords, j)
        total += (float(np.dot(diff, diff)) - t) ** 2
    reg = sum(float(np.dot(x, x)) for x in map(np.asarray, coords.values()))
    return total + lam * reg


def gradient(
    coords: Mapping[str, Sequence[float]],
    targets: Mapping[tuple[str, str], float],
    lam: float,
) -> dict[str, np.ndarray]:
    """Analytic gradient of ``objective``, one vector per item."""
    grads = {item: 2.0 * lam * _coord(coords, item) for item in coords}
    for (i, j), t in targets.items():
        diff = _coord(coords, i) - _coord(coords, j)
        pull = 4.0 * diff * (float(np.dot(diff, diff)) - t)
        grads[i] = grads[i] + pull
        grads[j] = grads[j] - pull
    return grads


def _coord(coords: Mapping[str, Sequence[float]], item: str) -> np.ndarray:
    try:
        return np.asarray(coords[item], dtype=np.float64)
    except KeyError:
        raise MissingItemError(f"no coordinates for item {item!r}") from None


def build_targets(
    graph: AffinityGraph, alpha: float
) -> tuple[list[str], np.ndarray, np.ndarray, np.ndarray]:
    """Invert every stored pair estimate into a squared-distance target.

    Returns (sorted item ids, pair index arrays ii/jj, target array), the
    vectorized problem layout the fitter consumes.
    """
    ids = graph.items()
    index = {item: k for k, item in enumerate(ids)}
    pairs = sorted(graph.pairs)
    ii = np.fromiter((index[i] for i, _ in pairs), dtype=np.intp, count=len(pairs))
    jj = np.fromiter((index[j] for _, j in pairs), dtype=np.intp, count=len(pairs))
    d2 = np.array(
        [
            derive_squared_distance(
                graph.pairs[pair],
                graph.popularity[pair[0]],
                graph.popularity[pair[1]],
                alpha,
            )
            for pair in pairs
        ],
        dtype=np.float64,
    )
    return ids, ii, jj, d2


class _PairObjective:
    """Vectorized f and grad-f over flattened coordinates."""

    def __init__(self, n: int, dim: int, ii, jj, d2, lam: float):
        self.n, self.dim = n, dim
        self.ii, self.jj, self.d2 = ii, jj, d2
        self.lam = lam

    def value(self, x: np.ndarray) -> float:
        coords = x.reshape(self.n, self.dim)
        diff = coords[self.ii] - coords[self.jj]
        r = np.einsum("ij,ij->i", diff, diff) - self.d2
        return float(r @ r + self.lam * np.einsum("ij,ij->", coords, coords))

    def value_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        coords = x.reshape(self.n, self.dim)
        diff = coords[self.ii] - coords[self.jj]
        r = np.einsum("ij,ij->i", diff, diff) - self.d2
        f = float(r @ r + self.lam * np.einsum("ij,ij->", coords, coords))
        pull = diff * (4.0 * r)[:, None]
        grad = np.zeros_like(coords)
        for d in range(self.dim):
            grad[:, d] = np.bincount(self.ii, pull[:, d], minlength=self.n)
            grad[:, d] -= np.bincount(self.jj, pull[:, d], minlength=self.n)
        grad += (2.0 * self.lam) * coords
        return f, grad.ravel()


def fit_embedding(
    graph: AffinityGraph,
    config: FitConfig,
    initial_coords: np.ndarray | None = None,
) -> tuple[EmbeddingModel, FitTrace]:
    """Fit item coordinates to the targets derived from an affinity graph.

    Coordinates start uniform in [-init_scale, init_scale] per component from
    the configured seed; ``initial_coords`` (an (n_items, dim) array aligned
    with the graph's sorted item order) overrides that for warm starts and
    diagnostics. Raises DivergenceError, with the partial trace attached, if
    the objective or gradient turns non-finite on an accepted iterate.
    """
    if graph.n_pairs == 0:
        raise ValidationError("cannot fit an empty affinity graph")
    params = config.params
    ids, ii, jj, d2 = build_targets(graph, params.alpha)
    n = len(ids)

    if initial_coords is None:
        rng = np.random.default_rng(config.seed)
        x0 = rng.uniform(-config.init_scale, config.init_scale, size=(n, params.dim))
    else:
        x0 = np.asarray(initial_coords, dtype=np.float64)
        if x0.shape != (n, params.dim):
            raise ValueError(
                f"initial_coords must have shape ({n}, {params.dim}), got {x0.shape}"
            )

    problem = _PairObjective(n, params.dim, ii, jj, d2, params.lam)
    x, trace = _minimize(problem, x0.ravel().copy(), config)

    kappa = np.array([graph.popularity[item] for item in ids], dtype=np.float64)
    model = EmbeddingModel(params, ids, x.reshape(n, params.dim), kappa)
    return model, trace


def _minimize(problem: _PairObjective, x: np.ndarray, config: FitConfig):
    start = time.perf_counter()
    trace = FitTrace()

    f, g = problem.value_and_grad(x)
    _require_finite(f, g, 0, trace)
    gnorm = float(np.linalg.norm(g))
    threshold = config.gradient_tolerance * gnorm
    trace.objectives.append(f)
    trace.grad_norms.append(gnorm)

    history: deque = deque(maxlen=config.memory)
    if gnorm <= threshold:
        # covers the all-equal start, where the gradient is exactly zero
        trace.converged = True
        trace.stop_reason = "stationary_start" if gnorm == 0.0 else "converged"
    else:
        trace.stop_reason = "max_iterations"
        for iteration in range(1, config.max_iterations + 1):
            direction = _two_loop_direction(g, history)
            slope = float(g @ direction)
            if slope >= 0.0:
                # quasi-Newton direction lost descent; fall back to steepest
                direction = -g
                slope = -float(g @ g)
            step, f_new = _backtrack(problem, x, f, direction, slope, not history)
            if step is None:
                trace.stop_reason = "line_search_failed"
                break
            x_new = x + step * direction
            f_new, g_new = problem.value_and_grad(x_new)
            trace.iterations = iteration
            _require_finite(f_new, g_new, iteration, trace)

            s = x_new - x
            y = g_new - g
            sy = float(s @ y)
            if sy > _CURVATURE_EPS * np.linalg.norm(s) * np.linalg.norm(y):
                history.append((s, y, 1.0 / sy))

            x, f, g = x_new, f_new, g_new
            gnorm = float(np.linalg.norm(g))
            trace.objectives.append(f)
            trace.grad_norms.append(gnorm)
            if gnorm <= threshold:
                trace.converged = True
                trace.stop_reason = "converged"
                break

    trace.final_grad_norm = gnorm
    trace.wall_time_s = time.perf_counter() - start
    return x, trace


def _two_loop_direction(g: np.ndarray, history: deque) -> np.ndarray:
    if not history:
        return -g
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(history):
        a = rho * float(s @ q)
        q -= a * y
        alphas.append(a)
    s_last, y_last, _ = history[-1]
    q *= float(s_last @ y_last) / float(y_last @ y_last)
    for (s, y, rho), a in zip(history, reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def _backtrack(problem, x, f, direction, slope, first_iteration: bool):
    """Armijo backtracking; returns (step, value) or (None, None)."""
    if first_iteration:
        # scale the very first steepest-descent step to unit length
        step = min(1.0, 1.0 / max(float(np.linalg.norm(direction)), 1e-12))
    else:
        step = 1.0
    for _ in range(_MAX_BACKTRACKS):
        f_new = problem.value(x + step * direction)
        if np.isfinite(f_new) and f_new <= f + _ARMIJO_C1 * step * slope:
            return step, f_new
        step *= 0.5
    return None, None


def _require_finite(f: float, g: np.ndarray, iteration: int, trace: FitTrace):
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise DivergenceError(
            "objective or gradient is not finite", iteration, trace=trace
        )


def write_trace(trace: FitTrace, path: str | Path) -> None:
    """Dump the per-iteration history as CSV."""
    with open(path, "w", encoding="utf-8", newline="") as out:
        out.write("iteration,objective,grad_norm\n")
        for k, (obj, gn) in enumerate(zip(trace.objectives, trace.grad_norms)):
            out.write(f"{k},{obj!r},{gn!r}\n")
