"""Similarity-popularity connection law and the trained model artifact.

Two items i, j with coordinates x^i, x^j and popularities k_i, k_j connect
with probability

    p = (1 + |x^i - x^j|^2 / (k_i k_j)) ** (-alpha)

so p grows with the popularity product at fixed distance and shrinks with
squared distance at fixed popularity. Only squared distances ever enter the
law, and its exact inverse recovers the squared distance a given probability
prescribes. Both directions live here, together with a Bernoulli-graph
sampler that treats the law generatively and a numerical monotonicity gate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import MissingItemError, ParseError, ValidationError

MODEL_FORMAT_HEADER = "simpop-model v1"


@dataclass(frozen=True)
class ModelParams:
    """Connection-law exponent, embedding dimension, and regularization."""

    alpha: float
    dim: int
    lam: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.alpha < 1:
            warnings.warn(
                f"alpha={self.alpha} < 1 weakens the distance penalty; "
                f"values >= 1 are the intended regime",
                stacklevel=2,
            )
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")


class EmbeddingModel:
    """Item coordinates and popularities under fixed ModelParams.

    Storage is columnar (an (n, D) coordinate matrix plus aligned popularity
    vector) so scoring can vectorize; item ids are kept sorted to make every
    derived artifact deterministic.
    """

    def __init__(
        self,
        params: ModelParams,
        ids: Sequence[str],
        coords: np.ndarray,
        kappa: np.ndarray,
    ):
        coords = np.asarray(coords, dtype=np.float64)
        kappa = np.asarray(kappa, dtype=np.float64)
        if coords.ndim != 2 or coords.shape != (len(ids), params.dim):
            raise ValidationError(
                f"coords must have shape ({len(ids)}, {params.dim}), "
                f"got {coords.shape}"
            )
        if kappa.shape != (len(ids),):
            raise ValidationError("kappa must align with ids")
        if not np.all(np.isfinite(coords)):
            raise ValidationError("coordinates must be finite")
        if not np.all(kappa > 0):
            raise ValidationError("popularities must be positive")
        order = np.argsort(np.asarray(ids, dtype=object))
        self.params = params
        self.ids: tuple[str, ...] = tuple(ids[int(k)] for k in order)
        if len(set(self.ids)) != len(self.ids):
            raise ValidationError("duplicate item ids")
        self.coords = coords[order]
        self.kappa = kappa[order]
        self._index = {item: k for k, item in enumerate(self.ids)}

    @classmethod
    def from_items(
        cls,
        params: ModelParams,
        items: Mapping[str, tuple[Sequence[float], float]],
    ) -> "EmbeddingModel":
        ids = sorted(items)
        coords = np.array([items[i][0] for i in ids], dtype=np.float64)
        kappa = np.array([items[i][1] for i in ids], dtype=np.float64)
        if coords.size == 0:
            coords = coords.reshape(0, params.dim)
        return cls(params, ids, coords, kappa)

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, item: str) -> bool:
        return item in self._index

    def index_of(self, item: str) -> int:
        try:
            return self._index[item]
        except KeyError:
            raise MissingItemError(f"item {item!r} not in model") from None

    def coords_of(self, item: str) -> np.ndarray:
        return self.coords[self.index_of(item)]

    def kappa_of(self, item: str) -> float:
        return float(self.kappa[self.index_of(item)])


def connection_probability(model: EmbeddingModel, i: str, j: str) -> float:
    """Probability that items i and j connect under the model's law."""
    xi, xj = model.coords_of(i), model.coords_of(j)
    d2 = float(np.dot(xi - xj, xi - xj))
    kk = model.kappa_of(i) * model.kappa_of(j)
    return _law(d2, kk, model.params.alpha)


def _law(d2: float, kappa_product: float, alpha: float) -> float:
    return (1.0 + d2 / kappa_product) ** (-alpha)


def connection_probabilities(
    model: EmbeddingModel, anchor: str, items: Sequence[str]
) -> np.ndarray:
    """Vectorized connection probabilities from ``anchor`` to ``items``."""
    a = model.index_of(anchor)
    idx = np.fromiter((model.index_of(i) for i in items), dtype=np.intp, count=len(items))
    diff = model.coords[idx] - model.coords[a]
    d2 = np.einsum("ij,ij->i", diff, diff)
    kk = model.kappa[idx] * model.kappa[a]
    return (1.0 + d2 / kk) ** (-model.params.alpha)


def derive_squared_distance(
    p: float, kappa_i: float, kappa_j: float, alpha: float
) -> float:
    """Invert the connection law: the squared distance that yields ``p``."""
    if not 0.0 < p <= 1.0:
        raise ValueError(f"connection probability must be in (0, 1], got {p}")
    if kappa_i <= 0 or kappa_j <= 0:
        raise ValueError("popularities must be positive")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return kappa_i * kappa_j * (p ** (-1.0 / alpha) - 1.0)


def generate_synthetic_network(
    model: EmbeddingModel, rng_seed: int
) -> list[tuple[str, str]]:
    """Sample a network by independent Bernoulli draws over unordered pairs.

    Pair order (lexicographic over sorted ids) and the seeded generator make
    the draw reproducible.
    """
    rng = np.random.default_rng(rng_seed)
    edges: list[tuple[str, str]] = []
    n = len(model)
    for a in range(n - 1):
        diff = model.coords[a + 1 :] - model.coords[a]
        d2 = np.einsum("ij,ij->i", diff, diff)
        kk = model.kappa[a + 1 :] * model.kappa[a]
        p = (1.0 + d2 / kk) ** (-model.params.alpha)
        hits = np.nonzero(rng.random(n - a - 1) < p)[0]
        edges.extend((model.ids[a], model.ids[a + 1 + int(h)]) for h in hits)
    return edges


@dataclass(frozen=True)
class RegimeReport:
    """Outcome of the monotonicity sanity gate over sampled model pairs."""

    pairs_checked: int
    violations: tuple[str, ...]

    @property
    def passed(self) -> bool:
        return not self.violations


def regime_check(model: EmbeddingModel, max_pairs: int = 200) -> RegimeReport:
    """Verify the law's monotone behavior numerically on model pairs.

    Checks, per sampled pair: doubling the popularity product raises p,
    doubling the squared distance lowers p, and raising alpha lowers p
    (all at d^2 > 0). Analytically no violation can exist; this gate catches
    numeric degradation on extreme magnitudes.
    """
    if len(model) == 0:
        raise ValidationError("regime_check expects a non-empty model")
    alpha = model.params.alpha
    violations: list[str] = []
    checked = 0
    for a, b in _pair_stream(len(model), max_pairs):
        diff = model.coords[a] - model.coords[b]
        d2 = float(np.dot(diff, diff))
        kk = float(model.kappa[a] * model.kappa[b])
        p = _law(d2, kk, alpha)
        checked += 1
        pair = f"({model.ids[a]}, {model.ids[b]})"
        if not 0.0 < p <= 1.0:
            violations.append(f"{pair}: p={p} outside (0, 1]")
            continue
        if d2 == 0.0:
            if p != 1.0:
                violations.append(f"{pair}: zero distance but p={p} != 1")
            continue
        if not _law(d2, 2.0 * kk, alpha) > p:
            violations.append(f"{pair}: p not increasing in popularity product")
        if not _law(2.0 * d2, kk, alpha) < p:
            violations.append(f"{pair}: p not decreasing in squared distance")
        if not _law(d2, kk, alpha + 1.0) < p:
            violations.append(f"{pair}: p not decreasing in alpha")
    return RegimeReport(pairs_checked=checked, violations=tuple(violations))


def _pair_stream(n: int, max_pairs: int) -> Iterator[tuple[int, int]]:
    emitted = 0
    for a in range(n - 1):
        for b in range(a + 1, n):
            if emitted >= max_pairs:
                return
            emitted += 1
            yield a, b


# ---------------------------------------------------------------------------
# Model file format: header line, then one line per item with full-precision
# decimal floats (repr round-trips exactly).
# ---------------------------------------------------------------------------


def write_model(model: EmbeddingModel, path: str | Path) -> None:
    p = model.params
    with open(path, "w", encoding="utf-8") as out:
        out.write(
            f"{MODEL_FORMAT_HEADER} dim={p.dim} alpha={p.alpha!r} lambda={p.lam!r}\n"
        )
        for k, item in enumerate(model.ids):
            coords = " ".join(repr(float(c)) for c in model.coords[k])
            out.write(f"{item}\t{float(model.kappa[k])!r}\t{coords}\n")


def read_model(path: str | Path) -> EmbeddingModel:
    with open(path, "r", encoding="utf-8") as stream:
        header = stream.readline().rstrip("\n")
        params = _parse_header(header, path)
        ids: list[str] = []
        coords: list[list[float]] = []
        kappa: list[float] = []
        for n, line in enumerate(stream, start=2):
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 3:
                raise ParseError(f"malformed model line in {path}", n)
            ids.append(fields[0])
            kappa.append(float(fields[1]))
            coords.append([float(tok) for tok in fields[2].split(" ")])
    matrix = np.array(coords, dtype=np.float64) if ids else np.empty((0, params.dim))
    return EmbeddingModel(params, ids, matrix, np.array(kappa, dtype=np.float64))


def _parse_header(header: str, path) -> ModelParams:
    parts = header.split(" ")
    if len(parts) != 5 or " ".join(parts[:2]) != MODEL_FORMAT_HEADER:
        raise ParseError(f"{path} is not a {MODEL_FORMAT_HEADER} file", 1)
    values: dict[str, str] = {}
    for token in parts[2:]:
        key, _, value = token.partition("=")
        values[key] = value
    try:
        return ModelParams(
            alpha=float(values["alpha"]),
            dim=int(values["dim"]),
            lam=float(values["lambda"]),
        )
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad model header {header!r}: {exc}", 1) from None
