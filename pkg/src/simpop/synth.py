"""Synthetic session corpora from a planted similarity-popularity world.

The generator plants items in a low-dimensional space, clustered the way
hotels cluster into destinations, with heavy-tailed popularities. A session
is a short random walk whose transition kernel decays with squared distance
and tilts mildly toward popular items, so co-occurrence reflects geometry.
The booked item is drawn near the walk's centroid, tilted by a per-item
attractiveness that correlates with popularity but is observable only
through clickouts. Impression lists mix globally attractive items,
same-cluster items, and uniform noise. Item metadata quantizes the latent
coordinates (destination plus grid cell) with noise tokens added.

Every structural assumption of the ranking model is planted explicitly, so
corpora from this generator exercise the full pipeline (ingestion,
co-occurrence estimation, embedding, ranking, evaluation) with a known
ground-truth signal, standing in for production logs at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .model import EmbeddingModel, ModelParams
from .sessions import CLICKOUT, Action, Role, SessionCorpus

_INTERACTION_KINDS = (
    "interaction item info",
    "interaction item image",
    "interaction item rating",
    "interaction item deals",
)

_EPOCH = 1_500_000_000


@dataclass(frozen=True)
class SynthConfig:
    n_items: int = 800
    n_clusters: int = 8
    dim: int = 2
    alpha: float = 2.0
    n_train_sessions: int = 4000
    n_test_sessions: int = 1000
    seed: int = 0
    mean_interactions: float = 8.0
    max_interactions: int = 16
    cluster_spread: float = 1.5
    cluster_separation: float = 12.0
    kappa_max: float = 8.0
    # session walk: p(i -> j) ~ kappa_j^pop_weight * (1 + d2/scale^2)^-alpha,
    # with excursions returning to the session's pivot item
    walk_alpha: float = 2.0
    walk_scale: float = 1.5
    walk_pop_weight: float = 0.0
    start_pop_weight: float = 2.0
    pivot_return: float = 0.5
    #: stray-interaction rate; the _end share ramps quadratically with step
    #: position, concentrating tab-hopping noise late in the session
    walk_teleport: float = 0.05
    walk_teleport_end: float = 0.35
    # booked item: w(j) ~ beta_j * (1 + d2(centroid, j)/scale^2)^-alpha
    target_alpha: float = 2.0
    target_scale: float = 0.7
    # attractiveness beta: kappa^exp * lognormal noise
    beta_kappa_exp: float = 0.35
    beta_noise_sigma: float = 0.8
    clickout_rate: float = 0.9
    n_impressions: int = 25
    #: distractor pools: (attractiveness-weighted, same-cluster, uniform)
    impression_mix: tuple[float, float, float] = (0.40, 0.15, 0.45)
    impression_pop_exp: float = 0.7
    metadata_cell: float = 3.0
    metadata_noise_tokens: int = 3
    metadata_noise_pool: int = 30

    def __post_init__(self):
        if self.n_items < self.n_impressions:
            raise ValueError("need at least as many items as impression slots")
        if abs(sum(self.impression_mix) - 1.0) > 1e-9:
            raise ValueError("impression_mix must sum to 1")


@dataclass(frozen=True)
class SynthWorld:
    """Planted ground truth: the model plus what only the logs reveal."""

    config: SynthConfig
    model: EmbeddingModel
    coords: np.ndarray
    kappa: np.ndarray
    attractiveness: np.ndarray
    clusters: np.ndarray
    ids: tuple[str, ...]
    metadata: dict[str, frozenset[str]]
    transition_cdf: np.ndarray
    cluster_members: dict[int, np.ndarray]


def build_world(config: SynthConfig) -> SynthWorld:
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(1)[0])
    n, dim = config.n_items, config.dim

    angles = np.linspace(0.0, 2.0 * math.pi, config.n_clusters, endpoint=False)
    centers = np.zeros((config.n_clusters, dim))
    centers[:, 0] = config.cluster_separation * np.cos(angles)
    if dim > 1:
        centers[:, 1] = config.cluster_separation * np.sin(angles)

    clusters = rng.integers(0, config.n_clusters, size=n)
    coords = centers[clusters] + rng.normal(0.0, config.cluster_spread, size=(n, dim))
    kappa = np.exp(rng.uniform(0.0, math.log(config.kappa_max), size=n))
    attractiveness = kappa**config.beta_kappa_exp * np.exp(
        rng.normal(0.0, config.beta_noise_sigma, size=n)
    )
    ids = tuple(f"i{k:05d}" for k in range(n))

    d2 = ((coords[:, None, :] - coords[None, :, :]) ** 2).sum(axis=2)
    transition = kappa[None, :] ** config.walk_pop_weight * (
        1.0 + d2 / config.walk_scale**2
    ) ** (-config.walk_alpha)
    np.fill_diagonal(transition, 0.0)
    transition_cdf = np.cumsum(transition, axis=1)

    members = {
        c: np.nonzero(clusters == c)[0] for c in range(config.n_clusters)
    }
    model = EmbeddingModel(
        ModelParams(alpha=config.alpha, dim=dim), list(ids), coords, kappa
    )
    metadata = _build_metadata(config, ids, coords, clusters, rng)
    return SynthWorld(
        config=config,
        model=model,
        coords=coords,
        kappa=kappa,
        attractiveness=attractiveness,
        clusters=clusters,
        ids=ids,
        metadata=metadata,
        transition_cdf=transition_cdf,
        cluster_members=members,
    )


def _build_metadata(config, ids, coords, clusters, rng) -> dict[str, frozenset[str]]:
    cell = config.metadata_cell
    pool = [f"tag{k:02d}" for k in range(config.metadata_noise_pool)]
    metadata = {}
    for k, item in enumerate(ids):
        tokens = {f"dst{int(clusters[k]):02d}"}
        tokens.add(f"gx{int(math.floor(coords[k, 0] / cell))}")
        if coords.shape[1] > 1:
            tokens.add(f"gy{int(math.floor(coords[k, 1] / cell))}")
        noise = rng.choice(len(pool), size=config.metadata_noise_tokens, replace=False)
        tokens.update(pool[i] for i in noise)
        metadata[item] = frozenset(tokens)
    return metadata


def _sample_from_cdf(cdf_row: np.ndarray, rng) -> int:
    u = rng.random() * cdf_row[-1]
    return int(np.searchsorted(cdf_row, u, side="right"))


def _walk(world: SynthWorld, rng, length: int) -> list[int]:
    """Pivot-return walk: excursions from a sticky item of interest."""
    cfg = world.config
    start_weights = world.kappa**cfg.start_pop_weight
    start_weights /= start_weights.sum()
    pivot = cur = int(rng.choice(cfg.n_items, p=start_weights))
    items = [pivot]
    for k in range(1, length):
        ramp = (k / (length - 1)) ** 2 if length > 1 else 0.0
        stray_p = cfg.walk_teleport + cfg.walk_teleport_end * ramp
        if stray_p and rng.random() < stray_p:
            # stray interaction anywhere in the catalog (tab-hopping noise)
            cur = int(rng.integers(cfg.n_items))
        elif cur != pivot and rng.random() < cfg.pivot_return:
            cur = pivot
        else:
            cur = _sample_from_cdf(world.transition_cdf[cur], rng)
        items.append(cur)
    return items


def _draw_target(world: SynthWorld, rng, visited: list[int]) -> int:
    # the booking follows the session's dominant interest: the centroid of
    # visits within the majority cluster (multiplicity-weighted, so the
    # pivot dominates and stray interactions don't drag the target)
    cfg = world.config
    session_clusters = world.clusters[visited]
    majority = int(np.bincount(session_clusters).argmax())
    core = [i for i in visited if world.clusters[i] == majority]
    centroid = world.coords[core].mean(axis=0)
    d2 = ((world.coords - centroid) ** 2).sum(axis=1)
    weights = world.attractiveness * (1.0 + d2 / cfg.target_scale**2) ** (
        -cfg.target_alpha
    )
    weights[list(set(visited))] = 0.0
    return int(rng.choice(cfg.n_items, p=weights / weights.sum()))


def _draw_impressions(world: SynthWorld, rng, target: int) -> list[int]:
    cfg = world.config
    n = cfg.n_items
    popular = world.attractiveness**cfg.impression_pop_exp
    popular = popular / popular.sum()
    cluster = np.zeros(n)
    members = world.cluster_members[int(world.clusters[target])]
    cluster[members] = 1.0 / len(members)
    mix = (
        cfg.impression_mix[0] * popular
        + cfg.impression_mix[1] * cluster
        + cfg.impression_mix[2] / n
    )
    mix[target] = 0.0
    mix /= mix.sum()
    distractors = rng.choice(n, size=cfg.n_impressions - 1, replace=False, p=mix)
    slots = np.concatenate(([target], distractors))
    return [int(i) for i in rng.permutation(slots)]


def _session_actions(
    world: SynthWorld, rng, sid: str, uid: str, t0: int, with_clickout: bool
) -> Iterator[Action]:
    cfg = world.config
    length = min(1 + int(rng.geometric(1.0 / cfg.mean_interactions)), cfg.max_interactions)
    visited = _walk(world, rng, length)
    step = 0
    for item in visited:
        step += 1
        yield Action(
            session_id=sid,
            user_id=uid,
            step=step,
            action_type=_INTERACTION_KINDS[int(rng.integers(len(_INTERACTION_KINDS)))],
            item_ref=world.ids[item],
            impressions=None,
            timestamp=t0 + step,
        )
    if with_clickout:
        target = _draw_target(world, rng, visited)
        impressions = _draw_impressions(world, rng, target)
        yield Action(
            session_id=sid,
            user_id=uid,
            step=step + 1,
            action_type=CLICKOUT,
            item_ref=world.ids[target],
            impressions=tuple(world.ids[i] for i in impressions),
            timestamp=t0 + step + 1,
        )


def generate_corpus(
    world: SynthWorld,
    n_sessions: int,
    role: Role,
    seed,
    clickout_rate: float | None = None,
    session_prefix: str = "s",
) -> SessionCorpus:
    """Generate a validated corpus of walk sessions from the planted world."""
    rng = np.random.default_rng(seed)
    rate = (
        clickout_rate
        if clickout_rate is not None
        else (1.0 if role is Role.TEST else world.config.clickout_rate)
    )
    actions: list[Action] = []
    for k in range(n_sessions):
        sid = f"{session_prefix}{k:06d}"
        uid = f"u_{session_prefix}{k:06d}"
        with_clickout = rng.random() < rate
        actions.extend(
            _session_actions(world, rng, sid, uid, _EPOCH + 100 * k, with_clickout)
        )
    return SessionCorpus.from_actions(actions, role)


@dataclass(frozen=True)
class SynthData:
    world: SynthWorld
    train: SessionCorpus
    test: SessionCorpus


def generate(config: SynthConfig) -> SynthData:
    """Planted world plus train/test corpora with independent seed streams."""
    world = build_world(config)
    root = np.random.SeedSequence(config.seed)
    _, train_seed, test_seed = root.spawn(3)
    train = generate_corpus(
        world,
        config.n_train_sessions,
        Role.TRAIN,
        seed=train_seed,
        session_prefix="s",
    )
    test = generate_corpus(
        world,
        config.n_test_sessions,
        Role.TEST,
        seed=test_seed,
        clickout_rate=1.0,
        session_prefix="t",
    )
    return SynthData(world=world, train=train, test=test)
