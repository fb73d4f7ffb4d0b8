"""User-based collaborative filtering and the latent-vector item similarity path.

Targets are given as resolved ``(item_index, rating)`` pairs; use
``TargetUserInput.resolve`` to get them from titles or external ids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from banditmf import mf
from banditmf.dataset import RatingMatrix
from banditmf.errors import BanditMFError, InsufficientOverlap

MIN_OVERLAP = 2


@dataclass(frozen=True)
class SimilarityScore:
    other_user: int
    overlap: int
    value: float


@dataclass(frozen=True)
class Recommendation:
    item: int
    score: float
    rank: int


def _ranked(scores: dict[int, float], top_n: int) -> list[Recommendation]:
    order = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
    return [Recommendation(item, score, rank) for rank, (item, score) in enumerate(order, start=1)]


def pearson(a, b) -> float:
    """Pearson correlation over a co-rated set, means taken over that set.

    Returns 0 when either vector is constant.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise BanditMFError("pearson needs two equal-length vectors")
    if len(a) < MIN_OVERLAP:
        raise InsufficientOverlap(f"similarity undefined on {len(a)} co-rated items")
    da = a - a.mean()
    db = b - b.mean()
    saa = float(np.dot(da, da))
    sbb = float(np.dot(db, db))
    if saa == 0.0 or sbb == 0.0:
        return 0.0
    # One square root keeps pearson(a, a) == 1 exactly; the product commutes,
    # so the result is symmetric in (a, b).
    denom = math.sqrt(saa * sbb)
    if denom == 0.0 or not math.isfinite(denom):
        denom = math.sqrt(saa) * math.sqrt(sbb)
    value = float(np.dot(da, db)) / denom
    return min(1.0, max(-1.0, value))


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise BanditMFError("cosine needs two equal-length vectors")
    na = math.sqrt(float(np.dot(a, a)))
    nb = math.sqrt(float(np.dot(b, b)))
    if na == 0.0 or nb == 0.0:
        raise BanditMFError("cosine undefined for a zero vector")
    return min(1.0, max(-1.0, float(np.dot(a, b)) / (na * nb)))


def find_similar_users(matrix: RatingMatrix, target: Sequence[tuple[int, float]], top_groups: int) -> list[tuple[int, int]]:
    """Users sharing at least one target item, by overlap desc then user index."""
    if top_groups < 1:
        raise BanditMFError("top_groups must be >= 1")
    wanted = np.zeros(matrix.num_items, dtype=bool)
    wanted[[i for i, _ in target]] = True
    overlap = np.bincount(matrix.users[wanted[matrix.items]], minlength=matrix.num_users)
    users = np.flatnonzero(overlap)
    order = sorted(users.tolist(), key=lambda u: (-int(overlap[u]), u))
    return [(u, int(overlap[u])) for u in order[:top_groups]]


def user_similarities(matrix: RatingMatrix, target: Sequence[tuple[int, float]], candidates: Sequence[int]) -> list[SimilarityScore]:
    """Pearson similarity of each candidate to the target; overlap < 2 dropped."""
    mine = dict(target)
    out = []
    for u in candidates:
        theirs = matrix.user_ratings(u)
        shared = sorted(set(mine) & set(theirs))
        if len(shared) < MIN_OVERLAP:
            continue
        a = [mine[i] for i in shared]
        b = [theirs[i] for i in shared]
        out.append(SimilarityScore(int(u), len(shared), pearson(a, b)))
    return out


def weighted_scores(matrix: RatingMatrix, sims: Sequence[SimilarityScore], exclude=()) -> dict[int, float]:
    """``sum(sim * rating) / sum(sim)`` per item over the similar users who rated it."""
    excluded = set(exclude)
    num: dict[int, float] = {}
    den: dict[int, float] = {}
    for s in sims:
        for item, rating in matrix.user_ratings(s.other_user).items():
            if item in excluded:
                continue
            num[item] = num.get(item, 0.0) + s.value * rating
            den[item] = den.get(item, 0.0) + s.value
    return {i: num[i] / den[i] for i in num if den[i] != 0.0}


def recommend_user_based(
    matrix: RatingMatrix,
    target: Sequence[tuple[int, float]],
    top_n: int = 10,
    top_groups: int = 100,
) -> list[Recommendation]:
    if top_n < 1:
        raise BanditMFError("top_n must be >= 1")
    candidates = [u for u, _ in find_similar_users(matrix, target, top_groups)]
    sims = user_similarities(matrix, target, candidates)
    if not sims:
        raise InsufficientOverlap("insufficient overlap: no similar user shares two rated items")
    return _ranked(weighted_scores(matrix, sims, exclude=[i for i, _ in target]), top_n)


def recommend_hybrid(model: mf.LatentModel, matrix: RatingMatrix, user: int, top_n: int = 10) -> tuple[int, list[Recommendation]]:
    """Seed item = best predicted unrated item; rank other unrated items by
    cosine similarity of their latent vectors to the seed's.

    Items with an all-zero latent vector have no defined similarity and are left out.
    """
    if not 0 <= user < matrix.num_users:
        raise BanditMFError(f"user {user} out of range")
    if model.num_users != matrix.num_users or model.num_items != matrix.num_items:
        raise BanditMFError("model shape does not match the rating matrix")
    rated = matrix.user_ratings(user)
    if not rated:
        raise BanditMFError(f"user {user} has no observed rating")
    unrated = np.setdiff1d(np.arange(matrix.num_items), list(rated))
    if not len(unrated):
        raise BanditMFError(f"user {user} rated every item")
    predicted = mf.predict_full(model)[user, unrated]
    seed = int(unrated[int(np.argmax(predicted))])
    seed_vec = model.q[seed]
    if not np.any(seed_vec):
        raise BanditMFError(f"seed item {seed} has a zero latent vector")
    scores = {}
    for i in unrated:
        if i == seed or not np.any(model.q[i]):
            continue
        scores[int(i)] = cosine(model.q[i], seed_vec)
    return seed, _ranked(scores, top_n)
