"""Planted-structure generators for experiments and tests.

Each generator returns the observable data together with the ground truth
it was built from, so checks can compare against the planted structure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from banditmf.dataset import RatingMatrix, ReplayLog, dense_to_matrix


def planted_rating_matrix(
    rng: np.random.Generator,
    num_users: int = 25,
    num_items: int = 100,
    k: int = 2,
    density: float = 0.3,
    mu: float = 3.0,
    user_bias_sd: float = 0.6,
    item_bias_sd: float = 0.6,
    factor_sd: float = 0.5,
    noise_sd: float = 0.3,
    rating_min: float = 1.0,
    rating_max: float = 5.0,
) -> tuple[RatingMatrix, np.ndarray]:
    """Sparse ratings from ``mu + b_u + b_i + p_u.q_i + noise``, clipped to range.

    Every user and every item keeps at least one observed cell. Returns the
    matrix and the full noiseless-but-clipped truth grid.
    """
    p = rng.normal(0, factor_sd, (num_users, k))
    q = rng.normal(0, factor_sd, (num_items, k))
    bu = rng.normal(0, user_bias_sd, num_users)
    bi = rng.normal(0, item_bias_sd, num_items)
    truth = mu + bu[:, None] + bi[None, :] + p @ q.T
    noisy = np.clip(truth + rng.normal(0, noise_sd, truth.shape), rating_min, rating_max)
    mask = rng.random(truth.shape) < density
    mask[np.arange(num_users), rng.integers(0, num_items, num_users)] = True
    mask[rng.integers(0, num_users, num_items), np.arange(num_items)] = True
    grid = np.where(mask, noisy, 0.0)
    return dense_to_matrix(grid, rating_max), np.clip(truth, rating_min, rating_max)


@dataclass(frozen=True, eq=False)
class PlantedPopulation:
    """Users drawn from a few preference prototypes.

    ``ratings`` is the full ``num_users x num_items`` truth (every cell
    rated), ``labels`` the prototype each user came from.
    """

    ratings: np.ndarray
    labels: np.ndarray
    prototypes: np.ndarray
    rating_max: float

    def observed(self, rng: np.random.Generator, density: float, users=None) -> RatingMatrix:
        """Random sparse view of the given users' rows (all users by default)."""
        rows = np.arange(len(self.ratings)) if users is None else np.asarray(users)
        sub = self.ratings[rows]
        mask = rng.random(sub.shape) < density
        mask[np.arange(len(rows)), rng.integers(0, sub.shape[1], len(rows))] = True
        u, i = np.nonzero(mask)
        return RatingMatrix(len(rows), sub.shape[1], u, i, sub[u, i], self.rating_max)


def planted_population(
    rng: np.random.Generator,
    num_users: int = 120,
    num_items: int = 60,
    weights=(0.5, 0.3, 0.2),
    high: float = 4.5,
    low: float = 1.5,
    noise_sd: float = 0.5,
    rating_max: float = 5.0,
) -> PlantedPopulation:
    """Cluster-structured users over items split into one block per prototype.

    Prototype ``c`` rates its own item block ``high`` and every other block
    ``low``; users add Gaussian noise and are clipped to ``[0, rating_max]``.
    Prototype membership is drawn with probabilities ``weights``.
    """
    weights = np.asarray(weights, dtype=np.float64)
    weights = weights / weights.sum()
    n_clusters = len(weights)
    block = np.arange(num_items) % n_clusters
    prototypes = np.where(block[None, :] == np.arange(n_clusters)[:, None], high, low)
    labels = rng.choice(n_clusters, size=num_users, p=weights)
    ratings = prototypes[labels] + rng.normal(0, noise_sd, (num_users, num_items))
    return PlantedPopulation(np.clip(ratings, 0.0, rating_max), labels, prototypes, rating_max)


@dataclass(frozen=True, eq=False)
class PlantedLinearLog:
    log: ReplayLog
    theta: np.ndarray
    owner: np.ndarray


def planted_linear_log(
    rng: np.random.Generator,
    num_rows: int = 10000,
    num_arms: int = 10,
    dim: int = 100,
    num_groups: int | None = None,
    good: float = 0.9,
    bad: float = 0.0,
    noise_sd: float = 0.0,
) -> PlantedLinearLog:
    """Uniformly logged Bernoulli rewards from disjoint linear arm models.

    Each context is the one-hot indicator of one of ``num_groups`` user
    groups (default ``dim``), optionally plus Gaussian noise on the unused
    coordinates. Every group is owned by one arm, assigned evenly at random.
    Arm ``a`` clicks with probability ``theta_a . x``: ``good`` on groups it
    owns and ``bad`` elsewhere. Logged actions are uniform over arms, so
    replay evaluation is unbiased.
    """
    n_groups = dim if num_groups is None else num_groups
    if n_groups > dim or n_groups < num_arms:
        raise ValueError("need num_arms <= num_groups <= dim")
    owner = rng.permutation(np.arange(n_groups) % num_arms)
    theta = np.zeros((num_arms, dim))
    theta[:, :n_groups] = np.where(owner[None, :] == np.arange(num_arms)[:, None], good, bad)

    group = rng.integers(0, n_groups, num_rows)
    contexts = rng.normal(0.0, noise_sd, (num_rows, dim)) if noise_sd > 0 else np.zeros((num_rows, dim))
    contexts[:, :n_groups] = 0.0
    contexts[np.arange(num_rows), group] = 1.0
    actions = rng.integers(0, num_arms, num_rows)
    prob = np.clip(np.einsum("td,td->t", theta[actions], contexts), 0.0, 1.0)
    rewards = (rng.random(num_rows) < prob).astype(np.int64)
    return PlantedLinearLog(ReplayLog(actions, rewards, contexts), theta, owner)
