"""BanditMF: offline prediction model plus the online cold-start loop.

Offline: bias MF on the non-cold users, the full predicted matrix, k-means on
its rows, and one unified preference vector per cluster. Online: each cluster
is a bandit arm; every round the policy picks a cluster, the highest-rated
item of that cluster's unified vector not yet shown to the user is
recommended, and the normalized rating is the reward. After ``tau`` ratings
the user stops being cold and can be appended to the rating matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from banditmf import mf
from banditmf.bandit import RoundRecord, SessionTrace, make_policy, normalize_reward
from banditmf.bandit.policies import Policy
from banditmf.clustering import ClusterModel, kmeans, unified_ratings
from banditmf.dataset import RatingMatrix
from banditmf.errors import BanditMFError, ClusterExhausted, DatasetError
from banditmf.seeding import derive_seed, stage_rng
from banditmf.synthetic import PlantedPopulation

SKIP = "skip"
IMPUTE = "impute"


@dataclass(frozen=True, eq=False)
class OfflineModel:
    latent: mf.LatentModel
    clusters: ClusterModel
    unified: np.ndarray

    @property
    def k_clusters(self) -> int:
        return self.unified.shape[0]

    @property
    def num_items(self) -> int:
        return self.unified.shape[1]

    def item_order(self, cluster: int) -> np.ndarray:
        """Items by descending unified rating, ties to the lower index."""
        return np.argsort(-self.unified[cluster], kind="stable")


def offline_fit(
    train: RatingMatrix,
    sgd: mf.SgdConfig,
    k_clusters: int = 3,
    n_init: int = 20,
    seed: int = 0,
    max_iter: int = 300,
) -> OfflineModel:
    """Bias MF -> predicted matrix -> k-means -> unified vectors.

    ``seed`` is the master seed: the MF and k-means stages draw from streams
    derived from it, overriding ``sgd.seed``.
    """
    latent = mf.train_bias(train, replace(sgd, seed=derive_seed(seed, "mf")))
    predicted = mf.predict_full(latent)
    clusters = kmeans(predicted, k_clusters, n_init, max_iter, derive_seed(seed, "kmeans"))
    return OfflineModel(latent, clusters, unified_ratings(clusters))


@dataclass(frozen=True, eq=False)
class ColdUserEnvironment:
    """A simulated new user who answers with held-out true ratings.

    ``ratings`` has one entry per item; NaN marks items the user never rated.
    """

    ratings: np.ndarray
    rating_max: float

    def __post_init__(self):
        r = np.array(self.ratings, dtype=np.float64)
        known = r[~np.isnan(r)]
        if len(known) and (known.min() < 0 or known.max() > self.rating_max):
            raise BanditMFError("environment ratings must lie in [0, rating_max]")
        r.flags.writeable = False
        object.__setattr__(self, "ratings", r)

    def covers(self, item: int) -> bool:
        return not math.isnan(self.ratings[item])

    def rate(self, item: int) -> float | None:
        value = self.ratings[item]
        return None if math.isnan(value) else float(value)

    def normalized(self) -> np.ndarray:
        return self.ratings / self.rating_max


def cluster_expected_rewards(offline: OfflineModel, env: ColdUserEnvironment, horizon: int, missing: str = SKIP) -> np.ndarray:
    """Expected per-round reward of following each cluster alone for ``horizon`` ratings."""
    out = np.zeros(offline.k_clusters)
    for c in range(offline.k_clusters):
        got = []
        for item in offline.item_order(c):
            rating = env.rate(item)
            if rating is None:
                if missing != IMPUTE:
                    continue
                rating = float(np.clip(offline.unified[c, item], 0.0, env.rating_max))
            got.append(rating / env.rating_max)
            if len(got) == horizon:
                break
        out[c] = float(np.mean(got)) if got else 0.0
    return out


def session_mu_star(offline: OfflineModel, env: ColdUserEnvironment, horizon: int, missing: str = SKIP) -> float:
    """Expected per-round reward of the single best cluster for this user."""
    return float(cluster_expected_rewards(offline, env, horizon, missing).max())


@dataclass
class OnlineSession:
    user: object
    tau: int
    policy: Policy
    mu_star: float
    arm_means: np.ndarray
    recommended: list = field(default_factory=list)
    collected: list = field(default_factory=list)
    skipped: int = 0
    trace: SessionTrace = field(default_factory=SessionTrace)

    @property
    def complete(self) -> bool:
        return len(self.collected) >= self.tau

    @property
    def rewards(self) -> np.ndarray:
        return self.trace.rewards

    @property
    def cumulative_regret(self) -> float:
        return float(self.trace.regrets.sum())


def run_online_session(
    offline: OfflineModel,
    env: ColdUserEnvironment,
    policy: Policy,
    tau: int = 5,
    max_rounds: int | None = None,
    rng: np.random.Generator | None = None,
    user=0,
    missing: str = SKIP,
) -> OnlineSession:
    """Recommend to one cold user until ``tau`` ratings are collected.

    Items the environment cannot rate are skipped (``missing="skip"``: no
    policy update, round not counted) or rated with the cluster's predicted
    value (``missing="impute"``). ``max_rounds`` caps recommendation attempts.
    """
    if tau < 1:
        raise BanditMFError("tau must be >= 1")
    if max_rounds is None:
        max_rounds = offline.num_items
    if max_rounds < tau:
        raise BanditMFError("max_rounds must be >= tau")
    if missing not in (SKIP, IMPUTE):
        raise BanditMFError(f"unknown missing-rating mode {missing!r}")
    if policy.n_arms != offline.k_clusters:
        raise BanditMFError("policy arm count must equal the number of clusters")
    rng = rng if rng is not None else np.random.default_rng(0)

    arm_means = cluster_expected_rewards(offline, env, tau, missing)
    mu_star = float(arm_means.max())
    session = OnlineSession(user, tau, policy, mu_star, arm_means)
    orders = [offline.item_order(c) for c in range(offline.k_clusters)]
    cursor = [0] * offline.k_clusters
    shown = np.zeros(offline.num_items, dtype=bool)

    attempts = 0
    t = 1
    while len(session.collected) < tau and attempts < max_rounds:
        attempts += 1
        arm = policy.select_arm(t, rng)
        order = orders[arm]
        while cursor[arm] < len(order) and shown[order[cursor[arm]]]:
            cursor[arm] += 1
        if cursor[arm] == len(order):
            raise ClusterExhausted(f"cluster {arm} has no item left for user {user}")
        item = int(order[cursor[arm]])
        shown[item] = True
        session.recommended.append(item)

        rating = env.rate(item)
        if rating is None:
            if missing == SKIP:
                session.skipped += 1
                continue
            rating = float(np.clip(offline.unified[arm, item], 0.0, env.rating_max))
        reward = normalize_reward(rating, env.rating_max)
        expected = float(arm_means[arm])
        session.trace.append(RoundRecord(t, arm, item, rating, reward, expected, max(mu_star - expected, 0.0)))
        session.collected.append((item, rating))
        # The user was still cold when this rating arrived, so the policy learns from it.
        policy.update(arm, reward)
        t += 1
    return session


def dcg(rewards: Sequence[float]) -> float:
    """``r_1 + sum_{t>=2} r_t / log2(t)``."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or len(r) < 1:
        raise BanditMFError("dcg needs at least one reward")
    if len(r) == 1:
        return float(r[0])
    return float(r[0] + np.sum(r[1:] / np.log2(np.arange(2, len(r) + 1))))


def ideal_dcg(env: ColdUserEnvironment, horizon: int) -> float:
    """DCG of the user's ``horizon`` best achievable rewards, best first."""
    values = env.normalized()
    values = np.sort(values[~np.isnan(values)])[::-1][:horizon]
    if not len(values):
        raise BanditMFError("environment rates no item")
    return dcg(values)


def ndcg(sessions: Sequence, ideal: Sequence[float]) -> float:
    """Mean over users of ``DCG(u) / DCG*(u)``.

    ``sessions`` holds :class:`OnlineSession` objects or plain reward
    sequences; ``ideal`` the matching ``DCG*`` values.
    """
    if len(sessions) != len(ideal) or not len(sessions):
        raise BanditMFError("need one ideal DCG per session")
    total = 0.0
    for s, best in zip(sessions, ideal):
        if not best > 0:
            raise BanditMFError("ideal DCG must be positive")
        rewards = s.rewards if isinstance(s, OnlineSession) else s
        total += dcg(rewards) / best
    return total / len(sessions)


def append_user(matrix: RatingMatrix, collected: Sequence[tuple[int, float]], user_id=None) -> RatingMatrix:
    """Add the collected preferences as a new user row."""
    if not collected:
        raise DatasetError("no collected ratings to append")
    items = [int(i) for i, _ in collected]
    if len(set(items)) != len(items):
        raise DatasetError("duplicate item in collected ratings")
    if min(items) < 0 or max(items) >= matrix.num_items:
        raise DatasetError("collected item index out of range")
    ratings = [float(r) for _, r in collected]
    u = matrix.num_users
    user_ids = matrix.user_ids + ((str(user_id) if user_id is not None else f"new-{u}"),) if matrix.user_ids else ()
    return RatingMatrix(
        u + 1,
        matrix.num_items,
        np.concatenate([matrix.users, np.full(len(items), u)]),
        np.concatenate([matrix.items, items]),
        np.concatenate([matrix.ratings, ratings]),
        max(matrix.rating_max, max(ratings)),
        user_ids,
        matrix.item_ids,
    )


# -- simulation ------------------------------------------------------------


@dataclass(frozen=True)
class SimulationConfig:
    policies: tuple = ("ts", "ucb", "egreedy")
    k_clusters: int = 3
    n_init: int = 20
    max_iter: int = 300
    tau: int = 5
    max_rounds: int | None = None
    epsilon: float = 0.1
    ucb_c: float = 1.0
    missing: str = SKIP
    sgd: mf.SgdConfig = field(default_factory=lambda: mf.SgdConfig(k=2, learning_rate=0.01, iterations=200))


@dataclass(frozen=True)
class SessionSummary:
    policy: str
    user: object
    cumulative_regret: float
    ndcg: float
    session: OnlineSession = field(repr=False)


@dataclass
class SimulationResult:
    sessions: list = field(default_factory=list)

    def summary(self, policy: str) -> tuple[float, float]:
        rows = [s for s in self.sessions if s.policy == policy]
        if not rows:
            raise BanditMFError(f"no sessions for policy {policy!r}")
        return (
            float(np.mean([s.cumulative_regret for s in rows])),
            float(np.mean([s.ndcg for s in rows])),
        )


def holdout_users(matrix: RatingMatrix, n_new: int, rng: np.random.Generator, min_ratings: int = 1):
    """Hold out whole user rows as simulated new users.

    Returns the training matrix over the remaining users (same item space)
    and one environment per held-out user.
    """
    counts = np.bincount(matrix.users, minlength=matrix.num_users)
    eligible = np.flatnonzero(counts >= min_ratings)
    if n_new < 1 or n_new >= len(eligible) or n_new >= matrix.num_users:
        raise BanditMFError(f"cannot hold out {n_new} users ({len(eligible)} eligible)")
    new = np.sort(rng.choice(eligible, size=n_new, replace=False))
    is_new = np.zeros(matrix.num_users, dtype=bool)
    is_new[new] = True
    keep = np.flatnonzero(~is_new)
    remap = np.full(matrix.num_users, -1)
    remap[keep] = np.arange(len(keep))
    mask = ~is_new[matrix.users]
    train = RatingMatrix(
        len(keep),
        matrix.num_items,
        remap[matrix.users[mask]],
        matrix.items[mask],
        matrix.ratings[mask],
        matrix.rating_max,
        tuple(matrix.user_ids[u] for u in keep) if matrix.user_ids else (),
        matrix.item_ids,
    )
    envs = []
    for u in new:
        row = np.full(matrix.num_items, np.nan)
        sel = matrix.users == u
        row[matrix.items[sel]] = matrix.ratings[sel]
        envs.append(ColdUserEnvironment(row, matrix.rating_max))
    labels = [matrix.user_ids[u] if matrix.user_ids else str(u) for u in new]
    return train, envs, labels


def planted_setup(population: PlantedPopulation, n_new: int, density: float, rng: np.random.Generator):
    """Training view of the population minus ``n_new`` users whose full rows are hidden."""
    m = len(population.ratings)
    if not 1 <= n_new < m:
        raise BanditMFError(f"cannot hold out {n_new} of {m} users")
    new = np.sort(rng.choice(m, size=n_new, replace=False))
    keep = np.setdiff1d(np.arange(m), new)
    train = population.observed(rng, density, keep)
    envs = [ColdUserEnvironment(population.ratings[u], population.rating_max) for u in new]
    return train, envs, [str(u) for u in new]


def simulate(
    train: RatingMatrix,
    envs: Sequence[ColdUserEnvironment],
    cfg: SimulationConfig,
    seed: int,
    user_labels: Sequence | None = None,
    offline: OfflineModel | None = None,
) -> SimulationResult:
    """Fit the offline model once, then run one session per (policy, user)."""
    if offline is None:
        offline = offline_fit(train, cfg.sgd, cfg.k_clusters, cfg.n_init, seed, cfg.max_iter)
    labels = list(user_labels) if user_labels is not None else [str(i) for i in range(len(envs))]
    result = SimulationResult()
    for name in cfg.policies:
        for idx, env in enumerate(envs):
            policy = make_policy(name, offline.k_clusters, cfg.epsilon, cfg.ucb_c)
            rng = stage_rng(seed, "session", name, idx)
            session = run_online_session(offline, env, policy, cfg.tau, cfg.max_rounds, rng, labels[idx], cfg.missing)
            if not len(session.trace):
                raise BanditMFError(f"user {labels[idx]} rated none of the recommended items")
            score = dcg(session.rewards) / ideal_dcg(env, len(session.trace))
            result.sessions.append(SessionSummary(name, labels[idx], session.cumulative_regret, score, session))
    return result
