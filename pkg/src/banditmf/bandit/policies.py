"""Context-free bandit policies over a fixed arm set.

All policies keep per-arm pull counts and running mean rewards; rewards must
lie in ``[0, 1]``. ``select_arm`` takes the 1-based round ``t`` and a
``numpy.random.Generator`` so that a replayed seed reproduces the arm sequence.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

from banditmf.errors import BanditMFError


class Policy:
    name = "policy"

    def __init__(self, n_arms: int):
        if n_arms < 1:
            raise BanditMFError("need at least one arm")
        self.n_arms = int(n_arms)
        self.counts = np.zeros(self.n_arms, dtype=np.int64)
        self.means = np.zeros(self.n_arms, dtype=np.float64)

    def select_arm(self, t: int, rng: np.random.Generator) -> int:
        raise NotImplementedError

    def _check(self, arm: int, reward: float):
        if not 0 <= arm < self.n_arms:
            raise BanditMFError(f"arm {arm} outside [0, {self.n_arms})")
        if not 0.0 <= reward <= 1.0:
            raise BanditMFError(f"reward {reward} outside [0, 1]")

    def update(self, arm: int, reward: float) -> None:
        self._check(arm, reward)
        self.counts[arm] += 1
        self.means[arm] += (reward - self.means[arm]) / self.counts[arm]

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in self._state_arrays():
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def _state_arrays(self):
        return (self.counts, self.means)


class EpsilonGreedy(Policy):
    """Uniform random arm with probability ``epsilon``, else the best mean.

    Unpulled arms count as mean 0 and ties go to the lowest index.
    """

    name = "egreedy"

    def __init__(self, n_arms: int, epsilon: float = 0.1):
        super().__init__(n_arms)
        if not 0.0 <= epsilon <= 1.0:
            raise BanditMFError("epsilon must lie in [0, 1]")
        self.epsilon = float(epsilon)

    def select_arm(self, t, rng):
        if rng.random() < self.epsilon:
            return int(rng.integers(self.n_arms))
        return int(np.argmax(self.means))


class UCB1(Policy):
    """Sweep every arm once in index order, then maximize
    ``mean + c * sqrt(2 ln t / n_a)``."""

    name = "ucb"

    def __init__(self, n_arms: int, c: float = 1.0):
        super().__init__(n_arms)
        if c < 0:
            raise BanditMFError("c must be >= 0")
        self.c = float(c)

    def index(self, t: int) -> np.ndarray:
        with np.errstate(divide="ignore"):
            bonus = self.c * np.sqrt(2.0 * math.log(max(t, 1)) / self.counts)
        return np.where(self.counts > 0, self.means + bonus, np.inf)

    def select_arm(self, t, rng):
        unpulled = np.flatnonzero(self.counts == 0)
        if len(unpulled):
            return int(unpulled[0])
        return int(np.argmax(self.index(t)))


class ThompsonSampling(Policy):
    """Beta-Bernoulli sampling with fractional updates.

    A reward ``r`` in ``[0, 1]`` adds ``r`` to alpha and ``1 - r`` to beta, so
    normalized ratings feed in without binarization.
    """

    name = "ts"

    def __init__(self, n_arms: int, prior_alpha: float = 1.0, prior_beta: float = 1.0):
        super().__init__(n_arms)
        if prior_alpha <= 0 or prior_beta <= 0:
            raise BanditMFError("Beta prior parameters must be positive")
        self.alpha = np.full(self.n_arms, float(prior_alpha))
        self.beta = np.full(self.n_arms, float(prior_beta))

    def select_arm(self, t, rng):
        return int(np.argmax(rng.beta(self.alpha, self.beta)))

    def update(self, arm, reward):
        super().update(arm, reward)
        self.alpha[arm] += reward
        self.beta[arm] += 1.0 - reward

    def posterior_mean(self) -> np.ndarray:
        return self.alpha / (self.alpha + self.beta)

    def _state_arrays(self):
        return (self.counts, self.means, self.alpha, self.beta)


POLICIES = {"ts": ThompsonSampling, "ucb": UCB1, "egreedy": EpsilonGreedy}


def make_policy(name: str, n_arms: int, epsilon: float = 0.1, ucb_c: float = 1.0) -> Policy:
    if name == "ts":
        return ThompsonSampling(n_arms)
    if name == "ucb":
        return UCB1(n_arms, ucb_c)
    if name == "egreedy":
        return EpsilonGreedy(n_arms, epsilon)
    raise BanditMFError(f"unknown policy {name!r} (expected one of {sorted(POLICIES)})")
