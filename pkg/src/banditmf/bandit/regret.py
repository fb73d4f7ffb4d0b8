from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from banditmf.errors import BanditMFError

_SLACK = 1e-12


def normalize_reward(rating: float, rating_max: float) -> float:
    """Rating scaled into ``[0, 1]`` by the dataset maximum."""
    if not rating_max > 0:
        raise BanditMFError("rating_max must be positive")
    if not 0 <= rating <= rating_max:
        raise BanditMFError(f"rating {rating} outside [0, {rating_max}]")
    return rating / rating_max


def regret_series(expected_rewards, mu_star: float) -> np.ndarray:
    """Cumulative regret ``R(T) = sum_{t<=T} (mu_star - mu_chosen(t))``.

    ``expected_rewards`` are the expected (not realized) rewards of the
    chosen arm in each round.
    """
    expected = np.asarray(expected_rewards, dtype=np.float64)
    if len(expected) and expected.max() > mu_star + _SLACK:
        raise BanditMFError(f"mu_star {mu_star} below a chosen arm's expected reward {expected.max()}")
    return np.cumsum(np.maximum(mu_star - expected, 0.0))


@dataclass(frozen=True)
class RoundRecord:
    t: int
    arm: int
    item: int
    rating: float
    reward: float
    expected_reward: float
    regret: float


@dataclass
class SessionTrace:
    records: list = field(default_factory=list)

    def append(self, record: RoundRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def arms(self) -> np.ndarray:
        return np.array([r.arm for r in self.records], dtype=np.int64)

    @property
    def items(self) -> np.ndarray:
        return np.array([r.item for r in self.records], dtype=np.int64)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([r.reward for r in self.records], dtype=np.float64)

    @property
    def regrets(self) -> np.ndarray:
        return np.array([r.regret for r in self.records], dtype=np.float64)

    @property
    def cumulative_reward(self) -> np.ndarray:
        return np.cumsum(self.rewards)

    @property
    def cumulative_regret(self) -> np.ndarray:
        return np.cumsum(self.regrets)
