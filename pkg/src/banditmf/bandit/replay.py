"""Replay (rejection) evaluation of a contextual policy on logged data.

A row counts only when the policy picks the logged action; the policy then
learns from that row. The click-through rate after row ``T`` is the sum of
logged rewards on matched rows divided by the number of matched rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from banditmf.dataset import ReplayLog
from banditmf.errors import BanditMFError

UNDEFINED = math.nan


@dataclass(frozen=True, eq=False)
class ReplayResult:
    matches_series: np.ndarray
    correct_series: np.ndarray
    arm_predictions: np.ndarray
    arm_matches: np.ndarray
    arm_correct: np.ndarray
    mean_ucb: np.ndarray

    @property
    def ctr_series(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.matches_series > 0, self.correct_series / np.maximum(self.matches_series, 1), UNDEFINED)

    @property
    def matches(self) -> int:
        return int(self.matches_series[-1]) if len(self.matches_series) else 0

    @property
    def correct(self) -> int:
        return int(self.correct_series[-1]) if len(self.correct_series) else 0

    @property
    def ctr(self) -> float:
        return self.correct / self.matches if self.matches else UNDEFINED


def replay_ctr(log: ReplayLog, policy, n_arms: int | None = None) -> ReplayResult:
    """Replay ``log`` through ``policy`` (``select(contexts, t)`` / ``update(arm, x, r)``).

    Each row's single context is shared by every arm. An empty log gives an
    empty result whose CTR is undefined.
    """
    k = n_arms if n_arms is not None else getattr(policy, "n_arms", log.num_actions)
    if log.num_actions > k:
        raise BanditMFError(f"log contains action {log.num_actions - 1} but only {k} arms")
    T = len(log)
    matches_series = np.zeros(T, dtype=np.int64)
    correct_series = np.zeros(T, dtype=np.int64)
    predictions = np.zeros(k, dtype=np.int64)
    arm_matches = np.zeros(k, dtype=np.int64)
    arm_correct = np.zeros(k, dtype=np.int64)
    ucb_sum = np.zeros(k)
    have_ucb = False
    matches = correct = 0
    for t in range(T):
        x = log.contexts[t]
        arm, values = policy.select(np.broadcast_to(x, (k, x.shape[0])), t + 1)
        predictions[arm] += 1
        if values is not None:
            ucb_sum += values
            have_ucb = True
        if arm == log.actions[t]:
            y = int(log.rewards[t])
            matches += 1
            correct += y
            arm_matches[arm] += 1
            arm_correct[arm] += y
            policy.update(arm, x, y)
        matches_series[t] = matches
        correct_series[t] = correct
    mean_ucb = ucb_sum / T if have_ucb else np.full(k, UNDEFINED)
    return ReplayResult(matches_series, correct_series, predictions, arm_matches, arm_correct, mean_ucb)
