from banditmf.bandit.linucb import REFERENCE_SCHEDULES, AlphaSchedule, LinUCB, UniformRandomPolicy
from banditmf.bandit.policies import (
    POLICIES,
    EpsilonGreedy,
    Policy,
    ThompsonSampling,
    UCB1,
    make_policy,
)
from banditmf.bandit.regret import RoundRecord, SessionTrace, normalize_reward, regret_series
from banditmf.bandit.replay import ReplayResult, replay_ctr

__all__ = [
    "AlphaSchedule",
    "EpsilonGreedy",
    "LinUCB",
    "POLICIES",
    "Policy",
    "REFERENCE_SCHEDULES",
    "ReplayResult",
    "RoundRecord",
    "SessionTrace",
    "ThompsonSampling",
    "UCB1",
    "UniformRandomPolicy",
    "make_policy",
    "normalize_reward",
    "regret_series",
    "replay_ctr",
]
