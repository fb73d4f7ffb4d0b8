"""LinUCB with disjoint linear models and exploration-weight schedules."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from banditmf.errors import BanditMFError


@dataclass(frozen=True)
class AlphaSchedule:
    """Exploration weight as a function of round ``t`` and correct count.

    ``constant``          alpha = c
    ``inverse_sqrt_t``    alpha = 1 / sqrt(t)
    ``adaptive``          alpha = c / (scale * correct), or c / scale while correct == 0
    """

    kind: str = "constant"
    c: float = 1.0
    scale: float = 0.1

    def __post_init__(self):
        if self.kind not in ("constant", "inverse_sqrt_t", "adaptive"):
            raise BanditMFError(f"unknown alpha schedule {self.kind!r}")
        if self.c < 0 or (self.kind == "adaptive" and self.scale <= 0):
            raise BanditMFError("alpha schedule parameters must be non-negative (scale > 0)")

    def value(self, t: int, correct: float = 0) -> float:
        if self.kind == "constant":
            return self.c
        if self.kind == "inverse_sqrt_t":
            return 1.0 / math.sqrt(max(t, 1))
        if correct <= 0:
            return self.c / self.scale
        return self.c / (self.scale * correct)

    @classmethod
    def parse(cls, text: str) -> "AlphaSchedule":
        """``const:C``, ``inv-sqrt-t`` or ``adaptive:C,S``; a bare number is constant."""
        text = text.strip()
        try:
            if text == "inv-sqrt-t":
                return cls("inverse_sqrt_t")
            if text.startswith("const:"):
                return cls("constant", float(text[6:]))
            if text.startswith("adaptive:"):
                c, s = text[9:].split(",")
                return cls("adaptive", float(c), float(s))
            return cls("constant", float(text))
        except ValueError:
            raise BanditMFError(f"cannot parse alpha schedule {text!r}") from None

    def __str__(self) -> str:
        if self.kind == "constant":
            return f"const:{self.c:g}"
        if self.kind == "inverse_sqrt_t":
            return "inv-sqrt-t"
        return f"adaptive:{self.c:g},{self.scale:g}"


# The five schedules compared in the LinUCB replay experiment.
REFERENCE_SCHEDULES = (
    AlphaSchedule("constant", 1.0),
    AlphaSchedule("constant", 0.25),
    AlphaSchedule("inverse_sqrt_t"),
    AlphaSchedule("constant", 0.001),
    AlphaSchedule("adaptive", 0.001, 0.1),
)


class LinUCB:
    """Per-arm ridge regression state ``(A_a, b_a)`` with ``A_a = I + sum x x^T``.

    With ``incremental=True`` the inverses are maintained by Sherman-Morrison
    rank-one updates; otherwise every selection solves the linear systems
    directly. ``correct`` accumulates received rewards and drives the
    ``adaptive`` schedule.
    """

    def __init__(self, n_arms: int, dim: int, alpha=1.0, incremental: bool = True):
        if n_arms < 1 or dim < 1:
            raise BanditMFError("need at least one arm and one feature")
        self.n_arms = int(n_arms)
        self.dim = int(dim)
        self.schedule = alpha if isinstance(alpha, AlphaSchedule) else AlphaSchedule("constant", float(alpha))
        self.incremental = incremental
        self.A = np.tile(np.eye(dim), (n_arms, 1, 1))
        self.b = np.zeros((n_arms, dim))
        self.A_inv = self.A.copy()
        self.theta = np.zeros((n_arms, dim))
        self.correct = 0.0

    def _contexts(self, contexts) -> np.ndarray:
        x = np.asarray(contexts, dtype=np.float64)
        if x.ndim == 1:
            x = np.broadcast_to(x, (self.n_arms, x.shape[0]))
        if x.shape != (self.n_arms, self.dim):
            raise BanditMFError(f"context shape {x.shape} does not match ({self.n_arms}, {self.dim})")
        return x

    def ucb(self, contexts, t: int) -> np.ndarray:
        x = self._contexts(contexts)
        alpha = self.schedule.value(t, self.correct)
        if self.incremental:
            ainv_x = np.einsum("kij,kj->ki", self.A_inv, x)
            theta = self.theta
        else:
            theta = np.empty_like(self.b)
            ainv_x = np.empty_like(x)
            for a in range(self.n_arms):
                sol = np.linalg.solve(self.A[a], np.column_stack([self.b[a], x[a]]))
                theta[a], ainv_x[a] = sol[:, 0], sol[:, 1]
        width = np.sqrt(np.maximum(np.einsum("ki,ki->k", x, ainv_x), 0.0))
        return np.einsum("ki,ki->k", theta, x) + alpha * width

    def select(self, contexts, t: int) -> tuple[int, np.ndarray]:
        p = self.ucb(contexts, t)
        return int(np.argmax(p)), p

    def update(self, arm: int, x, reward: float) -> None:
        if not 0 <= arm < self.n_arms:
            raise BanditMFError(f"arm {arm} outside [0, {self.n_arms})")
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise BanditMFError(f"context length {x.shape} does not match {self.dim}")
        self.A[arm] += np.outer(x, x)
        self.b[arm] += reward * x
        ainv_x = self.A_inv[arm] @ x
        self.A_inv[arm] -= np.outer(ainv_x, ainv_x) / (1.0 + x @ ainv_x)
        self.theta[arm] = self.A_inv[arm] @ self.b[arm]
        self.correct += reward

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.A, self.b):
            h.update(arr.tobytes())
        h.update(repr(self.correct).encode())
        return h.hexdigest()


class UniformRandomPolicy:
    """Baseline for replay: every arm equally likely, learns nothing."""

    def __init__(self, n_arms: int, rng: np.random.Generator):
        self.n_arms = int(n_arms)
        self.rng = rng

    def select(self, contexts, t: int):
        return int(self.rng.integers(self.n_arms)), None

    def update(self, arm, x, reward) -> None:
        pass
