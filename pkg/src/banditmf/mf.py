"""Matrix factorization trained by stochastic gradient descent.

Two variants share one training loop:

BASE   r_hat(u, i) = q_i . p_u
BIAS   r_hat(u, i) = mu + b_u + b_i + q_i . p_u

For every observed pair, in a seeded shuffled order each epoch::

    e   = r - r_hat(u, i)                   (computed once, before any update)
    q_i <- q_i + lr * (e * p_u - reg * q_i)
    p_u <- p_u + lr * (e * q_i_old - reg * p_u)
    b_u <- b_u + lr * (e - reg * b_u)       (BIAS only)
    b_i <- b_i + lr * (e - reg * b_i)       (BIAS only)

``mu`` is the mean of the training ratings and stays fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from banditmf.dataset import RatingMatrix
from banditmf.errors import BanditMFError, DatasetError, TrainingDiverged

BASE = "base"
BIAS = "bias"
VARIANTS = (BASE, BIAS)

DIVERGENCE_LIMIT = 1e12
_FORMAT = "banditmf-latent-model v1"


@dataclass(frozen=True)
class SgdConfig:
    k: int = 2
    learning_rate: float = 0.001
    regularization: float = 0.1
    iterations: int = 1000
    seed: int = 0
    init_scale: float = 0.1

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise BanditMFError("learning_rate must be > 0")
        if not self.regularization >= 0:
            raise BanditMFError("regularization must be >= 0")
        if self.k < 1:
            raise BanditMFError("k must be >= 1")
        if self.iterations < 1:
            raise BanditMFError("iterations must be >= 1")
        if not self.init_scale >= 0:
            raise BanditMFError("init_scale must be >= 0")


@dataclass(frozen=True, eq=False)
class LatentModel:
    p: np.ndarray
    q: np.ndarray
    variant: str = BASE
    mu: float = 0.0
    b_user: np.ndarray | None = None
    b_item: np.ndarray | None = None
    loss_history: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise BanditMFError(f"unknown variant {self.variant!r}")
        p = np.array(self.p, dtype=np.float64)
        q = np.array(self.q, dtype=np.float64)
        if p.ndim != 2 or q.ndim != 2 or p.shape[1] != q.shape[1] or p.shape[1] < 1:
            raise BanditMFError("p and q must be 2-d with the same number of columns")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise BanditMFError("latent factors must be finite")
        p.flags.writeable = False
        q.flags.writeable = False
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        if self.variant == BASE:
            if self.b_user is not None or self.b_item is not None or self.mu != 0.0:
                raise BanditMFError("BASE model carries no bias terms")
            return
        bu = np.zeros(p.shape[0]) if self.b_user is None else np.array(self.b_user, dtype=np.float64)
        bi = np.zeros(q.shape[0]) if self.b_item is None else np.array(self.b_item, dtype=np.float64)
        if bu.shape != (p.shape[0],) or bi.shape != (q.shape[0],):
            raise BanditMFError("bias vectors do not match factor shapes")
        bu.flags.writeable = False
        bi.flags.writeable = False
        object.__setattr__(self, "b_user", bu)
        object.__setattr__(self, "b_item", bi)
        object.__setattr__(self, "mu", float(self.mu))

    @property
    def num_users(self) -> int:
        return self.p.shape[0]

    @property
    def num_items(self) -> int:
        return self.q.shape[0]

    @property
    def k(self) -> int:
        return self.p.shape[1]

    def baseline(self, u, i):
        """``mu + b_u + b_i`` (zero for BASE)."""
        if self.variant == BASE:
            return 0.0
        return self.mu + self.b_user[u] + self.b_item[i]


# -- kernels ---------------------------------------------------------------


@njit(cache=True)
def _sgd_epoch(users, items, ratings, order, p, q, bu, bi, mu, lr, reg, use_bias):
    k = p.shape[1]
    for n in range(order.shape[0]):
        idx = order[n]
        u = users[idx]
        i = items[idx]
        pred = 0.0
        for f in range(k):
            pred += q[i, f] * p[u, f]
        if use_bias:
            pred += mu + bu[u] + bi[i]
        e = ratings[idx] - pred
        for f in range(k):
            qf = q[i, f]
            pf = p[u, f]
            q[i, f] = qf + lr * (e * pf - reg * qf)
            p[u, f] = pf + lr * (e * qf - reg * pf)
        if use_bias:
            bu[u] = bu[u] + lr * (e - reg * bu[u])
            bi[i] = bi[i] + lr * (e - reg * bi[i])


def sgd_step(p_u, q_i, r, lr, reg, b_u=0.0, b_i=0.0, mu=0.0, use_bias=False):
    """One update for a single observed pair; returns ``(p_u, q_i, b_u, b_i)``.

    Reference implementation of the kernel above, kept in plain numpy so the
    update rule can be checked against finite differences.
    """
    p_u = np.asarray(p_u, dtype=np.float64)
    q_i = np.asarray(q_i, dtype=np.float64)
    e = r - (float(q_i @ p_u) + (mu + b_u + b_i if use_bias else 0.0))
    new_q = q_i + lr * (e * p_u - reg * q_i)
    new_p = p_u + lr * (e * q_i - reg * p_u)
    if use_bias:
        b_u, b_i = b_u + lr * (e - reg * b_u), b_i + lr * (e - reg * b_i)
    return new_p, new_q, b_u, b_i


def pair_objective(p_u, q_i, r, reg, b_u=0.0, b_i=0.0, mu=0.0, use_bias=False) -> float:
    """Per-pair objective whose negative half-gradient is the SGD step.

    ``e^2 + reg * (|q_i|^2 + |p_u|^2 [+ b_u^2 + b_i^2])``. The update rule
    absorbs the factor of 2 into the learning rate.
    """
    p_u = np.asarray(p_u, dtype=np.float64)
    q_i = np.asarray(q_i, dtype=np.float64)
    e = r - (float(q_i @ p_u) + (mu + b_u + b_i if use_bias else 0.0))
    penalty = float(q_i @ q_i + p_u @ p_u)
    if use_bias:
        penalty += b_u * b_u + b_i * b_i
    return e * e + reg * penalty


# -- training --------------------------------------------------------------


def _check_train(train: RatingMatrix):
    if not len(train):
        raise DatasetError("training matrix is empty")


def _fit(train: RatingMatrix, cfg: SgdConfig, variant: str) -> LatentModel:
    _check_train(train)
    rng = np.random.default_rng(cfg.seed)
    s = cfg.init_scale
    p = rng.uniform(-s, s, size=(train.num_users, cfg.k)) if s > 0 else np.zeros((train.num_users, cfg.k))
    q = rng.uniform(-s, s, size=(train.num_items, cfg.k)) if s > 0 else np.zeros((train.num_items, cfg.k))
    bu = np.zeros(train.num_users)
    bi = np.zeros(train.num_items)
    use_bias = variant == BIAS
    mu = float(train.ratings.mean()) if use_bias else 0.0

    users = np.ascontiguousarray(train.users)
    items = np.ascontiguousarray(train.items)
    ratings = np.ascontiguousarray(train.ratings)
    history = []
    for epoch in range(1, cfg.iterations + 1):
        order = rng.permutation(len(ratings))
        _sgd_epoch(users, items, ratings, order, p, q, bu, bi, mu, cfg.learning_rate, cfg.regularization, use_bias)
        value = _loss_arrays(p, q, bu, bi, mu, use_bias, users, items, ratings, cfg.regularization)
        if not math.isfinite(value) or value > DIVERGENCE_LIMIT:
            raise TrainingDiverged(epoch, value)
        history.append(value)

    if use_bias:
        return LatentModel(p, q, BIAS, mu, bu, bi, tuple(history))
    return LatentModel(p, q, BASE, loss_history=tuple(history))


def train_base(train: RatingMatrix, cfg: SgdConfig) -> LatentModel:
    return _fit(train, cfg, BASE)


def train_bias(train: RatingMatrix, cfg: SgdConfig) -> LatentModel:
    return _fit(train, cfg, BIAS)


def train(train: RatingMatrix, cfg: SgdConfig, variant: str = BIAS) -> LatentModel:
    if variant not in VARIANTS:
        raise BanditMFError(f"unknown variant {variant!r}")
    return _fit(train, cfg, variant)


# -- evaluation ------------------------------------------------------------


def predict(model: LatentModel, u: int, i: int) -> float:
    if not (0 <= u < model.num_users and 0 <= i < model.num_items):
        raise BanditMFError(f"index ({u}, {i}) outside {model.num_users}x{model.num_items}")
    return float(model.q[i] @ model.p[u]) + float(model.baseline(u, i))


def predict_full(model: LatentModel) -> np.ndarray:
    out = model.p @ model.q.T
    if model.variant == BIAS:
        out += model.mu + model.b_user[:, None] + model.b_item[None, :]
    return out


def _predict_pairs(model: LatentModel, users, items) -> np.ndarray:
    pred = np.einsum("ij,ij->i", model.p[users], model.q[items])
    if model.variant == BIAS:
        pred = pred + model.mu + model.b_user[users] + model.b_item[items]
    return pred


def _loss_arrays(p, q, bu, bi, mu, use_bias, users, items, ratings, reg) -> float:
    pu = p[users]
    qi = q[items]
    pred = np.einsum("ij,ij->i", pu, qi)
    if use_bias:
        pred = pred + mu + bu[users] + bi[items]
    e = ratings - pred
    if use_bias:
        penalty = (qi * qi).sum(1) + (pu * pu).sum(1) + bu[users] ** 2 + bi[items] ** 2
    else:
        penalty = (np.linalg.norm(qi, axis=1) + np.linalg.norm(pu, axis=1)) ** 2
    return float(np.sum(e * e + reg * penalty))


def loss(model: LatentModel, matrix: RatingMatrix, reg: float) -> float:
    """Regularized training objective summed over observed pairs.

    BASE uses ``e^2 + reg * (|q_i| + |p_u|)^2`` per pair, BIAS uses
    ``e^2 + reg * (|q_i|^2 + |p_u|^2 + b_u^2 + b_i^2)``.
    """
    _check_train(matrix)
    use_bias = model.variant == BIAS
    bu = model.b_user if use_bias else np.zeros(model.num_users)
    bi = model.b_item if use_bias else np.zeros(model.num_items)
    return _loss_arrays(model.p, model.q, bu, bi, model.mu, use_bias, matrix.users, matrix.items, matrix.ratings, reg)


def mse(model: LatentModel, heldout: RatingMatrix) -> float:
    if not len(heldout):
        raise DatasetError("held-out matrix is empty")
    e = heldout.ratings - _predict_pairs(model, heldout.users, heldout.items)
    return float(np.mean(e * e))


# -- serialization ---------------------------------------------------------


def _fmt(values) -> str:
    return " ".join(f"{float(v):.17g}" for v in values)


def save_model(model: LatentModel, path) -> None:
    lines = [_FORMAT, f"{model.variant} {model.num_users} {model.num_items} {model.k} {model.mu:.17g}"]
    if model.variant == BIAS:
        lines.append(_fmt(model.b_user))
        lines.append(_fmt(model.b_item))
    else:
        lines.extend(["", ""])
    lines.extend(_fmt(row) for row in model.p)
    lines.extend(_fmt(row) for row in model.q)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path) -> LatentModel:
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if not lines or lines[0] != _FORMAT:
        raise BanditMFError(f"{path}: not a {_FORMAT} file")
    variant, m, n, k, mu = lines[1].split()
    m, n, k = int(m), int(n), int(k)

    def row(text, size):
        vals = [float(x) for x in text.split()]
        if len(vals) != size:
            raise BanditMFError(f"{path}: expected {size} values, got {len(vals)}")
        return vals

    body = lines[4 : 4 + m + n]
    p = np.array([row(t, k) for t in body[:m]]).reshape(m, k)
    q = np.array([row(t, k) for t in body[m:]]).reshape(n, k)
    if variant == BIAS:
        return LatentModel(p, q, BIAS, float(mu), row(lines[2], m), row(lines[3], n))
    return LatentModel(p, q, BASE)
