import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from banditmf import mf
from banditmf.dataset import RatingMatrix, dense_to_matrix
from banditmf.errors import BanditMFError, DatasetError, TrainingDiverged
from banditmf.synthetic import planted_rating_matrix


def _rank_one(m=5, n=5, seed=0):
    rng = np.random.default_rng(seed)
    p = rng.uniform(0.5, 1.5, m)
    q = rng.uniform(0.5, 1.5, n)
    grid = np.outer(p, q)
    return RatingMatrix.from_entries([(u, i, grid[u, i]) for u in range(m) for i in range(n)], m, n)


def test_config_validation():
    for bad in (dict(learning_rate=0), dict(regularization=-1), dict(k=0), dict(iterations=0), dict(init_scale=-0.1)):
        with pytest.raises(BanditMFError):
            mf.SgdConfig(**bad)


def test_single_step_hand_values():
    # e = 3 - (0.5*1 - 1*2) = 4.5; q uses the old p, p uses the old q.
    p, q, _, _ = mf.sgd_step([1.0, 2.0], [0.5, -1.0], 3.0, lr=0.1, reg=0.1)
    assert q == pytest.approx([0.945, -0.09], abs=1e-12)
    assert p == pytest.approx([1.215, 1.53], abs=1e-12)


def test_single_step_bias_hand_values():
    # e = 4 - (3 + 0.5 - 0.5 + 0) = 1; b <- b + lr (e - reg b)
    p, q, bu, bi = mf.sgd_step([0.0], [0.0], 4.0, lr=0.1, reg=0.1, b_u=0.5, b_i=-0.5, mu=3.0, use_bias=True)
    assert bu == pytest.approx(0.5 + 0.1 * (1 - 0.05), abs=1e-15)
    assert bi == pytest.approx(-0.5 + 0.1 * (1 + 0.05), abs=1e-15)
    assert p.tolist() == [0.0] and q.tolist() == [0.0]


def test_zero_error_step_is_fixed_point():
    p, q, _, _ = mf.sgd_step([1.0, 1.0], [2.0, 0.5], 2.5, lr=0.3, reg=0.0)
    assert p.tolist() == [1.0, 1.0] and q.tolist() == [2.0, 0.5]


def _central_diff(f, x, h=1e-6):
    g = np.zeros_like(x)
    for j in range(len(x)):
        up, down = x.copy(), x.copy()
        up[j] += h
        down[j] -= h
        g[j] = (f(up) - f(down)) / (2 * h)
    return g


def _rel_err(a, b):
    return np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b)))


@pytest.mark.parametrize("use_bias", [False, True])
def test_step_is_negative_half_gradient_of_pair_objective(use_bias):
    rng = np.random.default_rng(11)
    lr = 0.01
    for _ in range(100):
        k = int(rng.integers(1, 3))
        p, q = rng.normal(size=k), rng.normal(size=k)
        bu, bi, mu = rng.normal(), rng.normal(), rng.uniform(1, 4)
        r, reg = rng.uniform(0, 5), rng.uniform(0, 0.5)
        x = np.concatenate([p, q, [bu, bi]])

        def f(v):
            return mf.pair_objective(v[:k], v[k : 2 * k], r, reg, v[2 * k], v[2 * k + 1], mu, use_bias)

        numeric = _central_diff(f, x)
        new_p, new_q, new_bu, new_bi = mf.sgd_step(p, q, r, lr, reg, bu, bi, mu, use_bias)
        analytic = -2.0 / lr * (np.concatenate([new_p, new_q, [new_bu, new_bi]]) - x)
        if not use_bias:
            numeric, analytic = numeric[: 2 * k], analytic[: 2 * k]
        assert _rel_err(analytic, numeric) < 1e-5


def test_bias_loss_gradient_matches_summed_steps():
    """Finite differences of the implemented BIAS loss equal the sum of per-pair steps."""
    rng = np.random.default_rng(5)
    lr = 0.01
    for _ in range(100):
        m, n, k = int(rng.integers(1, 5)), int(rng.integers(1, 5)), int(rng.integers(1, 3))
        cells = [(u, i) for u in range(m) for i in range(n) if rng.random() < 0.7] or [(0, 0)]
        data = RatingMatrix.from_entries([(u, i, float(rng.uniform(0, 5))) for u, i in cells], m, n, rating_max=5.0)
        reg, mu = float(rng.uniform(0, 0.5)), float(rng.uniform(1, 4))
        theta = rng.normal(size=m * k + n * k + m + n)

        def unpack(v):
            p = v[: m * k].reshape(m, k)
            q = v[m * k : (m + n) * k].reshape(n, k)
            return p, q, v[(m + n) * k : (m + n) * k + m], v[(m + n) * k + m :]

        def f(v):
            p, q, bu, bi = unpack(v)
            return mf.loss(mf.LatentModel(p, q, mf.BIAS, mu, bu, bi), data, reg)

        numeric = _central_diff(f, theta)
        p, q, bu, bi = unpack(theta)
        gp, gq, gbu, gbi = np.zeros_like(p), np.zeros_like(q), np.zeros_like(bu), np.zeros_like(bi)
        for u, i, r in zip(data.users, data.items, data.ratings):
            np_, nq, nbu, nbi = mf.sgd_step(p[u], q[i], r, lr, reg, bu[u], bi[i], mu, True)
            gp[u] += -2 / lr * (np_ - p[u])
            gq[i] += -2 / lr * (nq - q[i])
            gbu[u] += -2 / lr * (nbu - bu[u])
            gbi[i] += -2 / lr * (nbi - bi[i])
        analytic = np.concatenate([gp.ravel(), gq.ravel(), gbu, gbi])
        assert _rel_err(analytic, numeric) < 1e-5


@pytest.mark.parametrize("variant", [mf.BASE, mf.BIAS])
def test_kernel_matches_reference_step(variant):
    m, _ = planted_rating_matrix(np.random.default_rng(2), num_users=6, num_items=8, density=0.5)
    cfg = mf.SgdConfig(k=2, learning_rate=0.01, regularization=0.1, iterations=1, seed=4)
    model = mf.train(m, cfg, variant)

    rng = np.random.default_rng(cfg.seed)
    p = rng.uniform(-0.1, 0.1, (m.num_users, 2))
    q = rng.uniform(-0.1, 0.1, (m.num_items, 2))
    bu, bi = np.zeros(m.num_users), np.zeros(m.num_items)
    use_bias = variant == mf.BIAS
    mu = m.ratings.mean() if use_bias else 0.0
    for idx in rng.permutation(len(m)):
        u, i, r = m.users[idx], m.items[idx], m.ratings[idx]
        p[u], q[i], bu[u], bi[i] = mf.sgd_step(p[u], q[i], r, cfg.learning_rate, cfg.regularization, bu[u], bi[i], mu, use_bias)
    np.testing.assert_allclose(model.p, p, rtol=0, atol=1e-14)
    np.testing.assert_allclose(model.q, q, rtol=0, atol=1e-14)
    if use_bias:
        np.testing.assert_allclose(model.b_user, bu, rtol=0, atol=1e-14)
        np.testing.assert_allclose(model.b_item, bi, rtol=0, atol=1e-14)


def test_exactly_factorizable_converges():
    data = _rank_one()
    model = mf.train_base(data, mf.SgdConfig(k=1, learning_rate=0.01, regularization=0.0, iterations=2000, seed=0))
    assert mf.mse(model, data) < 1e-3


def test_protocol_run_is_finite():
    data, _ = planted_rating_matrix(np.random.default_rng(0))
    model = mf.train_base(data, mf.SgdConfig())
    assert len(model.loss_history) == 1000
    assert all(math.isfinite(v) for v in model.loss_history)


def test_constant_matrix_fixed_point():
    data = RatingMatrix.from_entries([(u, i, 3.5) for u in range(3) for i in range(4) if (u + i) % 2], 3, 4)
    model = mf.train_bias(data, mf.SgdConfig(k=2, regularization=0.0, init_scale=0.0, iterations=20))
    assert model.mu == 3.5
    assert np.all(mf.predict_full(model) == 3.5)


def test_bias_decomposition_identity():
    data, _ = planted_rating_matrix(np.random.default_rng(1), num_users=6, num_items=7)
    model = mf.train_bias(data, mf.SgdConfig(iterations=20))
    full = mf.predict_full(model)
    for u in range(6):
        for i in range(7):
            assert mf.predict(model, u, i) - float(model.q[i] @ model.p[u]) == pytest.approx(model.mu + model.b_user[u] + model.b_item[i], abs=1e-12)
            assert full[u, i] == pytest.approx(mf.predict(model, u, i), abs=1e-12)


def test_mu_is_training_mean():
    data, _ = planted_rating_matrix(np.random.default_rng(3))
    assert mf.train_bias(data, mf.SgdConfig(iterations=2)).mu == data.ratings.mean()


def test_predict_examples():
    assert mf.predict(mf.LatentModel([[2.0]], [[3.0]]), 0, 0) == 6.0
    bias = mf.LatentModel([[0.0]], [[0.0]], mf.BIAS, 3.0, [0.5], [-0.5])
    assert mf.predict(bias, 0, 0) == 3.0
    with pytest.raises(BanditMFError):
        mf.predict(bias, 1, 0)
    with pytest.raises(BanditMFError):
        mf.LatentModel([[1.0]], [[1.0]], mf.BASE, mu=1.0)


def test_predict_full_shape_and_cells():
    rng = np.random.default_rng(0)
    model = mf.LatentModel(rng.normal(size=(3, 2)), rng.normal(size=(4, 2)), mf.BIAS, 2.0, rng.normal(size=3), rng.normal(size=4))
    full = mf.predict_full(model)
    assert full.shape == (3, 4)
    for u, i in [(0, 0), (1, 3), (2, 2)]:
        assert full[u, i] == pytest.approx(mf.predict(model, u, i), abs=1e-12)


def test_loss_examples():
    data = RatingMatrix.from_entries([(0, 0, 6.0)], 1, 1, rating_max=6.0)
    assert mf.loss(mf.LatentModel([[2.0]], [[3.0]]), data, 0.0) == 0.0
    assert mf.loss(mf.LatentModel([[2.0]], [[2.0]]), data, 0.0) == 4.0
    # BASE literal form: (|q| + |p|)^2 = (2 + 2)^2 = 16
    assert mf.loss(mf.LatentModel([[2.0]], [[2.0]]), data, 1.0) == 4.0 + 16.0
    # BIAS: 4 + 0.5 * (4 + 4 + 1 + 1)
    bias = mf.LatentModel([[2.0]], [[2.0]], mf.BIAS, 0.0, [1.0], [-1.0])
    assert mf.loss(bias, data, 0.5) == pytest.approx(4.0 + 5.0, abs=1e-12)


@pytest.mark.parametrize("variant", [mf.BASE, mf.BIAS])
def test_loss_matches_direct_summation(variant):
    rng = np.random.default_rng(8)
    for _ in range(20):
        m, n, k = 4, 3, 2
        cells = [(u, i, float(rng.uniform(1, 5))) for u in range(m) for i in range(n) if rng.random() < 0.6] or [(0, 0, 3.0)]
        data = RatingMatrix.from_entries(cells, m, n)
        p, q = rng.normal(size=(m, k)), rng.normal(size=(n, k))
        bu, bi, mu = rng.normal(size=m), rng.normal(size=n), 3.0
        model = mf.LatentModel(p, q, mf.BIAS, mu, bu, bi) if variant == mf.BIAS else mf.LatentModel(p, q)
        terms = []
        for u, i, r in cells:
            dot = math.fsum(p[u, j] * q[i, j] for j in range(k))
            if variant == mf.BIAS:
                e = r - (mu + bu[u] + bi[i] + dot)
                penalty = math.fsum([*(x * x for x in q[i]), *(x * x for x in p[u]), bu[u] ** 2, bi[i] ** 2])
            else:
                e = r - dot
                penalty = (math.sqrt(math.fsum(x * x for x in q[i])) + math.sqrt(math.fsum(x * x for x in p[u]))) ** 2
            terms += [e * e, 0.3 * penalty]
        assert mf.loss(model, data, 0.3) == pytest.approx(math.fsum(terms), rel=1e-12)


def test_mse_examples():
    model = mf.LatentModel([[1.0], [2.0]], [[1.0], [3.0]])
    assert mf.mse(model, RatingMatrix.from_entries([(0, 0, 1.0), (1, 1, 6.0)], 2, 2)) == 0.0
    assert mf.mse(model, RatingMatrix.from_entries([(0, 0, 2.0)], 2, 2)) == 1.0
    # predictions 1, 3, 2 against 2, 1, 2: errors 1, -2, 0 -> 5/3
    held = RatingMatrix.from_entries([(0, 0, 2.0), (0, 1, 1.0), (1, 0, 2.0)], 2, 2)
    assert mf.mse(model, held) == pytest.approx(5 / 3, abs=1e-15)
    with pytest.raises(DatasetError):
        mf.mse(model, RatingMatrix.from_entries([], 2, 2))


@pytest.mark.parametrize("variant", [mf.BASE, mf.BIAS])
def test_training_is_deterministic(variant):
    data, _ = planted_rating_matrix(np.random.default_rng(4))
    cfg = mf.SgdConfig(iterations=30, seed=9)
    a, b = mf.train(data, cfg, variant), mf.train(data, cfg, variant)
    assert a.p.tobytes() == b.p.tobytes() and a.q.tobytes() == b.q.tobytes()
    assert a.loss_history == b.loss_history
    c = mf.train(data, mf.SgdConfig(iterations=30, seed=10), variant)
    assert c.p.tobytes() != a.p.tobytes()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 10_000))
def test_monotone_trend_on_factorizable_data(data_seed, train_seed):
    data = _rank_one(4, 5, data_seed)
    model = mf.train_base(data, mf.SgdConfig(k=1, learning_rate=0.005, regularization=0.0, iterations=300, seed=train_seed))
    history = np.array(model.loss_history)
    for epoch in range(0, 290, 7):
        assert history[epoch + 10] <= history[epoch]


def test_divergence_names_epoch():
    data = RatingMatrix.from_entries([(u, i, 5.0) for u in range(3) for i in range(3)], 3, 3)
    with pytest.raises(TrainingDiverged, match="epoch"):
        mf.train_base(data, mf.SgdConfig(k=2, learning_rate=5.0, regularization=0.0, iterations=100, init_scale=1.0))


def test_empty_training_rejected():
    with pytest.raises(DatasetError):
        mf.train_base(RatingMatrix.from_entries([], 2, 2), mf.SgdConfig())


@pytest.mark.parametrize("variant", [mf.BASE, mf.BIAS])
def test_save_load_round_trip(tmp_path, variant):
    data, _ = planted_rating_matrix(np.random.default_rng(6), num_users=5, num_items=6)
    model = mf.train(data, mf.SgdConfig(iterations=10), variant)
    mf.save_model(model, tmp_path / "m.txt")
    back = mf.load_model(tmp_path / "m.txt")
    assert back.variant == variant
    assert np.array_equal(back.p, model.p) and np.array_equal(back.q, model.q)
    assert np.array_equal(mf.predict_full(back), mf.predict_full(model))


def test_load_model_rejects_other_files(tmp_path):
    (tmp_path / "x.txt").write_text("hello\n")
    with pytest.raises(BanditMFError):
        mf.load_model(tmp_path / "x.txt")


def test_dense_input_trains():
    grid = np.array([[5, 3, 0, 1], [4, 0, 0, 1], [1, 1, 0, 5], [1, 0, 0, 4], [0, 1, 5, 4]], dtype=float)
    model = mf.train_bias(dense_to_matrix(grid), mf.SgdConfig(learning_rate=0.01, iterations=500))
    full = mf.predict_full(model)
    assert full.shape == grid.shape and np.all(np.isfinite(full))
