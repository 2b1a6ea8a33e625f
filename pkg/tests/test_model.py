"""Scoring semantics, the dense reconstruction objective, and checkpoints."""

import numpy as np
import pytest

from aesrec.data import Dataset, SplitBundle
from aesrec.errors import ConfigError
from aesrec.features import FeatureMatrix
from aesrec.model import (
    BASIC,
    HYBRID,
    Hyperparams,
    ModelParams,
    init_params,
    load_checkpoint,
    mse_gradients,
    mse_objective,
    predict,
    save_checkpoint,
    time_item_score,
    train_mse,
    user_item_score,
    user_item_scores,
)


def _scalar_params(u, v, t, w, m=None, n=None, f=None):
    """1-factor model over 1 user, 2 items, 1 interval for hand arithmetic."""
    mode = BASIC if m is None else HYBRID
    return ModelParams(
        np.array([[u]]),
        np.array([v]).reshape(1, -1),
        np.array([[t]]),
        np.array([w]).reshape(1, -1),
        None if m is None else np.array([[m]]),
        None if n is None else np.array([[n]]),
        mode,
    )


class TestHyperparams:
    def test_paper_defaults(self):
        hp = Hyperparams()
        assert (hp.k1, hp.k2) == (200, 200)
        assert hp.lambda_c == 0.01
        assert hp.lambda_r == 1.5
        assert (hp.eta1, hp.eta2) == (0.1, 0.01)
        assert hp.rho == 5

    def test_protocol_scale_accepted(self):
        hp = Hyperparams(max_iters=200, rho=5)
        assert hp.max_iters == 200

    def test_validation(self):
        with pytest.raises(ConfigError):
            Hyperparams(k1=0)
        with pytest.raises(ConfigError):
            Hyperparams(learn_rate=0.0)
        with pytest.raises(ConfigError):
            Hyperparams(rho=0)


class TestScores:
    def test_zero_params_score_zero(self):
        params = _scalar_params(0.0, [0.0, 0.0], 0.0, [0.0, 0.0])
        assert user_item_score(params, None, 0, 0) == 0.0
        assert time_item_score(params, None, 0, 0) == 0.0
        assert predict(params, None, 0, 0, 0) == 0.0

    def test_basic_hand_values(self):
        params = _scalar_params(2.0, [3.0, 0.0], 1.0, [-2.0, 0.0])
        assert user_item_score(params, None, 0, 0) == pytest.approx(6.0)
        assert time_item_score(params, None, 0, 0) == pytest.approx(-2.0)
        assert predict(params, None, 0, 0, 0) == pytest.approx(-12.0)

    def test_hybrid_adds_feature_term(self):
        features = FeatureMatrix(1, 0, np.array([[1.5], [0.0]]))
        params = _scalar_params(2.0, [3.0, 0.0], 1.0, [-2.0, 0.0], m=1.0, n=0.0)
        assert user_item_score(params, features, 0, 0) == pytest.approx(7.5)

    def test_basic_ignores_features_entirely(self):
        rng = np.random.default_rng(0)
        hp = Hyperparams(k1=3, k2=2, seed=1)
        params = init_params(hp, 4, 5, 3, 0, BASIC)
        f1 = FeatureMatrix(2, 2, rng.normal(size=(5, 4)))
        f2 = FeatureMatrix(2, 2, rng.normal(size=(5, 4)))
        for p in range(4):
            for q in range(5):
                for r in range(3):
                    assert predict(params, f1, p, q, r) == predict(params, f2, p, q, r)

    def test_prediction_is_exact_composition(self):
        rng = np.random.default_rng(2)
        hp = Hyperparams(k1=4, k2=3, seed=3)
        features = FeatureMatrix(3, 2, rng.normal(size=(6, 5)))
        params = init_params(hp, 3, 6, 2, 5, HYBRID)
        for p, q, r in [(0, 0, 0), (2, 5, 1), (1, 3, 0)]:
            expected = user_item_score(params, features, p, q) * time_item_score(
                params, features, r, q
            )
            assert predict(params, features, p, q, r) == expected

    def test_scaling_user_factors_scales_predictions(self):
        hp = Hyperparams(k1=3, k2=2, seed=5)
        params = init_params(hp, 3, 4, 2, 0, BASIC)
        before = np.array([[predict(params, None, p, q, 0) for q in range(4)]
                           for p in range(3)])
        params.user_factors *= 2.5
        after = np.array([[predict(params, None, p, q, 0) for q in range(4)]
                          for p in range(3)])
        assert np.allclose(after, 2.5 * before)

    def test_vector_scores_match_scalar(self):
        rng = np.random.default_rng(4)
        hp = Hyperparams(k1=4, k2=3, seed=6)
        features = FeatureMatrix(2, 3, rng.normal(size=(7, 5)))
        params = init_params(hp, 3, 7, 2, 5, HYBRID)
        vec = user_item_scores(params, features, 1)
        for q in range(7):
            assert vec[q] == pytest.approx(user_item_score(params, features, 1, q))

    def test_index_errors(self):
        params = _scalar_params(1.0, [1.0, 1.0], 1.0, [1.0, 1.0])
        with pytest.raises(IndexError):
            user_item_score(params, None, 5, 0)
        with pytest.raises(IndexError):
            time_item_score(params, None, 0, 9)


class TestMseObjective:
    def _zero_params(self, p, q, r):
        return ModelParams(
            np.zeros((2, p)), np.zeros((2, q)), np.zeros((2, r)), np.zeros((2, q))
        )

    def test_zero_params_empty_positives(self):
        ds = Dataset(["u0"], ["i0"], 1, [])
        params = self._zero_params(1, 1, 1)
        assert mse_objective(params, None, ds, 0.0, 0.0) == 0.0

    def test_zero_params_counts_positives(self):
        triples = [(0, 0, 0), (1, 1, 0), (1, 0, 1)]
        ds = Dataset(["u0", "u1"], ["i0", "i1"], 2, triples)
        params = self._zero_params(2, 2, 2)
        assert mse_objective(params, None, ds, 0.0, 0.0) == pytest.approx(1.5)

    def test_matches_triple_loop(self):
        rng = np.random.default_rng(11)
        triples = sorted({(int(rng.integers(3)), int(rng.integers(3)),
                           int(rng.integers(3))) for _ in range(6)})
        ds = Dataset(["u0", "u1", "u2"], ["i0", "i1", "i2"], 3, triples)
        hp = Hyperparams(k1=2, k2=2, seed=7)
        features = FeatureMatrix(1, 1, rng.normal(size=(3, 2)))
        params = init_params(hp, 3, 3, 3, 2, HYBRID)
        for block in params.matrices().values():
            block += rng.normal(scale=0.2, size=block.shape)
        lam_c, lam_r = 0.3, 0.7

        # independent brute-force loops
        pos = {tuple(t) for t in triples}
        loss = 0.0
        for p in range(3):
            for q in range(3):
                for r in range(3):
                    s1 = float(
                        params.user_factors[:, p] @ params.item_factors[:, q]
                        + params.user_visual[:, p] @ features.matrix[q]
                    )
                    s2 = float(
                        params.time_factors[:, r] @ params.item_time_factors[:, q]
                        + params.time_visual[:, r] @ features.matrix[q]
                    )
                    a = 1.0 if (p, q, r) in pos else 0.0
                    loss += 0.5 * (a - s1 * s2) ** 2
        for p in range(3):
            for q in range(3):
                b = 1.0 if any((p, q) == (t[0], t[1]) for t in pos) else 0.0
                s1 = float(
                    params.user_factors[:, p] @ params.item_factors[:, q]
                    + params.user_visual[:, p] @ features.matrix[q]
                )
                loss += 0.5 * lam_c * (b - s1) ** 2
        for r in range(3):
            for q in range(3):
                c = 1.0 if any((r, q) == (t[2], t[1]) for t in pos) else 0.0
                s2 = float(
                    params.time_factors[:, r] @ params.item_time_factors[:, q]
                    + params.time_visual[:, r] @ features.matrix[q]
                )
                loss += 0.5 * lam_c * (c - s2) ** 2
        loss += 0.5 * lam_r * params.squared_norm()

        value = mse_objective(params, features, ds, lam_c, lam_r)
        assert value == pytest.approx(loss, rel=1e-12)

    def test_non_negative(self):
        rng = np.random.default_rng(13)
        triples = [(0, 1, 0), (1, 0, 1)]
        ds = Dataset(["u0", "u1"], ["i0", "i1"], 2, triples)
        hp = Hyperparams(k1=2, k2=2, seed=8)
        params = init_params(hp, 2, 2, 2)
        for block in params.matrices().values():
            block += rng.normal(size=block.shape)
        assert mse_objective(params, None, ds, 0.5, 0.5) >= 0.0

    def test_dense_limit_guard(self):
        ds = Dataset(["u0", "u1"], ["i0", "i1"], 2, [(0, 0, 0)])
        params = self._zero_params(2, 2, 2)
        with pytest.raises(ConfigError, match="pairwise"):
            mse_objective(params, None, ds, 0.0, 0.0, dense_limit=4)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(17)
        triples = [(0, 0, 0), (1, 1, 1), (0, 1, 1)]
        ds = Dataset(["u0", "u1"], ["i0", "i1"], 2, triples)
        hp = Hyperparams(k1=2, k2=2, seed=9)
        features = FeatureMatrix(1, 1, rng.normal(size=(2, 2)))
        params = init_params(hp, 2, 2, 2, 2, HYBRID)
        for block in params.matrices().values():
            block += rng.normal(scale=0.3, size=block.shape)
        grads = mse_gradients(params, features, ds, 0.2, 0.4)
        h = 1e-6
        for name, block in params.matrices().items():
            it = np.nditer(block, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = block[idx]
                block[idx] = orig + h
                up = mse_objective(params, features, ds, 0.2, 0.4)
                block[idx] = orig - h
                down = mse_objective(params, features, ds, 0.2, 0.4)
                block[idx] = orig
                fd = (up - down) / (2 * h)
                assert grads[name][idx] == pytest.approx(fd, rel=1e-5, abs=1e-8)

    def test_train_mse_descends(self):
        rng = np.random.default_rng(19)
        triples = sorted({(int(rng.integers(4)), int(rng.integers(5)),
                           int(rng.integers(3))) for _ in range(12)})
        ds = Dataset([f"u{i}" for i in range(4)], [f"i{i}" for i in range(5)],
                     3, triples)
        bundle = SplitBundle(train=ds, validation=np.empty((0, 3), dtype=np.int64),
                             test=np.empty((0, 3), dtype=np.int64))
        hp = Hyperparams(k1=3, k2=3, lambda_c=0.1, lambda_r=0.01,
                         learn_rate=0.05, max_iters=25, seed=21)
        _, history = train_mse(bundle, None, hp)
        values = [v for _, v in history]
        assert values[-1] < values[0]


class TestCheckpoints:
    def test_round_trip_hybrid(self, tmp_path):
        hp = Hyperparams(k1=3, k2=2, seed=31)
        params = init_params(hp, 4, 5, 3, 6, HYBRID)
        path = tmp_path / "ck.bin"
        save_checkpoint(path, params, 17, "vra-aplr")
        loaded, meta = load_checkpoint(path)
        assert meta["model_kind"] == "vra-aplr"
        assert meta["iteration"] == 17
        assert meta["feature_mode"] == HYBRID
        for name, block in params.matrices().items():
            # stored as f32
            assert np.allclose(loaded.matrices()[name], block, atol=1e-7)

    def test_round_trip_basic(self, tmp_path):
        hp = Hyperparams(k1=2, k2=2, seed=33)
        params = init_params(hp, 3, 3, 2, 0, BASIC)
        path = tmp_path / "ck.bin"
        save_checkpoint(path, params, 5, "vra-basic")
        loaded, meta = load_checkpoint(path)
        assert loaded.feature_mode == BASIC
        assert loaded.user_visual is None
        assert meta["feature_dim"] == 0

    def test_f32_precision_fixpoint(self, tmp_path):
        hp = Hyperparams(k1=2, k2=2, seed=35)
        params = init_params(hp, 2, 2, 2, 0, BASIC)
        save_checkpoint(tmp_path / "a.bin", params, 1, "vra-basic")
        first, _ = load_checkpoint(tmp_path / "a.bin")
        save_checkpoint(tmp_path / "b.bin", first, 1, "vra-basic")
        second, _ = load_checkpoint(tmp_path / "b.bin")
        for name in first.matrices():
            assert np.array_equal(first.matrices()[name], second.matrices()[name])
