from __future__ import annotations

import math

import numpy as np
import pytest

from slu_denoise.data_model import Corpus, LabelSchema
from slu_denoise.encoder import (
    ModelParams,
    Vocab,
    backward,
    build_vocab,
    ensemble_predict,
    forward,
    init_params,
    load_params,
    load_tensors,
    save_params,
    save_tensors,
    zero_gradients,
)
from slu_denoise.losses import cross_entropy_grads, joint_cross_entropy, weighted_joint_loss

from conftest import make_instance


@pytest.fixture
def small_schema() -> LabelSchema:
    return LabelSchema(intents=("a", "b", "c"), slot_types=("x", "y"))


def make_params(schema: LabelSchema, vocab_size: int = 12, dim: int = 6, seed: int = 0) -> ModelParams:
    return init_params(vocab_size, dim, schema, seed)


class TestVocab:
    def test_unknown_maps_to_reserved_id(self):
        v = Vocab(tokens=("<unk>", "alpha", "beta"))
        np.testing.assert_array_equal(v.encode(["beta", "nope", "alpha"]), [2, 0, 1])

    def test_build_vocab_sorted(self, tiny_schema):
        corpus = Corpus(
            schema=tiny_schema,
            instances=(make_instance(tokens=("zz", "aa"), slots=("O", "O")),),
            name="c",
        )
        v = build_vocab([corpus])
        assert v.tokens == ("<unk>", "aa", "zz")

    def test_must_start_with_unk(self):
        with pytest.raises(ValueError):
            Vocab(tokens=("alpha",))


class TestInitParams:
    def test_deterministic(self, small_schema):
        a = init_params(10, 4, small_schema, seed=7)
        b = init_params(10, 4, small_schema, seed=7)
        for k, t in a.tensors().items():
            np.testing.assert_array_equal(t, b.tensors()[k])

    def test_range(self, small_schema):
        p = init_params(50, 16, small_schema, seed=1)
        for t in p.tensors().values():
            assert t.min() >= -0.1 and t.max() <= 0.1

    def test_empirical_mean_near_zero(self, small_schema):
        p = init_params(10_000, 10, small_schema, seed=2)  # 1e5 embedding entries
        assert abs(p.embeddings.mean()) < 0.002

    def test_bad_sizes(self, small_schema):
        with pytest.raises(ValueError):
            init_params(0, 4, small_schema, seed=0)
        with pytest.raises(ValueError):
            init_params(4, 0, small_schema, seed=0)


class TestForward:
    def test_zero_params_give_uniform(self, small_schema):
        p = make_params(small_schema)
        for t in p.tensors().values():
            t[:] = 0.0
        pred = forward(p, [1, 2, 3])
        np.testing.assert_allclose(pred.intent_dist, 1 / 3, atol=1e-15)
        np.testing.assert_allclose(pred.slot_dists, 1 / 5, atol=1e-15)

    def test_distributions_normalized(self, small_schema):
        p = make_params(small_schema, seed=3)
        pred = forward(p, [0, 4, 7, 7, 1])
        assert abs(pred.intent_dist.sum() - 1.0) < 1e-12
        np.testing.assert_allclose(pred.slot_dists.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(pred.intent_dist > 0)

    def test_single_token_matches_hand_oracle(self, small_schema):
        # Independent scalar re-implementation of the forward formulas, d=2.
        d = 2
        p = make_params(small_schema, vocab_size=3, dim=d, seed=5)
        pred = forward(p, [1])

        e = [p.embeddings[1][j] for j in range(d)]
        c = [0.0] * d + e + [0.0] * d
        h = [math.tanh(sum(p.w_hidden[j][k] * c[k] for k in range(3 * d)) + p.b_hidden[j]) for j in range(d)]
        logits = [sum(p.w_intent[i][j] * h[j] for j in range(d)) + p.b_intent[i] for i in range(3)]
        z = max(logits)
        exps = [math.exp(x - z) for x in logits]
        expected = [x / sum(exps) for x in exps]
        np.testing.assert_allclose(pred.intent_dist, expected, rtol=1e-12)

    def test_token_order_matters(self, small_schema):
        p = make_params(small_schema, seed=9)
        a = forward(p, [2, 3, 4])
        b = forward(p, [3, 2, 4])
        assert not np.allclose(a.intent_dist, b.intent_dist)
        assert not np.allclose(a.slot_dists, b.slot_dists)

    def test_deterministic_bits(self, small_schema):
        p = make_params(small_schema, seed=4)
        a = forward(p, [5, 6])
        b = forward(p, [5, 6])
        np.testing.assert_array_equal(a.intent_dist, b.intent_dist)
        np.testing.assert_array_equal(a.slot_dists, b.slot_dists)

    def test_id_out_of_range(self, small_schema):
        p = make_params(small_schema, vocab_size=5)
        with pytest.raises(ValueError, match="out of range"):
            forward(p, [5])
        with pytest.raises(ValueError):
            forward(p, [])


def finite_difference_check(params, token_ids, labels, weight, step=1e-5, samples=40, seed=0):
    """Max relative error between analytic and central-difference gradients."""

    def loss_at(p) -> float:
        return weight * joint_cross_entropy(forward(p, token_ids), labels)

    pred = forward(params, token_ids)
    d_intent, d_slots = cross_entropy_grads(pred, labels, weight)
    grads = backward(params, token_ids, pred, d_intent, d_slots)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, tensor in params.tensors().items():
        flat = tensor.reshape(-1)
        g_flat = grads.tensors()[name].reshape(-1)
        idx = rng.choice(flat.size, size=min(samples, flat.size), replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            up = loss_at(params)
            flat[i] = orig - step
            down = loss_at(params)
            flat[i] = orig
            numeric = (up - down) / (2 * step)
            denom = max(abs(numeric), abs(g_flat[i]), 1e-6)
            worst = max(worst, abs(numeric - g_flat[i]) / denom)
    return worst


class TestBackward:
    def test_matches_finite_differences(self, small_schema):
        rng = np.random.default_rng(42)
        for trial in range(5):
            p = make_params(small_schema, vocab_size=9, dim=4, seed=trial)
            length = int(rng.integers(1, 6))
            ids = rng.integers(0, 9, size=length)
            intent = np.zeros(3)
            intent[rng.integers(3)] = 1.0
            slots = np.zeros((length, 5))
            for row in slots:
                row[rng.integers(5)] = 1.0
            from slu_denoise.data_model import SoftLabels

            labels = SoftLabels(intent_dist=intent, slot_dists=slots)
            err = finite_difference_check(p, ids, labels, weight=1.0, seed=trial)
            assert err < 1e-4

    def test_zero_upstream_gives_zero(self, small_schema):
        p = make_params(small_schema)
        pred = forward(p, [1, 2])
        g = backward(p, [1, 2], pred, np.zeros(3), np.zeros((2, 5)))
        for t in g.tensors().values():
            assert np.all(t == 0.0)

    def test_absent_tokens_get_zero_embedding_grad(self, small_schema):
        p = make_params(small_schema, vocab_size=10)
        pred = forward(p, [2, 3])
        # Non-constant upstream: a constant one is in the softmax null space.
        g = backward(p, [2, 3], pred, np.arange(3.0), np.arange(10.0).reshape(2, 5))
        used = {2, 3}
        for row in range(10):
            if row not in used:
                assert np.all(g.embeddings[row] == 0.0)
            else:
                assert np.any(g.embeddings[row] != 0.0)

    def test_cache_mismatch_rejected(self, small_schema):
        p = make_params(small_schema)
        pred = forward(p, [1, 2])
        with pytest.raises(ValueError, match="do not match"):
            backward(p, [2, 1], pred, np.zeros(3), np.zeros((2, 5)))
        from slu_denoise.encoder import Prediction

        no_cache = Prediction(intent_dist=pred.intent_dist, slot_dists=pred.slot_dists)
        with pytest.raises(ValueError, match="cache"):
            backward(p, [1, 2], no_cache, np.zeros(3), np.zeros((2, 5)))

    def test_weighted_loss_scales_gradient(self, small_schema):
        from slu_denoise.data_model import SoftLabels

        p = make_params(small_schema, seed=6)
        labels = SoftLabels(intent_dist=[0, 1, 0], slot_dists=[[0, 1, 0, 0, 0], [1, 0, 0, 0, 0]])
        err = finite_difference_check(p, [3, 4], labels, weight=0.5, seed=1)
        assert err < 1e-4
        pred = forward(p, [3, 4])
        full = weighted_joint_loss(pred, labels, 1.0)
        half = weighted_joint_loss(pred, labels, 0.5)
        assert half == 0.5 * full


class TestEnsemblePredict:
    def test_identical_models_equal_single(self, small_schema):
        p = make_params(small_schema, seed=8)
        single = forward(p, [1, 2, 3])
        two = ensemble_predict([p, p], [1, 2, 3])  # mean of two is exact
        np.testing.assert_array_equal(two.intent_dist, single.intent_dist)
        np.testing.assert_array_equal(two.slot_dists, single.slot_dists)
        three = ensemble_predict([p, p, p], [1, 2, 3])
        np.testing.assert_allclose(three.intent_dist, single.intent_dist, rtol=1e-14)
        np.testing.assert_allclose(three.slot_dists, single.slot_dists, rtol=1e-14)
        assert three.cache is None

    def test_mean_of_two(self, small_schema):
        # Force known output distributions via the bias trick: zero weights,
        # biases = log of the target distribution.
        def biased(intent_dist):
            p = make_params(small_schema, vocab_size=4, dim=2)
            for t in p.tensors().values():
                t[:] = 0.0
            p.b_intent[:] = np.log(intent_dist)
            return p

        m1 = biased([0.8, 0.1, 0.1])
        m2 = biased([0.6, 0.2, 0.2])
        ens = ensemble_predict([m1, m2], [1])
        np.testing.assert_allclose(ens.intent_dist, [0.7, 0.15, 0.15], atol=1e-12)
        assert abs(ens.intent_dist.sum() - 1.0) < 1e-9

    def test_shape_mismatch_rejected(self, small_schema):
        a = make_params(small_schema, vocab_size=5, dim=4)
        b = make_params(small_schema, vocab_size=6, dim=4)
        with pytest.raises(ValueError, match="mismatch"):
            ensemble_predict([a, b], [1])
        with pytest.raises(ValueError, match="at least one"):
            ensemble_predict([], [1])


class TestCheckpointFormat:
    def test_roundtrip_exact(self, small_schema, tmp_path):
        p = make_params(small_schema, seed=13)
        save_params(p, tmp_path / "m.bin", meta={"model": 0})
        q = load_params(tmp_path / "m.bin")
        for k, t in p.tensors().items():
            np.testing.assert_array_equal(t, q.tensors()[k])

    def test_deterministic_bytes(self, small_schema, tmp_path):
        p = make_params(small_schema, seed=13)
        save_params(p, tmp_path / "a.bin")
        save_params(p, tmp_path / "b.bin")
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()

    def test_meta_preserved(self, tmp_path):
        save_tensors({"x": np.arange(6, dtype=np.float64).reshape(2, 3)}, tmp_path / "t.bin", meta={"step": 5})
        tensors, meta = load_tensors(tmp_path / "t.bin")
        assert meta == {"step": 5}
        np.testing.assert_array_equal(tensors["x"], [[0, 1, 2], [3, 4, 5]])

    def test_bad_magic_rejected(self, tmp_path):
        (tmp_path / "junk.bin").write_bytes(b"NOTATENSOR")
        with pytest.raises(ValueError, match="magic"):
            load_tensors(tmp_path / "junk.bin")


def test_zero_gradients_shapes(small_schema):
    p = make_params(small_schema)
    z = zero_gradients(p)
    for k, t in z.tensors().items():
        assert t.shape == p.tensors()[k].shape
        assert np.all(t == 0.0)
