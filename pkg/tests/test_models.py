import numpy as np
import pytest

from dialectid import autodiff as ad
from dialectid import models
from dialectid.errors import InvalidShape
from dialectid.models import AmModel, BaselineModel, LidHead, ModelConfig


MICRO = ModelConfig(scale="micro", vocab_size=12, n_dialects=4)


@pytest.fixture(scope="module")
def micro_am():
    return AmModel(MICRO, seed=0)


class TestAmForward:
    def test_full_scale_shapes(self):
        cfg = ModelConfig(scale="full", vocab_size=66, use_bn=False)
        am = AmModel(cfg, seed=0)
        trace = []
        lattice, inter = am.forward(np.zeros((400, 40)), trace=trace)
        assert lattice.data.shape == (100, 67)
        assert inter.data.shape == (100, 512)
        assert ("blstm", (100, 512)) in trace
        assert ("output", (100, 67)) in trace

    def test_rows_normalized(self, micro_am):
        lattice, _ = micro_am.forward(np.random.default_rng(0).normal(size=(64, 40)))
        sums = np.log(np.exp(lattice.data).sum(axis=1))
        np.testing.assert_allclose(sums, 0.0, atol=1e-9)

    def test_micro_intermediate_shape(self, micro_am):
        _, inter = micro_am.forward(np.random.default_rng(1).normal(size=(100, 40)))
        assert inter.data.shape == (25, 64)

    def test_eval_is_pure(self, micro_am):
        feats = np.random.default_rng(2).normal(size=(60, 40))
        a = micro_am.forward(feats)[0].data
        b = micro_am.forward(feats)[0].data
        np.testing.assert_array_equal(a, b)


class TestLidHead:
    def test_output_normalized(self):
        head = LidHead(MICRO, in_dim=64, seed=1)
        logp = head.forward(np.random.default_rng(3).normal(size=(25, 64)))
        assert logp.data.shape == (4,)
        assert abs(np.log(np.exp(logp.data).sum())) < 1e-9

    def test_single_frame_pooling_identity(self):
        head = LidHead(MICRO, in_dim=64, seed=1)
        inter = np.random.default_rng(4).normal(size=(1, 64))
        logp = head.forward(inter)
        # with one frame, pooling is the identity on the frame logits
        x = ad.constant(inter)
        from dialectid import layers
        h = layers.birnn_forward(x, head.store, "rnn", 2, MICRO.head_hidden,
                                 kind="lstm")
        logits = (h.data @ head.store["cls.w"].data + head.store["cls.b"].data)[0]
        want = logits - np.log(np.exp(logits).sum())
        np.testing.assert_allclose(logp.data, want, rtol=1e-12)

    def test_eval_deterministic(self):
        head = LidHead(MICRO, in_dim=64, seed=1)
        inter = np.random.default_rng(5).normal(size=(20, 64))
        np.testing.assert_array_equal(head.forward(inter).data,
                                      head.forward(inter).data)

    def test_argmax_shift_invariance(self):
        head = LidHead(MICRO, in_dim=64, seed=2)
        inter = np.random.default_rng(6).normal(size=(15, 64))
        base = head.forward(inter).data
        shifted = head.store["cls.b"].data + 7.5  # constant added to all logits
        orig = head.store["cls.b"].data.copy()
        head.store["cls.b"].data = shifted
        after = head.forward(inter).data
        head.store["cls.b"].data = orig
        assert base.argmax() == after.argmax()

    def test_width_mismatch(self):
        head = LidHead(MICRO, in_dim=64, seed=1)
        with pytest.raises(InvalidShape):
            head.forward(np.zeros((10, 32)))

    def test_bgru_option(self):
        cfg = ModelConfig(scale="micro", vocab_size=12, n_dialects=4,
                          head_rnn="bgru", head_layers=3)
        head = LidHead(cfg, in_dim=64, seed=3)
        logp = head.forward(np.random.default_rng(7).normal(size=(12, 64)))
        assert logp.data.shape == (4,)
        assert abs(np.log(np.exp(logp.data).sum())) < 1e-9

    def test_hidden_pool_option(self):
        cfg = ModelConfig(scale="micro", vocab_size=12, n_dialects=4,
                          head_pool="hidden")
        head = LidHead(cfg, in_dim=64, seed=4)
        logp = head.forward(np.random.default_rng(8).normal(size=(12, 64)))
        assert logp.data.shape == (4,)


class TestBaseline:
    def test_reads_40dim_features(self):
        base = BaselineModel(MICRO, seed=5)
        logp = base.forward(np.random.default_rng(9).normal(size=(80, 40)))
        assert logp.data.shape == (4,)
        assert abs(np.log(np.exp(logp.data).sum())) < 1e-9


class TestParamCount:
    def test_full_trunk_near_published_budget(self):
        cfg = ModelConfig(scale="full", vocab_size=66, use_bn=False)
        count = AmModel(cfg, seed=0).trunk_param_count()
        assert count == 5_269_824  # regression constant
        assert abs(count - 5.36e6) / 5.36e6 < 0.03

    def test_micro_trunk_regression(self, micro_am):
        assert micro_am.trunk_param_count() == 83_464

    def test_channel_doubling_ratio(self):
        from dialectid import layers

        def trunk_count(channels):
            cfg = layers.ResNetConfig(channels=channels, use_bn=False)
            store = layers.init_params(
                lambda s, rng: layers.build_resnet14(s, "trunk", cfg, rng), 0)
            return store.param_count(trainable_only=True)

        small = trunk_count((8, 16, 32, 64))
        big = trunk_count((16, 32, 64, 128))
        assert 3.0 < big / small < 4.5


class TestGradientFlow:
    def test_all_reachable_params_get_gradients(self):
        head = LidHead(MICRO, in_dim=64, seed=6)
        inter = np.random.default_rng(10).normal(size=(10, 64))
        with ad.Tape():
            logp = head.forward(inter, train_mode=True, dropout_rate=0.0)
            grads = ad.backward(models.cross_entropy(logp, 2))
        for name, t in head.store.trainable():
            assert t.node_id in grads, name
            assert np.any(grads[t.node_id].data != 0.0), name

    def test_frozen_params_get_no_gradients(self, micro_am):
        # eval-mode acoustic model runs outside the tape: the classifier's
        # gradient map must contain no acoustic-model entries
        feats = np.random.default_rng(11).normal(size=(48, 40))
        _, inter = micro_am.forward(feats, train_mode=False)
        head = LidHead(MICRO, in_dim=64, seed=7)
        with ad.Tape():
            logp = head.forward(inter.data, train_mode=True, dropout_rate=0.0)
            grads = ad.backward(models.cross_entropy(logp, 0))
        am_ids = {t.node_id for _, t in micro_am.store.items()}
        assert not (set(grads) & am_ids)
        assert len(grads) == len(head.store.trainable())


class TestCrossEntropy:
    def test_self_entropy_identity(self):
        p = np.array([0.1, 0.2, 0.3, 0.4])
        logp = ad.constant(np.log(p))
        loss = models.cross_entropy(logp, p)
        entropy = -(p * np.log(p)).sum()
        assert abs(float(loss.data) - entropy) < 1e-12

    def test_loss_nonnegative_and_zero_at_onehot(self):
        logp = ad.constant(np.log(np.array([1.0 - 2e-12, 1e-12, 1e-12])))
        assert 0.0 <= float(models.cross_entropy(logp, 0).data) < 1e-9

    def test_gradient_is_softmax_minus_onehot(self):
        rng = np.random.default_rng(12)
        logits = ad.tensor_new([5], rng.normal(size=5), requires_grad=True)
        label = 3
        with ad.Tape():
            logp = ad.log_softmax(logits, axis=0)
            grads = ad.backward(models.cross_entropy(logp, label))
        soft = np.exp(logits.data - logits.data.max())
        soft /= soft.sum()
        onehot = np.eye(5)[label]
        np.testing.assert_allclose(grads[logits.node_id].data, soft - onehot,
                                   rtol=1e-10, atol=1e-12)

    def test_gradient_against_finite_difference(self):
        rng = np.random.default_rng(13)
        logits = ad.tensor_new([6], rng.normal(size=6), requires_grad=True)

        def f(v):
            return models.cross_entropy(ad.log_softmax(v, axis=0), 2)

        assert ad.finite_diff_check(f, logits, eps=1e-6) < 1e-8

    def test_frame_cross_entropy(self):
        lattice = ad.constant(np.log(np.array([
            [0.8, 0.1, 0.1],
            [0.1, 0.8, 0.1],
        ])))
        loss = models.frame_cross_entropy(lattice, [0, 1])
        assert abs(float(loss.data) + np.log(0.8)) < 1e-12
        with pytest.raises(InvalidShape):
            models.frame_cross_entropy(lattice, [0, 1, 2])


class TestVocab:
    def test_roundtrip_and_hash(self, tmp_path):
        units = models.default_vocab(12)
        path = tmp_path / "vocab.txt"
        models.save_vocab(path, units)
        back = models.load_vocab(path)
        assert back == units
        assert models.vocab_hash(back) == models.vocab_hash(units)
        assert models.vocab_hash(units[:-1]) != models.vocab_hash(units)
