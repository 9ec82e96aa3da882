import numpy as np
import pytest

from dialectid import autodiff as ad
from dialectid import layers
from dialectid.errors import InputTooShort, InvalidShape
from dialectid.layers import ParamStore, ResNetConfig


def build_micro_trunk(seed=0, use_bn=True):
    cfg = layers.micro_resnet_config(use_bn=use_bn)
    store = layers.init_params(
        lambda s, rng: layers.build_resnet14(s, "trunk", cfg, rng), seed)
    return cfg, store


def trunk_out(feats, cfg, store, train_mode=False, trace=None):
    x = ad.constant(feats)
    return layers.resnet14_forward(x, store, "trunk", cfg, train_mode, trace=trace)


class TestResNetShapes:
    @pytest.mark.parametrize("n_frames", [100, 160, 400])
    def test_trace_matches_published_sizes(self, n_frames):
        cfg, store = build_micro_trunk()
        trace = []
        out = trunk_out(np.zeros((n_frames, 40)), cfg, store, trace=trace)
        t2 = -(-n_frames // 2)
        t4 = -(-n_frames // 4)
        c1, c2, c3, c4 = cfg.channels
        want = [
            ("conv1", (1, c1, t2, 20)),
            ("maxpool", (1, c1, t4, 10)),
            ("res_conv1", (1, c1, t4, 5)),
            ("res_conv2", (1, c2, t4, 3)),
            ("res_conv3", (1, c3, t4, 2)),
            ("res_conv4", (1, c4, t4, 1)),
        ]
        assert trace == want
        assert out.data.shape == (t4, c4)

    def test_micro_output_t100(self):
        cfg, store = build_micro_trunk()
        out = trunk_out(np.random.default_rng(0).normal(size=(100, 40)), cfg, store)
        assert out.data.shape == (25, 64)

    def test_input_too_short(self):
        cfg, store = build_micro_trunk()
        with pytest.raises(InputTooShort):
            trunk_out(np.zeros((7, 40)), cfg, store)

    def test_eval_deterministic(self):
        cfg, store = build_micro_trunk()
        feats = np.random.default_rng(1).normal(size=(64, 40))
        np.testing.assert_array_equal(trunk_out(feats, cfg, store).data,
                                      trunk_out(feats, cfg, store).data)


class TestInit:
    def test_same_seed_bit_identical(self):
        _, a = build_micro_trunk(seed=7)
        _, b = build_micro_trunk(seed=7)
        assert a.state_bytes() == b.state_bytes()

    def test_different_seed_differs(self):
        _, a = build_micro_trunk(seed=7)
        _, b = build_micro_trunk(seed=8)
        assert a.state_bytes() != b.state_bytes()

    def test_weight_bounds(self):
        store = layers.init_params(
            lambda s, rng: (
                layers.build_resnet14(s, "trunk", layers.micro_resnet_config(), rng),
                layers.add_birnn(s, "rnn", rng, 64, 16, 2),
                layers.add_linear(s, "proj", rng, 32, 13),
            ), 3)
        checked = 0
        for name, t in store.items():
            if not (name.endswith(".w") or name.endswith(".wx") or name.endswith(".wh")):
                continue
            w = t.data
            fan_in = w.shape[1] * w.shape[2] * w.shape[3] if w.ndim == 4 else w.shape[0]
            bound = np.sqrt(6.0 / fan_in)
            assert np.all(np.isfinite(w))
            assert np.all(np.abs(w) <= bound)
            checked += 1
        assert checked > 10

    def test_lstm_forget_bias(self):
        store = layers.init_params(
            lambda s, rng: layers.add_lstm(s, "cell", rng, 8, 4), 0)
        b = store["cell.b"].data
        np.testing.assert_array_equal(b[4:8], np.ones(4))
        np.testing.assert_array_equal(b[:4], np.zeros(4))
        np.testing.assert_array_equal(b[8:], np.zeros(8))


def build_blstm(in_dim=6, hidden=4, layers_n=2, seed=0, kind="lstm"):
    return layers.init_params(
        lambda s, rng: layers.add_birnn(s, "rnn", rng, in_dim, hidden, layers_n,
                                        kind=kind), seed)


class TestBiRnn:
    def test_zero_params_zero_output(self):
        store = build_blstm()
        for _, t in store.items():
            t.data[...] = 0.0
        x = ad.constant(np.zeros((5, 6)))
        out = layers.blstm_forward(x, store, "rnn", 2, 4)
        np.testing.assert_array_equal(out.data, np.zeros((5, 8)))

    def test_single_frame_mirrored_directions(self):
        store = build_blstm(layers_n=1)
        for name in list(store.names("rnn.l0.fwd")):
            store[name.replace(".fwd.", ".bwd.")].data = store[name].data.copy()
        x = ad.constant(np.random.default_rng(2).normal(size=(1, 6)))
        out = layers.blstm_forward(x, store, "rnn", 1, 4)
        np.testing.assert_allclose(out.data[:, :4], out.data[:, 4:], rtol=1e-12)

    def test_output_width(self):
        store = build_blstm(in_dim=6, hidden=4, layers_n=2)
        x = ad.constant(np.random.default_rng(3).normal(size=(7, 6)))
        out = layers.blstm_forward(x, store, "rnn", 2, 4)
        assert out.data.shape == (7, 8)

    def test_width_mismatch(self):
        store = build_blstm(in_dim=6)
        with pytest.raises(InvalidShape):
            layers.blstm_forward(ad.constant(np.zeros((4, 5))), store, "rnn", 2, 4)

    @pytest.mark.parametrize("kind", ["lstm", "gru"])
    def test_gradient_check(self, kind):
        store = build_blstm(in_dim=3, hidden=2, layers_n=2, seed=5, kind=kind)
        x0 = np.random.default_rng(6).normal(size=(4, 3))

        def f(v):
            out = layers.birnn_forward(v, store, "rnn", 2, 2, kind=kind)
            return ad.sum_(ad.mul(out, out))

        err = ad.finite_diff_check(f, ad.constant(x0), eps=1e-6)
        assert err < 1e-6

    def test_param_gradients_flow(self):
        store = build_blstm(in_dim=3, hidden=2, layers_n=1)
        x = ad.constant(np.random.default_rng(7).normal(size=(5, 3)))
        with ad.Tape():
            out = layers.blstm_forward(x, store, "rnn", 1, 2)
            grads = ad.backward(ad.sum_(ad.mul(out, out)))
        for name, t in store.trainable():
            g = grads[t.node_id].data
            assert g.shape == t.data.shape
            assert np.any(g != 0.0), f"no gradient reached {name}"


class TestTrunkGradients:
    def test_resnet_input_gradient(self):
        cfg = ResNetConfig(channels=(2, 3, 4, 5), blocks=(1, 1, 1, 1), use_bn=False)
        store = layers.init_params(
            lambda s, rng: layers.build_resnet14(s, "trunk", cfg, rng), 11)
        feats = np.random.default_rng(12).normal(size=(8, 40))

        def f(v):
            out = layers.resnet14_forward(v, store, "trunk", cfg, False)
            return ad.sum_(ad.mul(out, out))

        err = ad.finite_diff_check(f, ad.constant(feats), eps=1e-6,
                                   coords=range(0, 320, 7))
        assert err < 1e-6

    def test_resnet_weight_gradient_with_bn_eval(self):
        cfg = ResNetConfig(channels=(2, 3, 4, 5), blocks=(1, 1, 1, 1), use_bn=True)
        store = layers.init_params(
            lambda s, rng: layers.build_resnet14(s, "trunk", cfg, rng), 13)
        feats = ad.constant(np.random.default_rng(14).normal(size=(8, 40)))
        w = store["trunk.s3.b0.conv1.w"]
        gamma = store["trunk.s1.b0.bn2.gamma"]

        def f(_):
            out = layers.resnet14_forward(feats, store, "trunk", cfg, False)
            return ad.sum_(ad.mul(out, out))

        for target in (w, gamma):
            err = ad.finite_diff_check(f, target, eps=1e-6,
                                       coords=range(0, target.data.size, 5))
            assert err < 1e-6


class TestTimeAvgPool:
    def test_mean(self):
        out = layers.time_avg_pool(ad.constant(np.array([[1.0, 3.0], [3.0, 1.0]])))
        np.testing.assert_array_equal(out.data, [2.0, 2.0])

    def test_single_frame_identity(self):
        frame = np.array([[0.5, -1.0, 2.0]])
        out = layers.time_avg_pool(ad.constant(frame))
        np.testing.assert_array_equal(out.data, frame[0])

    def test_permutation_invariance(self):
        rng = np.random.default_rng(8)
        frames = rng.normal(size=(9, 5))
        shuffled = frames[rng.permutation(9)]
        a = layers.time_avg_pool(ad.constant(frames)).data
        b = layers.time_avg_pool(ad.constant(shuffled)).data
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(InvalidShape):
            layers.time_avg_pool(ad.constant(np.zeros(4)))


class TestParamStore:
    def test_duplicate_name(self):
        store = ParamStore()
        store.add("a", ad.constant(np.zeros(2)))
        with pytest.raises(InvalidShape):
            store.add("a", ad.constant(np.zeros(2)))

    def test_iteration_order(self):
        store = ParamStore()
        for name in ("z", "a", "m"):
            store.add(name, ad.constant(np.zeros(1)))
        assert store.names() == ["z", "a", "m"]
