"""Architecture construction, shape audits, and forward contracts."""

import numpy as np
import pytest

from beatlearn.autodiff import SGD, Tape, backward
from beatlearn.errors import CheckpointError, ConfigError, DimensionError
from beatlearn.network import (
    Model,
    NetworkSpec,
    ResidualBlockSpec,
    build_network,
    default_network_spec,
    predict_proba,
)
from beatlearn.seeding import substream
from beatlearn.training import positive_loss


def small_spec(dropout=0.0):
    return default_network_spec(base_filters=4, dropout_rate=dropout, stem_stride=2)


class TestSpecs:
    def test_default_spec_counts_twelve_conv_layers(self):
        spec = default_network_spec()
        assert spec.conv_layer_count == 12
        assert len(spec.blocks) == 5

    def test_filters_double_at_last_block(self):
        spec = default_network_spec(base_filters=32)
        outs = [b.channels_out for b in spec.blocks]
        assert outs == [32, 32, 32, 32, 64]

    def test_blocks_two_and_four_subsample(self):
        spec = default_network_spec()
        assert [b.subsample for b in spec.blocks] == [False, True, False, True, False]

    def test_feature_lengths_follow_floor_formula(self):
        # pooling window 2 stride 2: 250 -> 125 -> 62
        spec = default_network_spec()
        lengths = spec.feature_lengths()
        assert lengths == {"stem": 250, "block1": 250, "block2": 125,
                           "block3": 125, "block4": 62, "block5": 62}

    def test_projection_needed_iff_channels_change_or_subsample(self):
        assert not ResidualBlockSpec(8, 8).needs_projection
        assert ResidualBlockSpec(8, 16).needs_projection
        assert ResidualBlockSpec(8, 8, subsample=True).needs_projection

    def test_wrong_block_count_rejected(self):
        spec = default_network_spec()
        bad = NetworkSpec(blocks=spec.blocks[:4])
        with pytest.raises(ConfigError):
            bad.validate()

    def test_channel_chain_mismatch_rejected(self):
        blocks = list(default_network_spec(base_filters=8).blocks)
        blocks[2] = ResidualBlockSpec(99, 8)
        with pytest.raises(ConfigError):
            NetworkSpec(stem_channels=8, blocks=tuple(blocks)).validate()

    def test_json_round_trip(self):
        spec = default_network_spec(base_filters=16, stem_stride=2)
        again = NetworkSpec.from_json_dict(spec.to_json_dict())
        assert again == spec


class TestModelConstruction:
    def test_parameter_count_matches_closed_form(self):
        base = 32
        spec = default_network_spec(base_filters=base)
        model = build_network(spec, substream(0, "init"))

        def conv(cout, cin, k):
            return cout * cin * k  # no bias on convs feeding a batch norm

        expected = conv(base, 1, 15) + 2 * base            # stem conv + bn
        for block in spec.blocks:
            cin, cout = block.channels_in, block.channels_out
            expected += conv(cout, cin, 15) + 2 * cout     # conv1 + bn1
            expected += conv(cout, cout, 15) + 2 * cout    # conv2 + bn2
            if block.needs_projection:
                expected += cout * cin * 1 + cout          # 1x1 proj with bias
        final_c = 2 * base
        expected += final_c * final_c * 1 + final_c        # final 1x1 conv
        expected += 6 * (final_c * 62) + 6                 # dense head
        assert sum(p.size for p in model.parameters()) == expected

    def test_parameter_names_unique(self):
        model = build_network(small_spec(), substream(1, "init"))
        names = [p.name for p in model.parameters()]
        assert len(names) == len(set(names))

    def test_projection_kernel_shape_for_channel_doubling(self):
        model = build_network(default_network_spec(base_filters=16), substream(2, "init"))
        proj = model.param("block5.proj.weight")
        assert proj.data.shape == (32, 16, 1)

    def test_last_bn_gamma_starts_at_zero(self):
        model = build_network(small_spec(), substream(3, "init"))
        for i in range(1, 6):
            assert np.all(model.param(f"block{i}.bn2.gamma").data == 0.0)
            assert np.all(model.param(f"block{i}.bn1.gamma").data == 1.0)


class TestForward:
    def test_rows_form_probability_simplex(self):
        model = build_network(small_spec(), substream(4, "init"))
        x = np.random.default_rng(0).normal(size=(5, 1, 250))
        probs = predict_proba(model, x)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)
        assert (probs > 0).all() and (probs < 1).all()

    def test_zeroed_head_gives_uniform_rows(self):
        model = build_network(small_spec(), substream(5, "init"))
        model.param("head.weight").data[...] = 0.0
        model.param("head.bias").data[...] = 0.0
        probs = predict_proba(model, np.zeros((3, 1, 250)))
        np.testing.assert_allclose(probs, 1.0 / 6.0)

    def test_eval_mode_is_deterministic(self):
        model = build_network(small_spec(dropout=0.3), substream(6, "init"))
        x = np.random.default_rng(1).normal(size=(2, 1, 250))
        np.testing.assert_array_equal(predict_proba(model, x), predict_proba(model, x))

    def test_wrong_input_length_rejected(self):
        model = build_network(small_spec(), substream(7, "init"))
        with pytest.raises(DimensionError):
            predict_proba(model, np.zeros((2, 1, 100)))

    def test_confidence_is_max_probability(self):
        row = np.array([[0.1, 0.8, 0.1]])
        assert row.argmax(axis=1)[0] == 1
        assert row.max(axis=1)[0] == 0.8

    def test_initial_network_equals_shortcut_cascade(self):
        """With every block's last bn at gamma 0, the untrained forward must
        reduce to stem -> per-block shortcut transforms -> head."""
        from beatlearn import autodiff as ad

        spec = small_spec()
        model = build_network(spec, substream(8, "init"))
        x = np.random.default_rng(2).normal(size=(3, 1, 250))
        full = predict_proba(model, x)

        h = ad.conv1d(None, ad.Tensor(x), model.param("stem.conv.weight"),
                      ad.Tensor(np.zeros(spec.stem_channels)),
                      stride=spec.stem_stride, padding=(spec.stem_kernel - 1) // 2)
        h = ad.batchnorm1d(None, h, model.param("stem.bn.gamma"),
                           model.param("stem.bn.beta"),
                           model._bn_states["stem.bn"], "eval")
        h = ad.relu(None, h)
        for i, block in enumerate(spec.blocks, start=1):
            if block.subsample:
                h = ad.maxpool1d(None, h, 2, 2)
            if block.needs_projection:
                bn2_beta = model.param(f"block{i}.bn2.beta")
                proj = ad.conv1d(None, h, model.param(f"block{i}.proj.weight"),
                                 model.param(f"block{i}.proj.bias"))
                shifted = ad.Tensor(proj.data + bn2_beta.data[None, :, None])
                h = ad.relu(None, shifted)
            else:
                bn2_beta = model.param(f"block{i}.bn2.beta")
                h = ad.relu(None, ad.Tensor(h.data + bn2_beta.data[None, :, None]))
        h = ad.conv1d(None, h, model.param("final.conv.weight"),
                      model.param("final.conv.bias"))
        h = ad.relu(None, h)
        h = ad.flatten(None, h)
        logits = ad.dense(None, h, model.param("head.weight"), model.param("head.bias"))
        cascade = ad.softmax(None, logits).data
        np.testing.assert_allclose(full, cascade, atol=1e-3)


class TestGradientFlow:
    def test_every_parameter_receives_gradient_after_warm_start(self):
        """The zero-gamma residual init blocks the F-path gradient on the very
        first step (only bn2's own parameters see it); one optimizer step
        moves gamma off zero, after which gradient must reach everything."""
        rng = np.random.default_rng(3)
        model = build_network(small_spec(dropout=0.0), substream(9, "init"))
        x = rng.normal(size=(4, 1, 250))
        y = np.zeros((4, 6))
        y[np.arange(4), rng.integers(0, 6, size=4)] = 1.0
        opt = SGD(model.parameters(), alpha=0.01, momentum=0.0)
        for _ in range(2):
            tape = Tape()
            probs = model.forward(x, mode="train", tape=tape)
            loss = positive_loss(tape, probs, y)
            opt.zero_grad()
            backward(tape, loss)
            opt.step()
        dead = [p.name for p in model.parameters() if np.all(p.grad == 0.0)]
        assert dead == []


class TestStateDict:
    def test_round_trip_restores_forward(self):
        model = build_network(small_spec(), substream(10, "init"))
        x = np.random.default_rng(4).normal(size=(2, 1, 250))
        before = predict_proba(model, x)
        state = model.state_dict()
        # scribble over the parameters, then restore
        for p in model.parameters():
            p.data = p.data + 1.0
        model.load_state_dict(state)
        np.testing.assert_array_equal(predict_proba(model, x), before)

    def test_architecture_mismatch_rejected(self):
        a = build_network(small_spec(), substream(11, "init"))
        b = build_network(default_network_spec(base_filters=8, stem_stride=2),
                          substream(11, "init"))
        with pytest.raises(CheckpointError):
            a.load_state_dict(b.state_dict())

    def test_missing_key_rejected(self):
        model = build_network(small_spec(), substream(12, "init"))
        state = model.state_dict()
        state.pop("head.bias")
        with pytest.raises(CheckpointError):
            model.load_state_dict(state)

    def test_checkpoint_file_round_trip(self, tmp_path):
        from beatlearn.checkpoint import load_arrays, save_arrays

        model = build_network(small_spec(), substream(13, "init"))
        x = np.random.default_rng(5).normal(size=(2, 1, 250))
        before = predict_proba(model, x)
        save_arrays(tmp_path / "ckpt", model.state_dict())
        fresh = build_network(small_spec(), substream(99, "init"))
        fresh.load_state_dict(load_arrays(tmp_path / "ckpt"))
        np.testing.assert_array_equal(predict_proba(fresh, x), before)
