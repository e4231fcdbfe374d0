import numpy as np
import pytest

from blockrnn.cells import ParaRnnCell, act_apply
from blockrnn.eigen import rotation_matrix
from blockrnn.features import RecurrenceFeature, classify_features
from blockrnn.linalg import BlockDiagonalMatrix, Rng
from blockrnn.net import (
    CanonicalBlocks,
    ModelSpec,
    additive_decompose,
    backward_bptt,
    build_model,
    cell_forward,
    deep_forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
)

from .oracles import fd_gradient, unrolled_rnn


def _scalar_cell(wh, wx, activation="identity"):
    return ParaRnnCell(
        np.array([[[wh]]]), np.array([[wx]]), np.zeros(1), activation
    )


class TestCellForward:
    def test_geometric_first_step(self):
        cell = _scalar_cell(0.5, 1.0)
        h, _ = cell_forward(cell, np.zeros(1), np.ones(1))
        assert h[0] == 1.0

    def test_geometric_three_steps(self):
        cell = _scalar_cell(0.5, 1.0)
        h = np.zeros(1)
        for _ in range(3):
            h, _ = cell_forward(cell, h, np.ones(1))
        assert h[0] == pytest.approx(1.75, abs=1e-15)

    def test_rotation_impulse(self):
        cell = ParaRnnCell(
            rotation_matrix(1.0, np.pi / 2).reshape(1, 2, 2),
            np.eye(2),
            np.zeros(2),
            "identity",
        )
        h = np.zeros(2)
        states = []
        for x in (np.array([1.0, 0.0]), np.zeros(2), np.zeros(2)):
            h, _ = cell_forward(cell, h, x)
            states.append(h.copy())
        assert np.allclose(states[0], [1.0, 0.0], atol=1e-15)
        assert np.allclose(states[1], [0.0, -1.0], atol=1e-15)
        assert np.allclose(states[2], [-1.0, 0.0], atol=1e-15)

    def test_k1_equals_dense_vanilla_step(self):
        rng = Rng(17)
        d = 5
        wh = rng.gaussian(0.0, 0.4, (d, d))
        wx = rng.gaussian(0.0, 1.0, (d, 3))
        b = rng.gaussian(0.0, 0.1, d)
        cell = ParaRnnCell(wh.reshape(1, d, d), wx, b, "tanh")
        h_prev = rng.gaussian(0.0, 1.0, d)
        x = rng.gaussian(0.0, 1.0, 3)
        h, hbar = cell_forward(cell, h_prev, x)
        want = np.tanh(wh @ h_prev + wx @ x + b)
        assert np.array_equal(h, want) or np.abs(h - want).max() < 1e-15

    def test_dimension_mismatch(self):
        cell = _scalar_cell(0.5, 1.0)
        with pytest.raises(ValueError):
            cell_forward(cell, np.zeros(2), np.ones(1))


class TestDeepForward:
    def test_single_layer_identity_agg_is_iterated_cell(self):
        spec = ModelSpec(d=4, block_size=2, d_in=3, activation="tanh")
        model = init_params(spec, "uniform_scaled", Rng(1))
        x = Rng(2).gaussian(0.0, 1.0, (6, 5, 3))
        out, _ = deep_forward(model, x)
        cell = model.cells[0]
        for n in range(6):
            h = np.zeros(4)
            for t in range(5):
                h, _ = cell.step(h, x[n, t])
            assert np.abs(out[n] - h).max() < 1e-13

    def test_all_zero_relu_outputs_zero(self):
        spec = ModelSpec(d=4, block_size=2, d_in=2, activation="relu",
                         aggregator="linear", agg_out=3, d_out=2)
        model = build_model(spec)  # all parameters zero
        out, _ = deep_forward(model, np.ones((3, 4, 2)))
        assert np.all(out == 0.0)

    def test_two_layers_match_hand_unrolled(self):
        spec = ModelSpec(d=4, block_size=2, d_in=3, layers=2, activation="tanh")
        model = init_params(spec, "uniform_scaled", Rng(3))
        x = Rng(4).gaussian(0.0, 1.0, (5, 6, 3))

        c0, c1 = model.cells
        w0 = c0.wh.dense()
        w1 = c1.wh.dense()
        for n in range(5):
            drive0 = x[n] @ c0.wx.T + c0.b  # (T, d)
            h0 = unrolled_rnn(w0, drive0[:, None, :], np.zeros((1, 4)), np.tanh)
            drive1 = h0[1:, 0] @ c1.wx.T + c1.b
            h1 = unrolled_rnn(w1, drive1[:, None, :], np.zeros((1, 4)), np.tanh)
            out, _ = deep_forward(model, x[n : n + 1])
            assert np.abs(out[0] - h1[-1, 0]).max() < 1e-14

    def test_seq2seq_outputs_every_step(self):
        spec = ModelSpec(d=4, block_size=2, d_in=2, mode="seq2seq",
                         aggregator="linear", agg_out=3)
        model = init_params(spec, "uniform_scaled", Rng(5))
        out, _ = deep_forward(model, Rng(6).gaussian(0.0, 1.0, (2, 7, 2)))
        assert out.shape == (2, 7, 3)

    def test_wrong_d_in_rejected(self):
        spec = ModelSpec(d=2, block_size=2, d_in=3)
        model = build_model(spec)
        with pytest.raises(ValueError, match="d_in"):
            deep_forward(model, np.zeros((1, 4, 2)))

    def test_empty_batch_rejected(self):
        spec = ModelSpec(d=2, block_size=2, d_in=1)
        model = build_model(spec)
        with pytest.raises(ValueError, match="empty"):
            deep_forward(model, np.zeros((0, 4, 1)))

    def test_block_diagonal_equals_dense_vanilla(self):
        rng = Rng(7)
        k, ds, d_in, t_len, n = 4, 3, 2, 9, 6
        d = k * ds
        blocks = rng.gaussian(0.0, 0.3, (k, ds, ds))
        wx = rng.gaussian(0.0, 1.0, (d, d_in))
        b = rng.gaussian(0.0, 0.1, d)
        x = rng.gaussian(0.0, 1.0, (n, t_len, d_in))

        spec_block = ModelSpec(d=d, block_size=ds, d_in=d_in, activation="tanh")
        model = build_model(spec_block)
        model.cells[0].wh.blocks[:] = blocks
        model.cells[0].wx[:] = wx
        model.cells[0].b[:] = b
        out_block, _ = deep_forward(model, x)

        dense = BlockDiagonalMatrix(blocks).dense()
        ref = np.empty((n, d))
        for i in range(n):
            drive = x[i] @ wx.T + b
            ref[i] = unrolled_rnn(dense, drive[:, None, :], np.zeros((1, d)), np.tanh)[-1, 0]
        assert np.abs(out_block - ref).max() < 1e-13


class TestSimilaritySurrogate:
    def test_linear_cell_reproduces_states_through_basis_change(self):
        rng = Rng(8)
        d, d_in, t_len = 6, 2, 12
        wh = rng.gaussian(0.0, 0.3, (d, d))
        wx = rng.gaussian(0.0, 1.0, (d, d_in))
        b = rng.gaussian(0.0, 0.1, d)
        basis = rng.gaussian(0.0, 1.0, (d, d)) + 3.0 * np.eye(d)
        binv = np.linalg.inv(basis)

        orig = ParaRnnCell(wh.reshape(1, d, d), wx, b, "identity")
        surr = ParaRnnCell(
            (binv @ wh @ basis).reshape(1, d, d), binv @ wx, binv @ b, "identity"
        )
        h, ht = np.zeros(d), np.zeros(d)
        x = rng.gaussian(0.0, 1.0, (t_len, d_in))
        for t in range(t_len):
            h, _ = orig.step(h, x[t])
            ht, _ = surr.step(ht, x[t])
            assert np.abs(basis @ ht - h).max() < 1e-10


class TestBackwardBptt:
    def test_linear_geometric_analytic_gradient(self):
        # h_t = w*h_{t-1} + x_t; loss = h_3^2 / 2
        # h_3 = x_3 + w x_2 + w^2 x_1, dL/dw = h_3 (x_2 + 2 w x_1)
        w = 0.5
        x = np.array([0.7, -0.3, 0.2])
        spec = ModelSpec(d=1, block_size=1, d_in=1, activation="identity")
        model = build_model(spec)
        model.cells[0].wh.blocks[0, 0, 0] = w
        model.cells[0].wx[0, 0] = 1.0
        out, cache = deep_forward(model, x.reshape(1, 3, 1))
        h3 = x[2] + w * x[1] + w * w * x[0]
        assert out[0, 0] == pytest.approx(h3, abs=1e-15)
        grads = backward_bptt(model, cache, out)  # dL/dout = out for L = out^2/2
        want = h3 * (x[1] + 2 * w * x[0])
        assert grads["cells.0.wh"][0, 0, 0] == pytest.approx(want, abs=1e-12)

    @pytest.mark.parametrize("activation", ["identity", "tanh", "relu", "sigmoid"])
    def test_finite_difference_all_parameters(self, activation):
        spec = ModelSpec(d=6, block_size=2, d_in=3, layers=2,
                         activation=activation, aggregator="linear",
                         agg_out=4, d_out=2)
        model = init_params(spec, "uniform_scaled", Rng(9))
        x = Rng(10).gaussian(0.0, 1.0, (4, 5, 3))

        params = model.params()
        names = sorted(params)
        sizes = [params[k].size for k in names]

        def pack():
            return np.concatenate([params[k].ravel() for k in names])

        def unpack(flat):
            pos = 0
            for k, s in zip(names, sizes):
                params[k][...] = flat[pos : pos + s].reshape(params[k].shape)
                pos += s

        def loss_at(flat):
            unpack(flat)
            out, _ = deep_forward(model, x)
            return 0.5 * float(np.sum(out * out))

        flat0 = pack()
        out, cache = deep_forward(model, x)
        grads = backward_bptt(model, cache, out)
        got = np.concatenate([grads[k].ravel() for k in names])
        want = fd_gradient(loss_at, flat0)
        unpack(flat0)
        denom = np.maximum(np.abs(want), 1e-4)
        rel = np.abs(got - want) / denom
        assert rel.max() < 1e-5

    def test_zero_upstream_gradient_gives_zero_grads(self):
        spec = ModelSpec(d=4, block_size=2, d_in=2, aggregator="linear",
                         agg_out=3, d_out=2)
        model = init_params(spec, "uniform_scaled", Rng(11))
        out, cache = deep_forward(model, Rng(12).gaussian(0.0, 1.0, (3, 4, 2)))
        grads = backward_bptt(model, cache, np.zeros_like(out))
        for name, g in grads.items():
            assert np.all(g == 0.0), name

    def test_stale_cache_rejected(self):
        spec = ModelSpec(d=2, block_size=2, d_in=1)
        a = init_params(spec, "uniform_scaled", Rng(13))
        b = init_params(spec, "uniform_scaled", Rng(14))
        out, cache = deep_forward(a, np.ones((1, 3, 1)))
        with pytest.raises(ValueError, match="cache"):
            backward_bptt(b, cache, out)

    def test_cross_block_gradients_decouple(self):
        # a loss reading only block 0's state must not produce gradient in
        # any other block's recurrent weights
        spec = ModelSpec(d=6, block_size=2, d_in=2, activation="tanh")
        model = init_params(spec, "uniform_scaled", Rng(15))
        out, cache = deep_forward(model, Rng(16).gaussian(0.0, 1.0, (4, 5, 2)))
        dout = np.zeros_like(out)
        dout[:, :2] = 1.0  # only block 0's two state dims
        grads = backward_bptt(model, cache, dout)
        wh = grads["cells.0.wh"]
        assert np.any(wh[0] != 0.0)
        assert np.all(wh[1:] == 0.0)

    def test_block_states_invariant_to_other_blocks(self):
        spec = ModelSpec(d=6, block_size=2, d_in=2, activation="tanh")
        model = init_params(spec, "uniform_scaled", Rng(17))
        x = Rng(18).gaussian(0.0, 1.0, (3, 6, 2))
        out0, _ = deep_forward(model, x)
        model.cells[0].wh.blocks[2] += 0.37  # perturb only block 2
        out1, _ = deep_forward(model, x)
        assert np.array_equal(out0[:, :4], out1[:, :4])
        assert not np.array_equal(out0[:, 4:], out1[:, 4:])

    def test_frozen_bias_gradients_zero(self):
        spec = ModelSpec(d=4, block_size=2, d_in=2, bias=False)
        model = init_params(spec, "uniform_scaled", Rng(19))
        out, cache = deep_forward(model, Rng(20).gaussian(0.0, 1.0, (3, 4, 2)))
        grads = backward_bptt(model, cache, np.ones_like(out))
        assert np.all(grads["cells.0.b"] == 0.0)
        assert np.any(grads["cells.0.wh"] != 0.0)


class TestAdditiveDecompose:
    def _model(self, k=4, seed=21):
        spec = ModelSpec(d=2 * k, block_size=2, d_in=2, activation="tanh",
                         aggregator="linear", agg_out=3, mode="seq2seq")
        return init_params(spec, "uniform_scaled", Rng(seed))

    def test_contributions_sum_to_aggregate(self):
        model = self._model()
        x = Rng(22).gaussian(0.0, 1.0, (5, 6, 2))
        agg_out, _ = deep_forward(model, x)  # seq2seq, no head: (N, T, d_agg)
        contribs, bias = additive_decompose(model, x)
        assert contribs.shape == (4, 5, 6, 3)
        total = contribs.sum(axis=0) + bias
        assert np.abs(total - agg_out).max() < 1e-12

    def test_single_block_is_whole_output_minus_bias(self):
        model = self._model(k=1, seed=23)
        x = Rng(24).gaussian(0.0, 1.0, (3, 4, 2))
        agg_out, _ = deep_forward(model, x)
        contribs, bias = additive_decompose(model, x)
        assert contribs.shape[0] == 1
        assert np.abs(contribs[0] + bias - agg_out).max() < 1e-12

    def test_zeroing_columns_removes_exactly_that_contribution(self):
        model = self._model(seed=25)
        x = Rng(26).gaussian(0.0, 1.0, (3, 4, 2))
        contribs, _ = additive_decompose(model, x)
        model.aggregator.tensors["w"][:, 2:4] = 0.0  # kill block 1's columns
        after, _ = additive_decompose(model, x)
        assert np.all(after[1] == 0.0)
        for k in (0, 2, 3):
            assert np.array_equal(after[k], contribs[k])

    def test_nonlinear_aggregator_rejected(self):
        spec = ModelSpec(d=4, block_size=2, d_in=2, aggregator="ffn", agg_out=3)
        model = init_params(spec, "uniform_scaled", Rng(27))
        with pytest.raises(ValueError, match="linear"):
            additive_decompose(model, np.ones((1, 3, 2)))


class TestInitSchemes:
    def test_uniform_scaled_bounds_and_bias(self):
        spec = ModelSpec(d=16, block_size=4, d_in=8, aggregator="linear",
                         agg_out=4, d_out=2)
        model = init_params(spec, "uniform_scaled", Rng(28))
        bound = 1.0 / np.sqrt(16.0)
        for name, tensor in model.params().items():
            leaf = name.rsplit(".", 1)[1]
            if leaf.startswith("b"):
                assert np.all(tensor == 0.0), name
            else:
                assert np.abs(tensor).max() <= bound, name
                assert np.abs(tensor).max() > 0.0, name

    def test_identity_recurrent_classifies_all_r_unit(self):
        spec = ModelSpec(d=8, block_size=2, d_in=3)
        model = init_params(spec, "identity_recurrent", Rng(29))
        report = classify_features(model.recurrent_matrix(0))
        assert all(f.kind == "R" for f in report.features)
        assert all(f.lam == pytest.approx(1.0) for f in report.features)

    def test_canonical_blocks_round_trip(self):
        feats = (
            RecurrenceFeature("R", 4, lam=0.3),
            RecurrenceFeature("C", 2, gamma=0.8, theta=0.5),
        )
        spec = ModelSpec(d=8, block_size=4, d_in=2)
        model = init_params(spec, CanonicalBlocks(feats), Rng(30))
        report = classify_features(model.recurrent_matrix(0))
        labels = sorted(f.label() for f in report.features)
        assert labels == ["C-2", "R-4"]

    def test_canonical_blocks_straddling_boundary_rejected(self):
        feats = (
            RecurrenceFeature("R", 1, lam=0.5),
            RecurrenceFeature("C", 1, gamma=0.9, theta=0.4),
            RecurrenceFeature("R", 1, lam=-0.2),
        )
        spec = ModelSpec(d=4, block_size=2, d_in=1)
        with pytest.raises(ValueError):
            init_params(spec, CanonicalBlocks(feats), Rng(31))

    def test_canonical_blocks_wrong_span_rejected(self):
        spec = ModelSpec(d=6, block_size=2, d_in=1)
        with pytest.raises(ValueError, match="span"):
            init_params(spec, CanonicalBlocks((RecurrenceFeature("R", 2, lam=0.1),)), Rng(32))

    def test_uniform_scaled_strict_classification_order_one(self):
        spec = ModelSpec(d=16, block_size=16, d_in=2)
        model = init_params(spec, "uniform_scaled", Rng(5))
        report = classify_features(model.recurrent_matrix(0), tol_cluster=0.0)
        assert all(f.order == 1 for f in report.features)

    def test_unknown_scheme_rejected(self):
        spec = ModelSpec(d=2, block_size=2, d_in=1)
        with pytest.raises(ValueError):
            init_params(spec, "xavier", Rng(33))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        spec = ModelSpec(d=6, block_size=3, d_in=2, layers=2, cell="lstm",
                         aggregator="ffn", agg_out=4, agg_hidden=5, d_out=3,
                         input_proj=True)
        model = init_params(spec, "uniform_scaled", Rng(34))
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, path)
        again = load_checkpoint(path)
        assert again.spec == model.spec
        assert again.frozen == model.frozen
        a, b = model.params(), again.params()
        assert sorted(a) == sorted(b)
        for name in a:
            assert np.array_equal(a[name], b[name]), name

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_text("not a checkpoint\n")
        with pytest.raises(ValueError, match="checkpoint"):
            load_checkpoint(path)

    def test_gru_round_trip(self, tmp_path):
        spec = ModelSpec(d=4, block_size=2, d_in=3, cell="gru", d_out=2)
        model = init_params(spec, "uniform_scaled", Rng(35))
        path = tmp_path / "gru.ckpt"
        save_checkpoint(model, path)
        again = load_checkpoint(path)
        x = Rng(36).gaussian(0.0, 1.0, (2, 5, 3))
        out_a, _ = deep_forward(model, x)
        out_b, _ = deep_forward(again, x)
        assert np.array_equal(out_a, out_b)


class TestModelSpec:
    def test_rejects_indivisible_blocks(self):
        with pytest.raises(ValueError, match="divisible"):
            ModelSpec(d=6, block_size=4, d_in=1)

    def test_rejects_unknown_cell(self):
        with pytest.raises(ValueError, match="cell"):
            ModelSpec(d=4, block_size=2, d_in=1, cell="transformer")

    def test_json_round_trip(self):
        spec = ModelSpec(d=8, block_size=2, d_in=3, layers=2, cell="gru",
                         aggregator="linear", agg_out=5, d_out=4, mode="seq2seq")
        assert ModelSpec.from_json(spec.to_json()) == spec
