import json

import numpy as np
import pytest

from blockrnn.datagen import SequenceBatch
from blockrnn.linalg import Rng
from blockrnn.net import ModelSpec, build_model, deep_forward, init_params
from blockrnn.train import (
    AdamState,
    Constant,
    Metrics,
    ReduceOnPlateau,
    StepDecay,
    TrainConfig,
    TrainingDiverged,
    adam_step,
    cross_entropy_loss,
    evaluate,
    init_adam,
    mse_loss,
    train,
    write_metrics_jsonl,
)
from blockrnn.train import _clip_grads

from .oracles import fd_gradient, lstsq_fit


class TestAdam:
    def test_first_step_is_signed_lr(self):
        # with zeroed moments, step 1 moves each weight by -lr * g/(|g|+eps)
        params = {"w": np.array([1.0, 2.0])}
        grads = {"w": np.array([0.5, -3.0])}
        state = init_adam(params)
        adam_step(params, grads, state, lr=0.01)
        assert abs(params["w"][0] - (1.0 - 0.01)) < 1e-9
        assert abs(params["w"][1] - (2.0 + 0.01)) < 1e-9

    def test_zero_gradient_leaves_params_untouched(self):
        params = {"w": np.array([0.3, -0.7])}
        state = init_adam(params)
        adam_step(params, {"w": np.zeros(2)}, state, lr=0.5)
        assert np.array_equal(params["w"], [0.3, -0.7])

    def test_minimizes_quadratic(self):
        params = {"w": np.array([2.0])}
        state = init_adam(params)
        for _ in range(100):
            adam_step(params, {"w": 2.0 * params["w"]}, state, lr=0.05)
        assert abs(params["w"][0]) < 0.5

    def test_shape_mismatch_rejected(self):
        params = {"w": np.zeros(2)}
        state = init_adam(params)
        with pytest.raises(ValueError, match="shape"):
            adam_step(params, {"w": np.zeros(3)}, state, lr=0.1)

    def test_non_finite_gradient_names_tensor(self):
        params = {"w": np.zeros(2), "bad_tensor": np.zeros(1)}
        state = init_adam(params)
        grads = {"w": np.zeros(2), "bad_tensor": np.array([np.nan])}
        with pytest.raises(TrainingDiverged, match="bad_tensor"):
            adam_step(params, grads, state, lr=0.1)

    def test_non_positive_lr_rejected(self):
        params = {"w": np.zeros(1)}
        with pytest.raises(ValueError, match="lr"):
            adam_step(params, {"w": np.zeros(1)}, init_adam(params), lr=0.0)


class TestLosses:
    def test_mse_value_and_gradient(self):
        pred = np.array([[1.0, 2.0], [3.0, 5.0]])
        target = np.array([[0.0, 2.0], [3.0, 1.0]])
        loss, grad = mse_loss(pred, target)
        assert loss == pytest.approx((1.0 + 0.0 + 0.0 + 16.0) / 4.0)
        assert np.allclose(grad, 2.0 / 4.0 * (pred - target))

    def test_mse_gradient_matches_finite_differences(self):
        target = Rng(80).gaussian(0.0, 1.0, (3, 4))
        pred = Rng(81).gaussian(0.0, 1.0, (3, 4))
        _, grad = mse_loss(pred, target)
        fd = fd_gradient(lambda p: mse_loss(p.reshape(3, 4), target)[0], pred.ravel())
        assert np.abs(grad.ravel() - fd).max() < 1e-9

    def test_mse_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            mse_loss(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_cross_entropy_uniform_logits(self):
        logits = np.zeros((4, 3))
        loss, _ = cross_entropy_loss(logits, np.array([0, 1, 2, 0]))
        assert loss == pytest.approx(np.log(3.0))

    def test_cross_entropy_gradient_matches_finite_differences(self):
        logits = Rng(82).gaussian(0.0, 1.0, (5, 4))
        labels = np.array([0, 3, 1, 2, 2])
        _, grad = cross_entropy_loss(logits, labels)
        fd = fd_gradient(
            lambda z: cross_entropy_loss(z.reshape(5, 4), labels)[0], logits.ravel()
        )
        assert np.abs(grad.ravel() - fd).max() < 1e-9

    def test_cross_entropy_one_hot_equals_integer_labels(self):
        logits = Rng(83).gaussian(0.0, 1.0, (6, 3))
        labels = np.array([2, 0, 1, 1, 2, 0])
        one_hot = np.eye(3)[labels]
        a = cross_entropy_loss(logits, labels)
        b = cross_entropy_loss(logits, one_hot)
        assert a[0] == b[0]
        assert np.array_equal(a[1], b[1])

    def test_cross_entropy_label_out_of_range(self):
        with pytest.raises(ValueError, match="range"):
            cross_entropy_loss(np.zeros((2, 3)), np.array([0, 3]))


class TestEvaluate:
    def _batch(self, inputs, targets):
        return SequenceBatch(np.asarray(inputs, dtype=float), np.asarray(targets, dtype=float))

    def test_mse_metric(self):
        spec = ModelSpec(d=2, block_size=2, d_in=2, activation="relu")
        model = build_model(spec)  # predicts all zeros
        batch = self._batch(np.ones((3, 2, 2)), [[1.0, 0.0], [0.0, 2.0], [0.0, 0.0]])
        assert evaluate(model, batch) == pytest.approx(5.0 / 6.0)

    def test_accuracy_metric(self):
        spec = ModelSpec(d=2, block_size=2, d_in=2, activation="identity")
        model = build_model(spec)
        model.cells[0].wx[:] = np.eye(2)  # h_T echoes sum of inputs
        inputs = np.zeros((3, 1, 2))
        inputs[0, 0] = [2.0, 1.0]   # argmax 0
        inputs[1, 0] = [0.0, 1.0]   # argmax 1
        inputs[2, 0] = [5.0, 1.0]   # argmax 0
        batch = self._batch(inputs, np.array([[0.0], [1.0], [1.0]]))
        assert evaluate(model, batch, metric="accuracy") == pytest.approx(2.0 / 3.0)

    def test_unknown_metric_rejected(self):
        spec = ModelSpec(d=2, block_size=2, d_in=1)
        batch = self._batch(np.ones((1, 2, 1)), np.zeros((1, 2)))
        with pytest.raises(ValueError, match="metric"):
            evaluate(build_model(spec), batch, metric="f1")


def _constant_loss_setup(n=8, d=2, t_len=3):
    # all-zero ReLU model: outputs, losses, and gradients are identically zero,
    # so the validation loss never improves after epoch 1
    spec = ModelSpec(d=d, block_size=d, d_in=d, activation="relu")
    model = build_model(spec)
    batch = SequenceBatch(np.ones((n, t_len, d)), np.zeros((n, d)))
    return model, {"train": batch, "val": batch}


class TestSchedules:
    def test_plateau_halves_every_patience_epochs(self):
        model, splits = _constant_loss_setup()
        cfg = TrainConfig(learning_rate=1e-3, batch_size=8, max_epochs=11, seed=0,
                          schedule=ReduceOnPlateau(factor=0.5, patience=3),
                          min_lr=1e-9)
        _, history = train(model, splits, cfg)
        lrs = [m.lr for m in history]
        l0 = 1e-3
        assert lrs == [l0] * 4 + [l0 / 2] * 3 + [l0 / 4] * 3 + [l0 / 8]

    def test_plateau_min_lr_floor_stops_training(self):
        model, splits = _constant_loss_setup()
        cfg = TrainConfig(learning_rate=1e-3, batch_size=8, max_epochs=20, seed=0,
                          schedule=ReduceOnPlateau(factor=0.5, patience=3),
                          min_lr=4e-4)
        _, history = train(model, splits, cfg)
        assert len(history) == 7
        assert history[-1].lr == pytest.approx(5e-4)

    def test_step_decay_cadence(self):
        model, splits = _constant_loss_setup()
        cfg = TrainConfig(learning_rate=1e-2, batch_size=8, max_epochs=5, seed=0,
                          schedule=StepDecay(factor=0.5, every_n=2), min_lr=1e-9)
        _, history = train(model, splits, cfg)
        lrs = [m.lr for m in history]
        assert lrs == [1e-2, 1e-2, 5e-3, 5e-3, 2.5e-3]

    def test_improving_loss_never_triggers_plateau(self):
        spec = ModelSpec(d=2, block_size=2, d_in=3, activation="identity")
        model = init_params(spec, "uniform_scaled", Rng(84))
        x = Rng(85).gaussian(0.0, 1.0, (32, 1, 3))
        y = x[:, 0, :2].copy()
        splits = {"train": SequenceBatch(x, y)}
        cfg = TrainConfig(learning_rate=1e-2, batch_size=32, max_epochs=12, seed=0,
                          schedule=ReduceOnPlateau(factor=0.5, patience=2,
                                                   threshold=1e-12))
        _, history = train(model, splits, cfg)
        assert all(m.lr == 1e-2 for m in history)

    def test_schedule_validation(self):
        with pytest.raises(ValueError, match="factor"):
            ReduceOnPlateau(factor=1.5).validate()
        with pytest.raises(ValueError, match="patience"):
            ReduceOnPlateau(patience=0).validate()
        with pytest.raises(ValueError, match="period"):
            StepDecay(every_n=0).validate()


class TestTrainLoop:
    def test_zero_epochs_change_nothing(self):
        spec = ModelSpec(d=4, block_size=2, d_in=2)
        model = init_params(spec, "uniform_scaled", Rng(86))
        before = {k: v.copy() for k, v in model.params().items()}
        batch = SequenceBatch(np.ones((4, 3, 2)), np.zeros((4, 4)))
        _, history = train(model, {"train": batch},
                           TrainConfig(max_epochs=0, batch_size=4))
        assert history == []
        for k, v in model.params().items():
            assert np.array_equal(v, before[k])

    def test_linear_regression_recovers_least_squares(self):
        # T=1, identity activation, h_0 = 0: the model IS x @ wx.T + b
        rng = Rng(87)
        a_true = rng.gaussian(0.0, 1.0, (3, 4))
        x = rng.gaussian(0.0, 1.0, (128, 1, 4))
        y = x[:, 0] @ a_true.T
        spec = ModelSpec(d=3, block_size=3, d_in=4, activation="identity")
        model = init_params(spec, "uniform_scaled", Rng(88))
        cfg = TrainConfig(learning_rate=0.05, batch_size=128, max_epochs=300, seed=1)
        _, history = train(model, {"train": SequenceBatch(x, y)}, cfg)
        assert history[-1].train_loss < 1e-6
        assert np.abs(model.cells[0].wx - a_true).max() < 1e-3
        assert np.abs(model.cells[0].b).max() < 1e-3
        xa = np.concatenate([x[:, 0], np.ones((128, 1))], axis=1)
        w_opt = lstsq_fit(xa, y)
        assert np.abs(model.cells[0].wx - w_opt[:, :4]).max() < 1e-3

    def test_same_seed_runs_are_bit_identical(self):
        def run():
            spec = ModelSpec(d=4, block_size=2, d_in=2, activation="tanh")
            model = init_params(spec, "uniform_scaled", Rng(89))
            x = Rng(90).gaussian(0.0, 1.0, (24, 5, 2))
            y = Rng(91).gaussian(0.0, 1.0, (24, 4))
            cfg = TrainConfig(learning_rate=1e-2, batch_size=8, max_epochs=5, seed=3)
            return train(model, {"train": SequenceBatch(x, y)}, cfg)

        m1, h1 = run()
        m2, h2 = run()
        assert [m.to_json_line() for m in h1] == [m.to_json_line() for m in h2]
        p1, p2 = m1.params(), m2.params()
        for k in p1:
            assert np.array_equal(p1[k], p2[k]), k

    def test_non_binding_clip_changes_nothing(self):
        def run(clip):
            spec = ModelSpec(d=4, block_size=2, d_in=2)
            model = init_params(spec, "uniform_scaled", Rng(92))
            x = Rng(93).gaussian(0.0, 1.0, (16, 4, 2))
            y = Rng(94).gaussian(0.0, 1.0, (16, 4))
            cfg = TrainConfig(learning_rate=1e-2, batch_size=8, max_epochs=3,
                              seed=5, gradient_clip=clip)
            model, _ = train(model, {"train": SequenceBatch(x, y)}, cfg)
            return model.params()

        p_unclipped = run(None)
        p_loose = run(1e12)
        for k in p_unclipped:
            assert np.array_equal(p_unclipped[k], p_loose[k]), k

    def test_max_iterations_stops_mid_epoch(self):
        model, splits = _constant_loss_setup(n=64)
        cfg = TrainConfig(learning_rate=1e-3, batch_size=8, max_epochs=50,
                          max_iterations=11, seed=0)
        _, history = train(model, splits, cfg)
        assert len(history) == 2  # 8 iterations in epoch 1, stop during epoch 2

    def test_callback_stops_training(self):
        model, splits = _constant_loss_setup()
        seen = []

        def stop_at_three(m, record):
            seen.append(record.epoch)
            return record.epoch >= 3

        cfg = TrainConfig(learning_rate=1e-3, batch_size=8, max_epochs=50, seed=0)
        _, history = train(model, splits, cfg, callbacks=[stop_at_three])
        assert len(history) == 3
        assert seen == [1, 2, 3]

    def test_truth_distance_recorded(self):
        spec = ModelSpec(d=2, block_size=2, d_in=2, activation="relu")
        model = build_model(spec)
        batch = SequenceBatch(np.ones((4, 2, 2)), np.zeros((4, 2)))
        truth = np.array([[3.0, 0.0], [0.0, 4.0]])
        _, history = train(model, {"train": batch},
                           TrainConfig(max_epochs=1, batch_size=4), truth=truth)
        assert history[0].extra["wh_dist"] == pytest.approx(5.0)

    @pytest.mark.filterwarnings("ignore:overflow encountered")
    def test_forward_overflow_raises_diverged(self):
        spec = ModelSpec(d=1, block_size=1, d_in=1, activation="identity")
        model = build_model(spec)
        model.cells[0].wh.blocks[0, 0, 0] = 10.0
        model.cells[0].wx[0, 0] = 1.0
        batch = SequenceBatch(np.ones((4, 200, 1)), np.zeros((4, 1)))
        with pytest.raises(TrainingDiverged, match="diverged") as exc:
            train(model, {"train": batch},
                  TrainConfig(learning_rate=1e-3, batch_size=4, max_epochs=3))
        assert exc.value.last_good_epoch == 0

    def test_missing_train_split_rejected(self):
        spec = ModelSpec(d=2, block_size=2, d_in=1)
        with pytest.raises(ValueError, match="train"):
            train(build_model(spec), {}, TrainConfig())


class TestGradClip:
    def test_rescales_to_max_norm(self):
        grads = {"a": np.array([3.0, 0.0]), "b": np.array([0.0, 4.0])}
        _clip_grads(grads, 1.0)  # global norm was 5
        assert np.allclose(grads["a"], [0.6, 0.0])
        assert np.allclose(grads["b"], [0.0, 0.8])

    def test_below_threshold_untouched(self):
        grads = {"a": np.array([0.3, 0.4])}
        _clip_grads(grads, 1.0)
        assert np.array_equal(grads["a"], [0.3, 0.4])


class TestMetricsRecords:
    def test_json_line_key_order(self):
        m = Metrics(epoch=2, train_loss=0.5, val_loss=0.25, lr=0.001, extra={})
        assert m.to_json_line() == (
            '{"epoch": 2, "train_loss": 0.5, "val_loss": 0.25, '
            '"lr": 0.001, "extra": {}}'
        )

    def test_jsonl_round_trip(self, tmp_path):
        records = [
            Metrics(1, 1.0, 0.9, 0.01, {"wh_dist": 2.5}),
            Metrics(2, 0.5, 0.45, 0.01, {}),
        ]
        path = tmp_path / "metrics.jsonl"
        write_metrics_jsonl(records, path)
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        parsed = json.loads(lines[0])
        assert parsed["epoch"] == 1
        assert parsed["extra"]["wh_dist"] == 2.5


class TestTrainConfig:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError, match="learning_rate"):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValueError, match="batch_size"):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError, match="loss"):
            TrainConfig(loss="huber")
        with pytest.raises(ValueError, match="gradient_clip"):
            TrainConfig(gradient_clip=-1.0)

    def test_default_schedule_is_constant(self):
        assert isinstance(TrainConfig().schedule, Constant)
