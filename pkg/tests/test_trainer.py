import csv

import numpy as np
import pytest

from dropdiag.data import LabeledDataset
from dropdiag.network import NetworkConfig
from dropdiag.rng import RngStream
from dropdiag.trainer import TrainConfig, TrainingDivergedError, TrainTrace, evaluate, train


def two_blobs(n=200, seed=0):
    rng = RngStream(seed)
    a = rng.substream("a").normal(size=(n // 2, 2)) * 0.5 + np.array([-2.0, 0.0])
    b = rng.substream("b").normal(size=(n // 2, 2)) * 0.5 + np.array([2.0, 0.0])
    return LabeledDataset(
        features=np.vstack([a, b]),
        labels=np.array([0] * (n // 2) + [1] * (n // 2)),
        severity=np.array([0] * (n // 2) + [4] * (n // 2)),
        feature_names=["x1", "x2"],
        class_names=["NM", "fault"],
    )


def seven_blobs(n_per_class=200, seed=1):
    rng = RngStream(seed)
    rows, labels = [], []
    centers = rng.substream("centers").normal(size=(7, 5)) * 4.0
    for c in range(7):
        rows.append(rng.substream("pts", c).normal(size=(n_per_class, 5)) + centers[c])
        labels += [c] * n_per_class
    sev = [0 if l == 0 else 4 for l in labels]
    return LabeledDataset(
        features=np.vstack(rows),
        labels=np.array(labels),
        severity=np.array(sev),
        feature_names=[f"f{i}" for i in range(5)],
        class_names=["NM"] + [f"F{i}" for i in range(1, 7)],
    )


NET = NetworkConfig(input_dim=2, hidden_layers=(20, 20, 20, 20), num_classes=2, init_seed=3)


class TestTrain:
    def test_separable_blobs_reach_high_accuracy(self):
        data = two_blobs()
        params, trace = train(NET, TrainConfig(epochs=30, shuffle_seed=1), data)
        assert evaluate(params, data).accuracy >= 0.99

    def test_loss_decreases_first_to_last(self):
        _, trace = train(NET, TrainConfig(epochs=10, shuffle_seed=2), two_blobs())
        assert trace.losses[-1] < trace.losses[0]

    def test_deterministic(self):
        data = two_blobs()
        cfg = TrainConfig(epochs=5, shuffle_seed=7)
        p1, t1 = train(NET, cfg, data)
        p2, t2 = train(NET, cfg, data)
        for a, b in zip(p1.weights + p1.biases, p2.weights + p2.biases):
            assert np.array_equal(a, b)
        assert t1.losses == t2.losses

    def test_dropout_training_runs_and_keeps_params_finite(self):
        cfg = NetworkConfig(
            input_dim=2, hidden_layers=(20, 20), num_classes=2, dropout_rate=0.2, init_seed=4
        )
        params, _ = train(cfg, TrainConfig(epochs=5, shuffle_seed=3), two_blobs())
        assert params.all_finite()

    def test_divergence_signaled_with_epoch(self):
        data = two_blobs()
        data.features[0, 0] = 1e308  # overflows the forward pass into non-finite loss
        with pytest.raises(TrainingDivergedError) as err:
            train(NET, TrainConfig(epochs=3, shuffle_seed=0), data)
        assert err.value.epoch == 0

    def test_label_range_checked(self):
        data = two_blobs()
        bad = NetworkConfig(input_dim=2, hidden_layers=(4,), num_classes=2)
        data.labels[0] = 5
        with pytest.raises(ValueError):
            train(bad, TrainConfig(epochs=1), data)


class TestEvaluate:
    def test_single_correct_sample(self):
        data = two_blobs()
        params, _ = train(NET, TrainConfig(epochs=30, shuffle_seed=1), data)
        one = data.subset(np.array([0]))
        result = evaluate(params, one)
        assert result.accuracy == 1.0
        assert result.confusion.sum() == 1
        assert result.confusion[one.labels[0], one.labels[0]] == 1

    def test_confusion_nearly_diagonal_after_fit(self):
        data = two_blobs()
        params, _ = train(NET, TrainConfig(epochs=30, shuffle_seed=1), data)
        result = evaluate(params, data)
        off_diagonal = result.confusion.sum() - np.trace(result.confusion)
        assert off_diagonal <= 0.01 * data.num_samples

    def test_permuted_labels_give_chance_level(self):
        data = seven_blobs()
        cfg = NetworkConfig(input_dim=5, hidden_layers=(20, 20), num_classes=7, init_seed=5)
        params, _ = train(cfg, TrainConfig(epochs=20, shuffle_seed=4), data)
        shuffled = data.subset(np.arange(data.num_samples))
        perm = np.random.default_rng(11).permutation(data.labels)
        shuffled.labels = perm
        shuffled.severity = np.where(perm == 0, 0, 4)
        result = evaluate(params, shuffled)
        assert abs(result.accuracy - 1.0 / 7.0) < 0.05

    def test_row_order_invariance(self):
        data = two_blobs()
        params, _ = train(NET, TrainConfig(epochs=5, shuffle_seed=1), data)
        perm = np.random.default_rng(3).permutation(data.num_samples)
        assert evaluate(params, data).accuracy == evaluate(params, data.subset(perm)).accuracy


def test_trace_csv_export(tmp_path):
    trace = TrainTrace(losses=[1.5, 0.7], accuracies=[0.5, 0.9])
    path = tmp_path / "trace.csv"
    trace.save_csv(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["epoch", "loss", "accuracy"]
    assert len(rows) == 3
    assert float(rows[1][1]) == 1.5 and float(rows[2][2]) == 0.9


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    assert TrainConfig().epochs == 30
