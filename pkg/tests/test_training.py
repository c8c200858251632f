"""Tests for loss, gradient engines, Adam, and the training loop."""

import numpy as np
import pytest

from qcnnlab.augment import AugmentConfig
from qcnnlab.datasets import Dataset, ImageSample
from qcnnlab.qcnn import build_architecture, forward
from qcnnlab.training import (
    EmptyBatch,
    LengthMismatch,
    MetricsRow,
    NonBinaryLabels,
    ShapeMismatch,
    TrainConfig,
    TrainingError,
    accuracy,
    adam_step,
    batch_p1s,
    evaluate,
    format_metrics,
    grad_exact,
    grad_fd,
    init_params,
    lr_at,
    mean_metrics,
    mse_loss,
    train_qcnn,
)


def _random_images(rng, n_qubits, count):
    return [rng.random(2**n_qubits) for _ in range(count)]


def _toy_sets(rng, n_train=6, n_test=4):
    """Tiny 8x8 two-class sets with mass in different halves of the frame."""
    def sample(label):
        img = rng.random((8, 8)) * 0.2
        if label == 0:
            img[:4, :] += 0.7
        else:
            img[4:, :] += 0.7
        return ImageSample(np.clip(img, 0, 1), label)

    train = tuple(sample(i % 2) for i in range(n_train))
    test = tuple(sample(i % 2) for i in range(n_test))
    return Dataset(train, ("a", "b")), Dataset(test, ("a", "b"))


# ---------------------------------------------------------------------------
# loss and schedule
# ---------------------------------------------------------------------------

def test_mse_zero_when_exact():
    assert mse_loss([0.0, 1.0, 1.0], [0, 1, 1]) == 0.0


def test_mse_single_half_probability():
    assert mse_loss([0.5], [1]) == pytest.approx(0.25)


def test_mse_maximally_wrong():
    assert mse_loss([0.0, 1.0], [1, 0]) == pytest.approx(1.0)


def test_mse_rejects_empty_and_mismatched():
    with pytest.raises(EmptyBatch):
        mse_loss([], [])
    with pytest.raises(LengthMismatch):
        mse_loss([0.5], [1, 0])


def test_accuracy_uses_half_threshold():
    assert accuracy([0.9, 0.1, 0.5], [1, 0, 0]) == pytest.approx(1.0)
    assert accuracy([0.4, 0.6], [1, 0]) == 0.0


def test_lr_schedule_first_three_epochs():
    cfg = TrainConfig(epochs=1)
    assert lr_at(0, cfg) == pytest.approx(0.1, rel=1e-12)
    assert lr_at(1, cfg) == pytest.approx(0.095, rel=1e-12)
    assert lr_at(2, cfg) == pytest.approx(0.09025, rel=1e-12)


def test_config_validation():
    with pytest.raises(TrainingError):
        TrainConfig(epochs=0)
    with pytest.raises(TrainingError):
        TrainConfig(epochs=1, lr_decay=1.0)
    with pytest.raises(TrainingError):
        TrainConfig(epochs=1, batch="minibatch")


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def test_fd_constant_loss_is_zero():
    g = grad_fd(lambda p: 3.5, np.zeros(4))
    assert np.array_equal(g, np.zeros(4))


def test_fd_quadratic():
    g = grad_fd(lambda p: p[0] ** 2, np.array([1.0, 0.0]))
    assert g[0] == pytest.approx(2.0, abs=1e-7)
    assert g[1] == 0.0


def test_fd_rejects_nonpositive_step():
    with pytest.raises(TrainingError):
        grad_fd(lambda p: 0.0, np.zeros(1), step=0.0)


# ---------------------------------------------------------------------------
# exact gradients
# ---------------------------------------------------------------------------

def test_exact_matches_fd_on_random_instances():
    """20 random (architecture, params, batch) draws; max abs diff < 1e-6."""
    rng = np.random.default_rng(2024)
    worst = 0.0
    for trial in range(20):
        n = int(rng.integers(4, 7))
        d = int(rng.integers(1, 3))
        arch = build_architecture(n, d)
        params = rng.uniform(-np.pi, np.pi, arch.param_count)
        images = _random_images(rng, n, 3)
        labels = rng.integers(0, 2, 3)

        exact = grad_exact(arch, params, images, labels)
        fd = grad_fd(lambda p: mse_loss(batch_p1s(arch, p, images), labels), params)
        worst = max(worst, float(np.max(np.abs(exact - fd))))
    assert worst < 1e-6, f"worst gradient discrepancy {worst}"


def test_exact_zero_at_stationary_point():
    """Labels equal to the model's own outputs put the loss at its minimum."""
    rng = np.random.default_rng(5)
    arch = build_architecture(4, 1)
    params = rng.uniform(-np.pi, np.pi, arch.param_count)
    images = _random_images(rng, 4, 4)
    p1s = batch_p1s(arch, params, images)
    g = grad_exact(arch, params, images, p1s)
    assert np.max(np.abs(g)) < 1e-9


def test_z_rotation_on_readout_wire_has_zero_gradient():
    """On the 1-survivor circuit the final Z-word rotation commutes with the
    readout projector, so its weight can never move the loss."""
    rng = np.random.default_rng(6)
    arch = build_architecture(2, 1)
    assert arch.param_count == 21  # 18 + (X, Y, Z) words
    params = rng.uniform(-np.pi, np.pi, arch.param_count)
    images = _random_images(rng, 2, 3)
    labels = [0, 1, 0]
    z_idx = 20
    exact = grad_exact(arch, params, images, labels)
    fd = grad_fd(lambda p: mse_loss(batch_p1s(arch, p, images), labels), params)
    assert abs(exact[z_idx]) < 1e-12
    assert abs(fd[z_idx]) < 1e-9


def test_gradient_and_loss_are_2pi_periodic():
    rng = np.random.default_rng(7)
    arch = build_architecture(4, 1)
    params = rng.uniform(-np.pi, np.pi, arch.param_count)
    images = _random_images(rng, 4, 2)
    labels = [1, 0]
    base_loss = mse_loss(batch_p1s(arch, params, images), labels)
    base_grad = grad_exact(arch, params, images, labels)
    for k in (0, 7, arch.param_count - 1):
        shifted = params.copy()
        shifted[k] += 2 * np.pi
        assert mse_loss(batch_p1s(arch, shifted, images), labels) == pytest.approx(
            base_loss, abs=1e-9)
        assert np.allclose(grad_exact(arch, shifted, images, labels), base_grad, atol=1e-9)


def test_batched_p1_matches_single_forward():
    rng = np.random.default_rng(8)
    arch = build_architecture(5, 2)
    params = rng.uniform(-np.pi, np.pi, arch.param_count)
    images = _random_images(rng, 5, 4)
    batched = batch_p1s(arch, params, images)
    singles = [forward(arch, params, img) for img in images]
    assert np.allclose(batched, singles, atol=1e-12)


def test_grad_exact_rejects_bad_batches():
    arch = build_architecture(2, 0)
    with pytest.raises(EmptyBatch):
        grad_exact(arch, np.zeros(arch.param_count), [], [])
    with pytest.raises(LengthMismatch):
        grad_exact(arch, np.zeros(arch.param_count), [np.ones(4)], [0, 1])


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

def test_adam_zero_gradient_keeps_params():
    params = np.array([1.0, -2.0])
    out, (m, v) = adam_step(params, np.zeros(2), None, t=1, lr=0.1)
    assert np.array_equal(out, params)
    assert np.array_equal(m, np.zeros(2)) and np.array_equal(v, np.zeros(2))


def test_adam_first_step_is_signed_lr():
    """With bias correction the first update is lr * g/(|g| + eps)."""
    g = np.array([0.3, -0.004])
    out, _ = adam_step(np.zeros(2), g, None, t=1, lr=0.1)
    assert np.allclose(out, [-0.1, 0.1], atol=1e-5)


def test_adam_two_steps_descend_a_quadratic():
    params = np.array([2.0])
    moments = None
    loss = lambda p: float(p[0] ** 2)
    start = loss(params)
    for t in (1, 2):
        params, moments = adam_step(params, 2 * params, moments, t, lr=0.1)
    assert loss(params) < start


def test_adam_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        adam_step(np.zeros(2), np.zeros(3), None, 1, 0.1)
    with pytest.raises(ShapeMismatch):
        adam_step(np.zeros(2), np.zeros(2), (np.zeros(3), np.zeros(2)), 1, 0.1)


def test_adam_requires_positive_step_index():
    with pytest.raises(TrainingError):
        adam_step(np.zeros(1), np.zeros(1), None, 0, 0.1)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def test_zero_learning_rate_keeps_params_but_records_metrics():
    rng = np.random.default_rng(9)
    train, test = _toy_sets(rng)
    arch = build_architecture(6, 1)
    cfg = TrainConfig(epochs=1, lr0=0.0, seed=3)
    rows, params = train_qcnn(arch, train, test, cfg)
    assert len(rows) == 1
    assert np.array_equal(params, init_params(arch, 3))
    assert 0.0 <= rows[0].train_acc <= 1.0


def test_training_is_deterministic():
    rng = np.random.default_rng(10)
    train, test = _toy_sets(rng)
    arch = build_architecture(6, 1)
    cfg = TrainConfig(epochs=3, seed=8)
    rows1, params1 = train_qcnn(arch, train, test, cfg)
    rows2, params2 = train_qcnn(arch, train, test, cfg)
    assert rows1 == rows2
    assert np.array_equal(params1, params2)


def test_training_with_augmentation_is_deterministic_and_distinct():
    rng = np.random.default_rng(11)
    train, test = _toy_sets(rng)
    arch = build_architecture(6, 1)
    cfg = TrainConfig(epochs=3, seed=8)
    aug = AugmentConfig(rotation=True, contrast=True)
    rows_a, params_a = train_qcnn(arch, train, test, cfg, augment_cfg=aug)
    rows_b, params_b = train_qcnn(arch, train, test, cfg, augment_cfg=aug)
    assert rows_a == rows_b and np.array_equal(params_a, params_b)
    rows_plain, _ = train_qcnn(arch, train, test, cfg)
    assert rows_plain != rows_a  # the gradient saw different images


def test_training_reduces_loss_on_separable_toy_data():
    rng = np.random.default_rng(12)
    train, test = _toy_sets(rng, n_train=10, n_test=6)
    arch = build_architecture(6, 2)
    rows, _ = train_qcnn(arch, train, test, TrainConfig(epochs=15, seed=1))
    assert rows[-1].train_loss < rows[0].train_loss


def test_training_rejects_nonbinary_labels():
    rng = np.random.default_rng(13)
    train, test = _toy_sets(rng)
    bad = Dataset(tuple(ImageSample(s.pixels, s.label + 1) for s in train.samples),
                  train.class_names)
    arch = build_architecture(6, 1)
    with pytest.raises(NonBinaryLabels):
        train_qcnn(arch, bad, test, TrainConfig(epochs=1, seed=0))


def test_evaluate_returns_loss_and_accuracy():
    rng = np.random.default_rng(14)
    arch = build_architecture(4, 1)
    params = init_params(arch, 0)
    images = _random_images(rng, 4, 5)
    labels = [0, 1, 0, 1, 0]
    loss, acc = evaluate(arch, params, images, labels)
    assert loss >= 0.0
    assert 0.0 <= acc <= 1.0


# ---------------------------------------------------------------------------
# metrics formatting
# ---------------------------------------------------------------------------

def test_metrics_csv_layout():
    rows = [MetricsRow(0, 0.25, 0.5, 0.251234567, 0.75),
            MetricsRow(1, 0.2, 1.0 / 3.0, 0.19, 0.8)]
    text = format_metrics(rows)
    lines = text.strip().split("\n")
    assert lines[0] == "epoch,train_loss,train_acc,test_loss,test_acc"
    assert lines[1] == "0,0.25,0.5,0.251235,0.75"
    assert lines[2].startswith("1,0.2,0.333333,")


def test_mean_metrics_averages_elementwise():
    a = [MetricsRow(0, 0.2, 0.5, 0.3, 0.5)]
    b = [MetricsRow(0, 0.4, 1.0, 0.1, 0.7)]
    mean = mean_metrics([a, b])
    assert mean[0] == MetricsRow(0, pytest.approx(0.3), pytest.approx(0.75),
                                 pytest.approx(0.2), pytest.approx(0.6))


def test_mean_metrics_single_run_is_identity():
    a = [MetricsRow(0, 0.2, 0.5, 0.3, 0.5), MetricsRow(1, 0.1, 0.9, 0.2, 0.8)]
    assert mean_metrics([a]) == a


def test_mean_metrics_rejects_ragged_runs():
    a = [MetricsRow(0, 0, 0, 0, 0)]
    b = [MetricsRow(0, 0, 0, 0, 0), MetricsRow(1, 0, 0, 0, 0)]
    with pytest.raises(LengthMismatch):
        mean_metrics([a, b])
