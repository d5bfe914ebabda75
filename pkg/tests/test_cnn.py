"""Baseline CNN: exact parameter count, shape trace, cross-entropy cases."""

import numpy as np
import pytest

from capsroute.cnn import (
    CnnConfig,
    CnnModel,
    cross_entropy,
    cross_entropy_backward,
    cross_entropy_batch,
    init_cnn_params,
)
from capsroute.errors import ConfigError, ShapeError
from capsroute.gradcheck import OP_TOLERANCE, fd_grad, rel_error
from capsroute.presets import CNN_DEFAULT, TINY_CNN
from capsroute.rng import make_rng


def test_shape_trace_64():
    trace = dict(CNN_DEFAULT.shape_trace())
    assert trace["conv1"] == (64, 60, 60)
    assert trace["pool1"] == (64, 30, 30)
    assert trace["conv2"] == (64, 26, 26)
    assert trace["pool2"] == (64, 13, 13)
    assert trace["flatten"] == (10816,)
    assert trace["fc1"] == (800,)
    assert trace["fc2"] == (800,)
    assert trace["fc3"] == (3,)


def test_parameter_count_exact():
    params = init_cnn_params(CNN_DEFAULT, make_rng(0, "init-cnn"))
    total = sum(p.size for p in params.values())
    # conv1 64*25+64, conv2 64*64*25+64, fc 10816*800+800, 800*800+800, 800*3+3
    assert total == 9_400_931


def test_config_rejects_unpoolable_sides():
    with pytest.raises(ConfigError):
        CnnConfig(input_side=17)  # first conv output 13, odd
    with pytest.raises(ConfigError):
        CnnConfig(input_side=16, conv_kernel=3)  # second conv output 5, odd


def test_forward_shapes_and_determinism():
    model = CnnModel(TINY_CNN, rng=make_rng(1, "init-cnn"), dtype=np.float64)
    rng = make_rng(2, "cnn-fwd")
    image = rng.random((TINY_CNN.input_side, TINY_CNN.input_side))
    logits = model.forward(image)
    assert logits.shape == (TINY_CNN.class_count,)
    model2 = CnnModel(TINY_CNN, rng=make_rng(1, "init-cnn"), dtype=np.float64)
    assert np.array_equal(logits, model2.forward(image))
    batch = rng.random((3, 1, TINY_CNN.input_side, TINY_CNN.input_side))
    assert model.predict_batch(batch).shape == (3,)
    with pytest.raises(ShapeError):
        model.forward(np.zeros((5, 5)))


def test_cross_entropy_uniform_logits_is_ln3():
    loss, _ = cross_entropy(np.zeros(3), 1)
    assert loss == float(np.log(3.0))


def test_cross_entropy_confident_correct_is_tiny():
    loss, _ = cross_entropy(np.array([10.0, -10.0, -10.0]), 0)
    assert 0.0 < loss < 1e-6


def test_cross_entropy_label_range():
    with pytest.raises(ConfigError):
        cross_entropy(np.zeros(3), 3)
    with pytest.raises(ConfigError):
        cross_entropy_batch(np.zeros((2, 3)), np.array([0, -1]))


def test_cross_entropy_grad():
    worst = 0.0
    for t in range(20):
        rng = make_rng(7000 + t, "ce-fd")
        logits = rng.standard_normal((3, 4))
        labels = rng.integers(0, 4, size=3)
        g = rng.standard_normal(3)

        def f():
            per, _ = cross_entropy_batch(logits, labels)
            return float((g * per).sum())

        _, cache = cross_entropy_batch(logits, labels)
        worst = max(worst, rel_error(cross_entropy_backward(g, cache), fd_grad(f, logits)))
    assert worst < OP_TOLERANCE


def test_loss_and_grads_metrics_and_coverage():
    model = CnnModel(TINY_CNN, rng=make_rng(3, "init-cnn"), dtype=np.float64)
    rng = make_rng(4, "cnn-lg")
    images = rng.random((4, 1, TINY_CNN.input_side, TINY_CNN.input_side))
    labels = rng.integers(0, TINY_CNN.class_count, size=4)
    metrics, grads = model.loss_and_grads(images, labels)
    assert metrics["decoder_loss"] is None
    assert metrics["total_loss"] == metrics["model_loss"]
    assert set(grads) == set(model.params)
    for name, g in grads.items():
        assert g.shape == model.params[name].shape, name
