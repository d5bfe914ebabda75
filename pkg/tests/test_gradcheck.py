"""The gradient-check harness itself: error measure, FD driver, fault injection."""

import numpy as np
import pytest

from capsroute.cnn import CnnModel
from capsroute.errors import ConfigError
from capsroute.gradcheck import check_model, fd_grad, format_reports, rel_error
from capsroute.presets import TINY_CNN
from capsroute.rng import make_rng


def test_rel_error_formula():
    # small denominators clamp to 1: plain absolute error
    assert rel_error(np.array([2.0]), np.array([1.0])) == 1.0
    # large denominators divide: relative error
    assert rel_error(np.array([2.0]), np.array([4.0])) == 0.5
    assert rel_error(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert rel_error(np.array([]), np.array([])) == 0.0
    with pytest.raises(ConfigError):
        rel_error(np.zeros(2), np.zeros(3))


def test_fd_grad_on_quadratic():
    x = make_rng(0, "fd").standard_normal(10)
    grad = fd_grad(lambda: float((x * x).sum()), x)
    assert rel_error(2.0 * x, grad) < 1e-8


def test_fd_grad_selected_indices():
    x = make_rng(1, "fd2").standard_normal(10)
    grad = fd_grad(lambda: float((x**3).sum()), x, indices=[2, 7])
    assert rel_error(3.0 * x[[2, 7]] ** 2, grad) < 1e-7


def test_fd_grad_requires_float64():
    x = np.zeros(3, dtype=np.float32)
    with pytest.raises(ConfigError):
        fd_grad(lambda: 0.0, x)


def _tiny_cnn_model():
    return CnnModel(TINY_CNN, rng=make_rng(0, "init-cnn"), dtype=np.float64)


def _batch(cfg, n=2):
    rng = make_rng(1, "gradcheck-batch")
    images = rng.uniform(0.0, 1.0, size=(n, 1, cfg.input_side, cfg.input_side))
    labels = rng.integers(0, cfg.class_count, size=n)
    return images, labels


def test_check_model_lists_every_group_once():
    model = _tiny_cnn_model()
    images, labels = _batch(TINY_CNN)
    reports = check_model(model, images, labels, max_entries=3,
                          rng=make_rng(2, "subset"))
    names = [r.group for r in reports]
    assert names == model.param_groups()
    assert len(names) == len(set(names))
    for r in reports:
        assert r.checked <= 3 and r.checked <= r.size


def test_corrupted_backward_is_caught_and_named():
    model = _tiny_cnn_model()
    images, labels = _batch(TINY_CNN)
    reports = check_model(model, images, labels, max_entries=3,
                          rng=make_rng(3, "subset"), corrupt_group="fc3_b")
    by_name = {r.group: r for r in reports}
    assert not by_name["fc3_b"].ok
    assert all(r.ok for r in reports if r.group != "fc3_b")
    text = format_reports(reports)
    assert "FAILED groups: fc3_b" in text
    assert text.count("fc3_b") == 2  # its own line plus the failure summary


def test_corrupt_group_must_exist():
    model = _tiny_cnn_model()
    images, labels = _batch(TINY_CNN)
    with pytest.raises(ConfigError):
        check_model(model, images, labels, corrupt_group="nope")


def test_max_entries_needs_rng():
    model = _tiny_cnn_model()
    images, labels = _batch(TINY_CNN)
    with pytest.raises(ConfigError):
        check_model(model, images, labels, max_entries=2, rng=None)


def test_report_lines_say_pass_or_fail():
    model = _tiny_cnn_model()
    images, labels = _batch(TINY_CNN)
    reports = check_model(model, images, labels, max_entries=2,
                          rng=make_rng(4, "subset"))
    text = format_reports(reports)
    assert all(line.startswith("PASS ") for line in text.splitlines()[:-1])
    assert text.splitlines()[-1] == f"all {len(reports)} parameter groups pass"
