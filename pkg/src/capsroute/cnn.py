"""Plain convolutional baseline for the same 3-class task.

Two conv+pool stages followed by three fully connected layers, trained with
softmax cross-entropy. Shares the tensor ops (and their valid-convolution
convention) with the capsule model so comparisons are apples to apples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import ops
from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class CnnConfig:
    input_side: int = 64
    conv1_filters: int = 64
    conv2_filters: int = 64
    conv_kernel: int = 5
    fc1_width: int = 800
    fc2_width: int = 800
    class_count: int = 3

    def __post_init__(self):
        s = self.input_side
        c1 = s - self.conv_kernel + 1
        c2 = c1 // 2 - self.conv_kernel + 1
        # 2x2 pooling consumes its input exactly; odd sizes would drop pixels
        if c1 < 2 or c1 % 2 != 0:
            raise ConfigError(f"first conv output side {c1} is not poolable (must be even, >= 2)")
        if c2 < 2 or c2 % 2 != 0:
            raise ConfigError(f"second conv output side {c2} is not poolable (must be even, >= 2)")
        if self.flat_features() < 1:
            raise ConfigError(f"input side {self.input_side} too small for the layer stack")

    def shape_trace(self) -> list[tuple[str, tuple[int, ...]]]:
        """Layer-by-layer output shapes, for shape tests and sanity checks."""
        s = self.input_side
        c1 = s - self.conv_kernel + 1
        p1 = c1 // 2
        c2 = p1 - self.conv_kernel + 1
        p2 = c2 // 2
        return [
            ("conv1", (self.conv1_filters, c1, c1)),
            ("pool1", (self.conv1_filters, p1, p1)),
            ("conv2", (self.conv2_filters, c2, c2)),
            ("pool2", (self.conv2_filters, p2, p2)),
            ("flatten", (self.conv2_filters * p2 * p2,)),
            ("fc1", (self.fc1_width,)),
            ("fc2", (self.fc2_width,)),
            ("fc3", (self.class_count,)),
        ]

    def flat_features(self) -> int:
        s = self.input_side
        c1 = s - self.conv_kernel + 1
        p1 = c1 // 2
        c2 = p1 - self.conv_kernel + 1
        p2 = c2 // 2
        return self.conv2_filters * p2 * p2


def init_cnn_params(cfg: CnnConfig, rng: np.random.Generator, dtype=np.float32) -> dict:
    """Uniform fan-in scaled weights, zero biases (same scheme as the capsule model)."""
    def uniform(shape, fan_in):
        a = np.sqrt(6.0 / fan_in)
        return rng.uniform(-a, a, size=shape).astype(dtype)

    k = cfg.conv_kernel
    flat = cfg.flat_features()
    return {
        "conv1_kernels": uniform((cfg.conv1_filters, 1, k, k), k * k),
        "conv1_bias": np.zeros(cfg.conv1_filters, dtype=dtype),
        "conv2_kernels": uniform((cfg.conv2_filters, cfg.conv1_filters, k, k), cfg.conv1_filters * k * k),
        "conv2_bias": np.zeros(cfg.conv2_filters, dtype=dtype),
        "fc1_w": uniform((flat, cfg.fc1_width), flat),
        "fc1_b": np.zeros(cfg.fc1_width, dtype=dtype),
        "fc2_w": uniform((cfg.fc1_width, cfg.fc2_width), cfg.fc1_width),
        "fc2_b": np.zeros(cfg.fc2_width, dtype=dtype),
        "fc3_w": uniform((cfg.fc2_width, cfg.class_count), cfg.fc2_width),
        "fc3_b": np.zeros(cfg.class_count, dtype=dtype),
    }


def cross_entropy(logits: np.ndarray, label: int):
    """Softmax negative log likelihood for one sample."""
    per_sample, cache = cross_entropy_batch(logits[None], np.array([label]))
    return float(per_sample[0]), cache


def cross_entropy_batch(logits: np.ndarray, labels: np.ndarray):
    if labels.min() < 0 or labels.max() >= logits.shape[-1]:
        raise ConfigError(f"labels out of range 0..{logits.shape[-1] - 1}")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1))
    per_sample = log_z - shifted[np.arange(logits.shape[0]), labels]
    probs = np.exp(shifted) / np.exp(shifted).sum(axis=-1, keepdims=True)
    return per_sample, (probs, labels)


def cross_entropy_backward(grad_per_sample: np.ndarray, cache):
    probs, labels = cache
    d = probs.copy()
    d[np.arange(probs.shape[0]), labels] -= 1.0
    return grad_per_sample[:, None] * d


class CnnModel:
    """Baseline CNN exposing the same protocol as CapsNetModel."""

    kind = "cnn"

    def __init__(self, config: CnnConfig, params: Optional[dict] = None,
                 rng: Optional[np.random.Generator] = None, dtype=np.float32):
        self.config = config
        if params is None:
            if rng is None:
                raise ConfigError("CnnModel needs either params or an rng to initialize")
            params = init_cnn_params(config, rng, dtype)
        self.params = params

    def param_groups(self) -> list[str]:
        return list(self.params)

    def _check_input(self, images: np.ndarray) -> np.ndarray:
        s = self.config.input_side
        if images.ndim == 2 and images.shape == (s, s):
            images = images[None, None]
        elif images.ndim == 3 and images.shape == (1, s, s):
            images = images[None]
        if images.ndim != 4 or images.shape[1] != 1 or images.shape[2:] != (s, s):
            raise ShapeError(f"expected input images of shape (N,1,{s},{s}), got {images.shape}")
        return images

    def forward_batch(self, images: np.ndarray):
        p = self.params
        z1, c1 = ops.conv2d(images, p["conv1_kernels"], p["conv1_bias"], 1)
        a1, r1 = ops.relu(z1)
        q1, m1 = ops.maxpool2(a1)
        z2, c2 = ops.conv2d(q1, p["conv2_kernels"], p["conv2_bias"], 1)
        a2, r2 = ops.relu(z2)
        q2, m2 = ops.maxpool2(a2)
        flat = q2.reshape(q2.shape[0], -1)
        h1, f1 = ops.fully_connected(flat, p["fc1_w"], p["fc1_b"])
        b1, rb1 = ops.relu(h1)
        h2, f2 = ops.fully_connected(b1, p["fc2_w"], p["fc2_b"])
        b2, rb2 = ops.relu(h2)
        logits, f3 = ops.fully_connected(b2, p["fc3_w"], p["fc3_b"])
        cache = (c1, r1, m1, c2, r2, m2, q2.shape, f1, rb1, f2, rb2, f3)
        return logits, cache

    def forward(self, image: np.ndarray) -> np.ndarray:
        """Logits for a single image."""
        logits, _ = self.forward_batch(self._check_input(image))
        return logits[0]

    def predict_batch(self, images: np.ndarray) -> np.ndarray:
        logits, _ = self.forward_batch(self._check_input(images))
        return np.argmax(logits, axis=1)

    def loss_and_grads(self, images: np.ndarray, labels: np.ndarray):
        """Mean cross-entropy and parameter gradients for one labeled batch."""
        images = self._check_input(images)
        b = images.shape[0]
        logits, cache = self.forward_batch(images)
        per_sample, ce_cache = cross_entropy_batch(logits, labels)
        loss = float(per_sample.mean())
        metrics = {"model_loss": loss, "decoder_loss": None, "total_loss": loss}

        c1, r1, m1, c2, r2, m2, q2_shape, f1, rb1, f2, rb2, f3 = cache
        g_logits = cross_entropy_backward(np.full(b, 1.0 / b, dtype=logits.dtype), ce_cache)
        g, dw3, db3 = ops.fully_connected_backward(g_logits, f3)
        g = ops.relu_backward(g, rb2)
        g, dw2, db2 = ops.fully_connected_backward(g, f2)
        g = ops.relu_backward(g, rb1)
        g, dw1, db1 = ops.fully_connected_backward(g, f1)
        g = g.reshape(q2_shape)
        g = ops.maxpool2_backward(g, m2)
        g = ops.relu_backward(g, r2)
        g, dk2, dbc2 = ops.conv2d_backward(g, c2)
        g = ops.maxpool2_backward(g, m1)
        g = ops.relu_backward(g, r1)
        _, dk1, dbc1 = ops.conv2d_backward(g, c1)
        grads = {
            "conv1_kernels": dk1, "conv1_bias": dbc1,
            "conv2_kernels": dk2, "conv2_bias": dbc2,
            "fc1_w": dw1, "fc1_b": db1,
            "fc2_w": dw2, "fc2_b": db2,
            "fc3_w": dw3, "fc3_b": db3,
        }
        return metrics, grads
