"""Named model configurations.

`default` is the chosen architecture: one 64-filter 9x9 convolution, 256
strided primary-capsule filters grouped as 32 component capsules of
dimension 8, three class capsules of dimension 16, decoder 512/1024/4096.
The sweep presets vary exactly one axis each so the sweep command can
tabulate how single architecture changes move validation accuracy.

Two of the sweep rows name a capsule regrouping without fixing the filter
budget. We re-partition so the regrouping constraint stays exact:
16 component capsules keep dimension 8 (128 filters), and dimension-4
capsules keep 32 components (128 filters). This halves those presets'
primary filters rather than inventing wider maps.

The tiny configs exist for finite-difference checking: small enough that
central differences over every parameter finish in seconds, at 64-bit.
"""

from __future__ import annotations

from dataclasses import replace

from .capsnet import CapsNetConfig
from .cnn import CnnConfig
from .errors import ConfigError

DEFAULT = CapsNetConfig()

SWEEP_PRESETS: dict[str, CapsNetConfig] = {
    "original-256-maps": replace(DEFAULT, conv_filters=256),
    "two-conv-64": replace(DEFAULT, conv_repeat=2),
    "one-conv-64": DEFAULT,
    "16-primary-caps": replace(DEFAULT, component_capsules=16, primary_conv_filters=128),
    "primary-dim-4": replace(DEFAULT, primary_dim=4, primary_conv_filters=128),
    "decoder-1024-2048-4096": replace(DEFAULT, decoder_widths=(1024, 2048, 4096)),
}

TINY = CapsNetConfig(
    input_side=16,
    conv_filters=2,
    conv_kernel=5,
    conv_stride=1,
    conv_repeat=1,
    primary_conv_filters=8,
    primary_kernel=5,
    primary_stride=2,
    component_capsules=2,
    primary_dim=4,
    class_count=2,
    class_dim=4,
    routing_iters=2,
    decoder_widths=(8, 16, 256),
)

TINY_CNN = CnnConfig(
    input_side=16,
    conv1_filters=2,
    conv2_filters=3,
    conv_kernel=5,
    fc1_width=8,
    fc2_width=8,
    class_count=2,
)

CNN_DEFAULT = CnnConfig()

CAPSNET_PRESETS: dict[str, CapsNetConfig] = {"default": DEFAULT, "tiny": TINY, **SWEEP_PRESETS}
CNN_PRESETS: dict[str, CnnConfig] = {"default": CNN_DEFAULT, "tiny": TINY_CNN}


def capsnet_preset(name: str) -> CapsNetConfig:
    if name not in CAPSNET_PRESETS:
        raise ConfigError(f"unknown capsnet preset {name!r}, expected one of {sorted(CAPSNET_PRESETS)}")
    return CAPSNET_PRESETS[name]


def cnn_preset(name: str) -> CnnConfig:
    if name not in CNN_PRESETS:
        raise ConfigError(f"unknown cnn preset {name!r}, expected one of {sorted(CNN_PRESETS)}")
    return CNN_PRESETS[name]
