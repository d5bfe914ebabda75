"""Capsule network for 3-class brain tumor MRI classification.

Pipeline: a convolutional feature stage, a primary capsule layer formed by
regrouping convolutional feature maps into short vectors, a class capsule
layer computed by routing by agreement, a margin loss on class capsule
norms, and a fully connected decoder that reconstructs the input from the
masked winning capsule.

The class capsule norm is the class score: routing iteratively reweights
each lower capsule's contribution toward the parent capsules whose output
agrees with the lower capsule's prediction for them. All backward passes
differentiate through the fully unrolled routing iterations, including the
coupling softmax, so the whole model is finite-difference checkable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import ops
from .errors import ConfigError, ShapeError
from .ops import require_finite

SQUASH_NORM_EPS = 1e-8  # guards the v*s^T/|s| term of the squash gradient


@dataclass(frozen=True)
class CapsNetConfig:
    """Architecture and loss hyperparameters for the capsule model.

    The primary capsule layer consumes `primary_conv_filters` feature maps,
    regrouped as `component_capsules` capsules of `primary_dim` values, so
    those three fields are coupled by an exact product constraint. The last
    decoder width must equal the pixel count so reconstructions compare
    directly with inputs.
    """

    input_side: int = 64
    conv_filters: int = 64
    conv_kernel: int = 9
    conv_stride: int = 1
    conv_repeat: int = 1
    primary_conv_filters: int = 256
    primary_kernel: int = 9
    primary_stride: int = 2
    component_capsules: int = 32
    primary_dim: int = 8
    class_count: int = 3
    class_dim: int = 16
    routing_iters: int = 3
    m_plus: float = 0.9
    m_minus: float = 0.1
    lambda_: float = 0.5
    decoder_widths: tuple[int, ...] = (512, 1024, 4096)
    decoder_loss_weight: float = 0.0005

    def __post_init__(self):
        if self.routing_iters < 1:
            raise ConfigError(f"routing_iters must be >= 1, got {self.routing_iters}")
        if self.primary_conv_filters != self.component_capsules * self.primary_dim:
            raise ConfigError(
                f"primary_conv_filters ({self.primary_conv_filters}) must equal "
                f"component_capsules * primary_dim ({self.component_capsules} * {self.primary_dim})"
            )
        if len(self.decoder_widths) != 3:
            raise ConfigError(f"decoder_widths must have 3 entries, got {self.decoder_widths}")
        if self.decoder_widths[-1] != self.input_side**2:
            raise ConfigError(
                f"last decoder width ({self.decoder_widths[-1]}) must equal "
                f"input_side^2 ({self.input_side**2})"
            )
        if not self.m_minus < self.m_plus:
            raise ConfigError(f"m_minus ({self.m_minus}) must be < m_plus ({self.m_plus})")
        if self.lambda_ <= 0:
            raise ConfigError(f"lambda_ must be > 0, got {self.lambda_}")
        if self.conv_repeat < 1:
            raise ConfigError(f"conv_repeat must be >= 1, got {self.conv_repeat}")
        if self.feature_side() < self.primary_kernel:
            raise ConfigError(f"feature maps ({self.feature_side()}px) smaller than primary kernel")

    def feature_side(self) -> int:
        side = self.input_side
        for _ in range(self.conv_repeat):
            side = (side - self.conv_kernel) // self.conv_stride + 1
            if side < 1:
                raise ConfigError("convolution stack shrinks the input below 1 pixel")
        return side

    def primary_side(self) -> int:
        return (self.feature_side() - self.primary_kernel) // self.primary_stride + 1

    def n_lower(self) -> int:
        return self.component_capsules * self.primary_side() ** 2


@dataclass
class RoutingState:
    """Record of one routing pass, kept with a leading batch axis.

    `couplings` holds the coupling matrix of every iteration (each row sums
    to 1 over the class axis), so the agreement trajectory is auditable.
    The trailing entries mirror the final iteration.
    """

    u_hat: np.ndarray                 # (B, N, J, class_dim) prediction vectors
    logits: np.ndarray                # (B, N, J) final routing logits
    couplings: list[np.ndarray] = field(default_factory=list)   # per iteration
    pre_activations: list[np.ndarray] = field(default_factory=list)  # s, per iteration
    outputs: list[np.ndarray] = field(default_factory=list)     # v, per iteration

    @property
    def c(self) -> np.ndarray:
        return self.couplings[-1]

    @property
    def s(self) -> np.ndarray:
        return self.pre_activations[-1]

    @property
    def v(self) -> np.ndarray:
        return self.outputs[-1]


# ---------------------------------------------------------------------------
# squash

def squash(s: np.ndarray, axis: int = -1):
    """Shrink vectors to norm |s|^2/(1+|s|^2) while preserving direction.

    Written as s * |s|/(1+|s|^2), which is singularity-free: the zero vector
    maps to the zero vector exactly.
    """
    norm = np.sqrt((s * s).sum(axis=axis, keepdims=True))
    v = s * (norm / (1.0 + norm * norm))
    return v, (s, norm, axis)


def squash_backward(grad: np.ndarray, cache):
    s, norm, axis = cache
    g = norm / (1.0 + norm * norm)
    n2 = norm * norm
    gprime = (1.0 - n2) / ((1.0 + n2) ** 2)
    dot = (s * grad).sum(axis=axis, keepdims=True)
    return g * grad + (gprime / np.maximum(norm, SQUASH_NORM_EPS)) * dot * s


# ---------------------------------------------------------------------------
# routing by agreement

def route(u: np.ndarray, weights: np.ndarray, iters: int):
    """Route lower capsules u to class capsules through `iters` iterations.

    u is (N, primary_dim) or batched (B, N, primary_dim); weights are
    (N, J, class_dim, primary_dim), one prediction matrix per capsule pair.

    Each iteration turns the routing logits into couplings with a softmax
    over the class axis (logits start at zero, so iteration 1 couples
    uniformly), forms each class capsule's input as the coupling-weighted
    sum of predictions, squashes it, and, on all but the last iteration,
    raises the logit of every (lower, class) pair by the inner product of
    the class output with that lower capsule's prediction.

    Returns (v, state): v is (J, class_dim), batched if u was, and state
    records the full trajectory (batched) plus what the backward needs.
    """
    if iters < 1:
        raise ConfigError(f"routing iterations must be >= 1, got {iters}")
    single = u.ndim == 2
    ub = u[None] if single else u
    n, j, class_dim, primary_dim = weights.shape
    if ub.shape[1] != n or ub.shape[2] != primary_dim:
        raise ShapeError(f"route: capsules {u.shape} do not match weights {weights.shape}")

    u_hat = np.einsum("ijcp,bip->bijc", weights, ub)
    logits = np.zeros(ub.shape[:2] + (j,), dtype=u.dtype)  # (B, N, J)
    state = RoutingState(u_hat=u_hat, logits=logits)
    squash_caches = []
    v = None
    for t in range(iters):
        c, _ = ops.softmax(logits, axis=2)
        s = np.einsum("bij,bijc->bjc", c, u_hat)
        v, sq_cache = squash(s)
        state.couplings.append(c)
        state.pre_activations.append(s)
        state.outputs.append(v)
        squash_caches.append(sq_cache)
        if t < iters - 1:
            logits = logits + np.einsum("bjc,bijc->bij", v, u_hat)
    state.logits = logits
    require_finite("route", v)
    cache = (ub, weights, u_hat, state, squash_caches, single)
    return (v[0] if single else v), cache


def route_backward(grad_v: np.ndarray, cache):
    """Backpropagate through the unrolled routing loop.

    Gradients flow through the coupling softmax and the logit updates, not
    just the weighted sums. Returns (d_u, d_weights).
    """
    ub, weights, u_hat, state, squash_caches, single = cache
    gv = grad_v[None] if single else grad_v
    iters = len(state.couplings)
    g_uhat = np.zeros_like(u_hat)
    g_logits = None  # grad wrt the logits entering iteration t+1
    for t in range(iters - 1, -1, -1):
        if t < iters - 1:
            # logits_{t+1} = logits_t + <v_t, u_hat>
            g_v_t = np.einsum("bij,bijc->bjc", g_logits, u_hat)
            g_uhat += g_logits[..., None] * state.outputs[t][:, None, :, :]
            carry = g_logits
        else:
            g_v_t = gv
            carry = None
        g_s = squash_backward(g_v_t, squash_caches[t])
        c = state.couplings[t]
        g_c = np.einsum("bjc,bijc->bij", g_s, u_hat)
        g_uhat += c[..., None] * g_s[:, None, :, :]
        g_logits = ops.softmax_backward(g_c, (c, 2))
        if carry is not None:
            g_logits = g_logits + carry
    # u_hat = einsum('ijcp,bip->bijc', weights, u)
    d_u = np.einsum("ijcp,bijc->bip", weights, g_uhat)
    d_weights = np.einsum("bijc,bip->ijcp", g_uhat, ub)
    return (d_u[0] if single else d_u), d_weights


# ---------------------------------------------------------------------------
# margin loss

def margin_loss(v: np.ndarray, label: int, cfg: CapsNetConfig):
    """Hinge-squared loss on class capsule norms for one sample.

    The true class is pushed above m_plus; every other class is pushed
    below m_minus, down-weighted by lambda_.
    """
    if not 0 <= label < cfg.class_count:
        raise ConfigError(f"label {label} out of range 0..{cfg.class_count - 1}")
    per_sample, cache = margin_loss_batch(v[None], np.array([label]), cfg)
    return float(per_sample[0]), cache


def margin_loss_batch(v: np.ndarray, labels: np.ndarray, cfg: CapsNetConfig):
    """Per-sample margin losses for v[B,J,class_dim]; labels are 0-based."""
    if labels.min() < 0 or labels.max() >= cfg.class_count:
        raise ConfigError(f"labels out of range 0..{cfg.class_count - 1}")
    norms = np.sqrt((v * v).sum(axis=-1))  # (B, J)
    t = np.zeros_like(norms)
    t[np.arange(v.shape[0]), labels] = 1.0
    pos = np.maximum(0.0, cfg.m_plus - norms)
    neg = np.maximum(0.0, norms - cfg.m_minus)
    per_sample = (t * pos**2 + cfg.lambda_ * (1.0 - t) * neg**2).sum(axis=1)
    return per_sample, (v, norms, t, pos, neg, cfg)


def margin_loss_backward(grad_per_sample: np.ndarray, cache):
    """d(sum_b g_b * loss_b)/dv. grad_per_sample is (B,)."""
    v, norms, t, pos, neg, cfg = cache
    d_norm = -2.0 * t * pos + 2.0 * cfg.lambda_ * (1.0 - t) * neg  # (B, J)
    unit = v / np.maximum(norms, SQUASH_NORM_EPS)[..., None]
    return grad_per_sample[:, None, None] * d_norm[..., None] * unit


# ---------------------------------------------------------------------------
# decoder

def decode(v: np.ndarray, mask_label: int, params: dict):
    """Reconstruct pixels from the masked class capsules of one sample.

    All capsules except `mask_label` are zeroed, the result is flattened
    and passed through three fully connected layers: ReLU on the two hidden
    layers, sigmoid on the output so pixels land in [0, 1].
    """
    recon, cache = decode_batch(v[None], np.array([mask_label]), params)
    return recon[0], cache


def decode_batch(v: np.ndarray, mask_labels: np.ndarray, params: dict):
    b, j, _ = v.shape
    onehot = np.zeros((b, j), dtype=v.dtype)
    onehot[np.arange(b), mask_labels] = 1.0
    masked = v * onehot[:, :, None]
    x0 = masked.reshape(b, -1)
    h1, fc1 = ops.fully_connected(x0, params["decoder_w1"], params["decoder_b1"])
    a1, r1 = ops.relu(h1)
    h2, fc2 = ops.fully_connected(a1, params["decoder_w2"], params["decoder_b2"])
    a2, r2 = ops.relu(h2)
    h3, fc3 = ops.fully_connected(a2, params["decoder_w3"], params["decoder_b3"])
    recon, sg = ops.sigmoid(h3)
    return recon, (v.shape, onehot, fc1, r1, fc2, r2, fc3, sg)


def decode_backward(grad_recon: np.ndarray, cache):
    """Returns (d_v, dict of decoder parameter grads)."""
    v_shape, onehot, fc1, r1, fc2, r2, fc3, sg = cache
    g3 = ops.sigmoid_backward(grad_recon, sg)
    ga2, dw3, db3 = ops.fully_connected_backward(g3, fc3)
    g2 = ops.relu_backward(ga2, r2)
    ga1, dw2, db2 = ops.fully_connected_backward(g2, fc2)
    g1 = ops.relu_backward(ga1, r1)
    gx0, dw1, db1 = ops.fully_connected_backward(g1, fc1)
    d_v = gx0.reshape(v_shape) * onehot[:, :, None]
    grads = {
        "decoder_w1": dw1, "decoder_b1": db1,
        "decoder_w2": dw2, "decoder_b2": db2,
        "decoder_w3": dw3, "decoder_b3": db3,
    }
    return d_v, grads


def reconstruction_loss(recon: np.ndarray, target: np.ndarray):
    """Sum of squared differences between reconstruction and input pixels."""
    if recon.shape != target.shape:
        raise ShapeError(f"reconstruction_loss: shapes {recon.shape} vs {target.shape}")
    diff = recon - target
    return float((diff * diff).sum()), diff


def reconstruction_loss_backward(grad: float, cache):
    return 2.0 * grad * cache


# ---------------------------------------------------------------------------
# parameters and the full model

ROUTING_INIT_STD = 0.1      # W_ij ~ N(0, 0.01), i.e. variance 0.01
PRIMARY_INIT_GAIN = 0.25    # the primary conv feeds squash, not ReLU


def init_capsnet_params(cfg: CapsNetConfig, rng: np.random.Generator,
                        dtype=np.float32) -> dict:
    """Seeded parameter initialization.

    ReLU-facing convolution and fully connected weights draw from a
    zero-mean uniform with half-width sqrt(6/fan_in), which keeps
    activation magnitudes steady through the stack; without it the squash
    (quadratic near zero) starves the class capsules of signal. The primary
    convolution feeds the capsule squash instead of a ReLU, so its
    half-width is scaled down (gain 0.25) to land pre-squash capsule norms
    in the responsive region of the nonlinearity rather than its saturated
    tail. Biases start at zero; routing weights draw from N(0, 0.01),
    standard deviation 0.1: large enough that the gradient reaching the
    convolutional stack (which scales with this) trains real features
    instead of leaving all the fitting to the routing layer.
    """
    params: dict[str, np.ndarray] = {}

    def uniform(shape, fan_in, gain=1.0):
        a = gain * np.sqrt(6.0 / fan_in)
        return rng.uniform(-a, a, size=shape).astype(dtype)

    c_in = 1
    for i in range(cfg.conv_repeat):
        shape = (cfg.conv_filters, c_in, cfg.conv_kernel, cfg.conv_kernel)
        params[f"conv{i + 1}_kernels"] = uniform(shape, c_in * cfg.conv_kernel**2)
        params[f"conv{i + 1}_bias"] = np.zeros(cfg.conv_filters, dtype=dtype)
        c_in = cfg.conv_filters
    params["primary_kernels"] = uniform(
        (cfg.primary_conv_filters, cfg.conv_filters, cfg.primary_kernel, cfg.primary_kernel),
        cfg.conv_filters * cfg.primary_kernel**2,
        gain=PRIMARY_INIT_GAIN,
    )
    params["primary_bias"] = np.zeros(cfg.primary_conv_filters, dtype=dtype)
    params["routing_weights"] = (
        rng.normal(0.0, ROUTING_INIT_STD,
                   size=(cfg.n_lower(), cfg.class_count, cfg.class_dim, cfg.primary_dim))
        .astype(dtype)
    )
    widths = (cfg.class_count * cfg.class_dim,) + tuple(cfg.decoder_widths)
    for i in range(3):
        params[f"decoder_w{i + 1}"] = uniform((widths[i], widths[i + 1]), widths[i])
        params[f"decoder_b{i + 1}"] = np.zeros(widths[i + 1], dtype=dtype)
    return params


def primary_capsules(features: np.ndarray, kernels: np.ndarray, bias: np.ndarray,
                     cfg: CapsNetConfig):
    """Convolve the feature maps and regroup them into squashed capsules.

    The strided convolution's filters are read component-capsule-major: the
    capsule at spatial position (y, x) of component capsule g is the vector
    of filter outputs g*primary_dim .. (g+1)*primary_dim - 1 at (y, x).
    Output is (N_lower, primary_dim), batched if features were.
    """
    single = features.ndim == 3
    f4 = features[None] if single else features
    pc, conv_cache = ops.conv2d(f4, kernels, bias, cfg.primary_stride)
    b = pc.shape[0]
    side = pc.shape[2]
    if pc.shape[1] != cfg.primary_conv_filters or side != cfg.primary_side():
        raise ConfigError(
            f"primary capsule stage produced {pc.shape}, expected "
            f"{cfg.primary_conv_filters} maps of side {cfg.primary_side()}"
        )
    grouped = (
        pc.reshape(b, cfg.component_capsules, cfg.primary_dim, side, side)
        .transpose(0, 1, 3, 4, 2)
        .reshape(b, cfg.n_lower(), cfg.primary_dim)
    )
    u, sq_cache = squash(grouped)
    cache = (conv_cache, sq_cache, pc.shape, cfg, single)
    return (u[0] if single else u), cache


def primary_capsules_backward(grad_u: np.ndarray, cache):
    """Returns (d_features, d_kernels, d_bias)."""
    conv_cache, sq_cache, pc_shape, cfg, single = cache
    gu = grad_u[None] if single else grad_u
    g_grouped = squash_backward(gu, sq_cache)
    b, _, side, _ = pc_shape
    g_pc = (
        g_grouped.reshape(b, cfg.component_capsules, side, side, cfg.primary_dim)
        .transpose(0, 1, 4, 2, 3)
        .reshape(pc_shape)
    )
    d_features, d_kernels, d_bias = ops.conv2d_backward(g_pc, conv_cache)
    return (d_features[0] if single else d_features), d_kernels, d_bias


@dataclass
class ForwardResult:
    class_scores: np.ndarray          # (J,) class capsule norms
    predicted: int
    routing: RoutingState
    reconstruction: np.ndarray        # (input_side**2,)
    losses: Optional[dict] = None     # margin / reconstruction / total, when labeled


class CapsNetModel:
    """Capsule model with explicit forward and backward passes.

    Parameters live in a flat name -> array dict; loss_and_grads returns a
    gradient dict with the same keys, which is what the optimizers consume.
    """

    kind = "capsnet"

    def __init__(self, config: CapsNetConfig, params: Optional[dict] = None,
                 rng: Optional[np.random.Generator] = None, dtype=np.float32):
        self.config = config
        if params is None:
            if rng is None:
                raise ConfigError("CapsNetModel needs either params or an rng to initialize")
            params = init_capsnet_params(config, rng, dtype)
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

    def _forward_to_caps(self, images: np.ndarray):
        cfg = self.config
        h = images
        conv_caches = []
        for i in range(cfg.conv_repeat):
            z, ccache = ops.conv2d(h, self.params[f"conv{i + 1}_kernels"],
                                   self.params[f"conv{i + 1}_bias"], cfg.conv_stride)
            h, rcache = ops.relu(z)
            conv_caches.append((ccache, rcache))
        u, pcache = primary_capsules(h, self.params["primary_kernels"],
                                     self.params["primary_bias"], cfg)
        v, rcache = route(u, self.params["routing_weights"], cfg.routing_iters)
        return v, rcache, pcache, conv_caches

    def forward(self, image: np.ndarray, label: Optional[int] = None) -> ForwardResult:
        """Run one image through the full pipeline.

        With a label, losses are computed and the decoder is masked with the
        true class; without one the predicted class is masked instead.
        """
        cfg = self.config
        images = self._check_input(image)
        if images.shape[0] != 1:
            raise ShapeError(f"forward takes a single image, got batch {images.shape}")
        v, rcache, _, _ = self._forward_to_caps(images)
        state: RoutingState = rcache[3]
        scores = np.sqrt((v * v).sum(axis=-1))[0]
        predicted = int(np.argmax(scores))
        mask = label if label is not None else predicted
        recon, _ = decode_batch(v, np.array([mask]), self.params)
        losses = None
        if label is not None:
            margin, _ = margin_loss(v[0], label, cfg)
            rloss, _ = reconstruction_loss(recon[0], images.reshape(-1).astype(v.dtype))
            losses = {
                "margin": margin,
                "reconstruction": rloss,
                "total": margin + cfg.decoder_loss_weight * rloss,
            }
        return ForwardResult(scores, predicted, state, recon[0], losses)

    def predict_batch(self, images: np.ndarray) -> np.ndarray:
        """Predicted 0-based class per image (argmax of capsule norms)."""
        images = self._check_input(images)
        v, *_ = self._forward_to_caps(images)
        norms = np.sqrt((v * v).sum(axis=-1))
        return np.argmax(norms, axis=1)

    def loss_and_grads(self, images: np.ndarray, labels: np.ndarray):
        """Mean losses and parameter gradients for one labeled batch.

        The optimized objective is mean margin loss plus decoder_loss_weight
        times the mean reconstruction loss. Reported decoder loss is the
        unweighted mean so the weighting stays visible in the totals.
        """
        cfg = self.config
        images = self._check_input(images)
        b = images.shape[0]
        v, rcache, pcache, conv_caches = self._forward_to_caps(images)

        per_margin, mcache = margin_loss_batch(v, labels, cfg)
        recon, dcache = decode_batch(v, labels, self.params)
        target = images.reshape(b, -1).astype(v.dtype)
        diff = recon - target
        per_recon = (diff * diff).sum(axis=1)

        margin_mean = float(per_margin.mean())
        recon_mean = float(per_recon.mean())
        metrics = {
            "model_loss": margin_mean,
            "decoder_loss": recon_mean,
            "total_loss": margin_mean + cfg.decoder_loss_weight * recon_mean,
        }

        inv_b = np.asarray(1.0 / b, dtype=v.dtype)
        g_recon = (2.0 * cfg.decoder_loss_weight * inv_b) * diff
        g_v_dec, grads = decode_backward(g_recon, dcache)
        g_v_margin = margin_loss_backward(np.full(b, inv_b, dtype=v.dtype), mcache)
        g_u, d_w = route_backward(g_v_dec + g_v_margin, rcache)
        grads["routing_weights"] = d_w
        g_feat, d_pk, d_pb = primary_capsules_backward(g_u, pcache)
        grads["primary_kernels"] = d_pk
        grads["primary_bias"] = d_pb
        g = g_feat
        for i in range(cfg.conv_repeat - 1, -1, -1):
            ccache, rmask = conv_caches[i]
            g = ops.relu_backward(g, rmask)
            g, dk, db = ops.conv2d_backward(g, ccache)
            grads[f"conv{i + 1}_kernels"] = dk
            grads[f"conv{i + 1}_bias"] = db
        return metrics, grads


@dataclass
class TweakResult:
    winner: int
    baseline: np.ndarray              # (side, side) unperturbed reconstruction
    deltas: list[float]
    images: list[np.ndarray]          # one (side, side) reconstruction per delta


def tweak(model: CapsNetModel, image: np.ndarray, dim: int,
          deltas: Sequence[float]) -> TweakResult:
    """Perturb one dimension of the winning class capsule and re-decode.

    Each delta is added to `dim` of the winning capsule's activity vector
    before decoding, producing one reconstruction per delta. A zero delta
    reproduces the baseline reconstruction exactly.
    """
    cfg = model.config
    if not 0 <= dim < cfg.class_dim:
        raise ConfigError(f"tweak dim {dim} out of range 0..{cfg.class_dim - 1}")
    side = cfg.input_side
    images_in = model._check_input(image)
    v, *_ = model._forward_to_caps(images_in)
    norms = np.sqrt((v * v).sum(axis=-1))[0]
    winner = int(np.argmax(norms))
    baseline, _ = decode_batch(v, np.array([winner]), model.params)
    out: list[np.ndarray] = []
    for delta in deltas:
        v_mod = v.copy()
        v_mod[0, winner, dim] += v.dtype.type(delta)
        recon, _ = decode_batch(v_mod, np.array([winner]), model.params)
        out.append(recon[0].reshape(side, side))
    return TweakResult(winner, baseline[0].reshape(side, side),
                       list(float(d) for d in deltas), out)


def default_tweak_deltas() -> list[float]:
    """The default perturbation grid: -0.25 to 0.25 in steps of 0.05."""
    return [round(-0.25 + 0.05 * i, 2) for i in range(11)]
