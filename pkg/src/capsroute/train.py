"""Training engine: optimizers, early stopping on validation accuracy,
evaluation metrics, and epoch-report CSV emission.

Both model classes expose the same protocol (params dict, param_groups,
loss_and_grads, predict_batch), so one loop trains either. Early stopping
watches validation ACCURACY: training stops once it has not strictly
improved for `early_stop_patience` consecutive epochs, and the weights that
are kept are the best-validation snapshot, not the last epoch's.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .capsnet import CapsNetConfig, CapsNetModel
from .checkpoint import Checkpoint
from .cnn import CnnConfig, CnnModel
from .data import Dataset
from .errors import ConfigError, EmptySplitError, ModelKindError, TrainingDivergedError
from .rng import make_rng, restore_rng, rng_state

OPTIMIZERS = ("adam", "sgd_momentum")
# adam steps are sign-like per coordinate; with 18k+ lower capsules feeding
# each class sum, 1e-3 overshoots the squash operating range and training
# collapses to label marginals, so the default is an order lower
DEFAULT_LR = {"adam": 1e-4, "sgd_momentum": 1e-2}
CSV_COLUMNS = ("epoch", "capsnet_loss", "decoder_loss", "total_loss", "val_accuracy", "seconds")


@dataclass(frozen=True)
class TrainConfig:
    epochs_max: int = 10
    batch_size: int = 16
    optimizer: str = "adam"
    learning_rate: Optional[float] = None   # None picks the optimizer default
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    early_stop_patience: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer {self.optimizer!r} not in {OPTIMIZERS}")
        # lr 0 is allowed so the zero-step contract is testable end to end
        if self.learning_rate is not None and self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs_max < 1:
            raise ConfigError(f"epochs_max must be >= 1, got {self.epochs_max}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.early_stop_patience < 1:
            raise ConfigError(f"early_stop_patience must be >= 1, got {self.early_stop_patience}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError(f"betas must be in [0, 1), got ({self.beta1}, {self.beta2})")

    def lr(self) -> float:
        return DEFAULT_LR[self.optimizer] if self.learning_rate is None else self.learning_rate


def default_train_config(model_kind: str, **overrides) -> TrainConfig:
    """Adam 1e-4 for the capsule model, SGD momentum 0.9 lr 1e-2 for the CNN."""
    base = {"capsnet": {"optimizer": "adam"}, "cnn": {"optimizer": "sgd_momentum"}}
    if model_kind not in base:
        raise ModelKindError(f"unknown model kind {model_kind!r}")
    merged = {**base[model_kind], **overrides}
    return TrainConfig(**merged)


@dataclass
class EpochReport:
    epoch: int                      # 1-based
    model_loss: float               # margin loss (capsnet) or cross-entropy (cnn)
    decoder_loss: Optional[float]   # pre-weight reconstruction mean; None for cnn
    total_loss: float
    val_accuracy: float
    seconds: Optional[float]        # None when timing is off


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SgdMomentum:
    def __init__(self, params: dict[str, np.ndarray], lr: float, momentum: float = 0.9):
        self.lr = lr
        self.momentum = momentum
        self.vel = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for k, g in grads.items():
            vel = self.vel[k]
            vel *= self.momentum
            vel -= self.lr * g
            params[k] += vel


def make_optimizer(cfg: TrainConfig, params: dict[str, np.ndarray]):
    if cfg.optimizer == "adam":
        return Adam(params, cfg.lr(), cfg.beta1, cfg.beta2, cfg.adam_eps)
    return SgdMomentum(params, cfg.lr(), cfg.momentum)


def batch_accuracy(model, images: np.ndarray, labels: np.ndarray, batch_size: int = 64) -> float:
    correct = 0
    for start in range(0, images.shape[0], batch_size):
        pred = model.predict_batch(images[start:start + batch_size])
        correct += int((pred == labels[start:start + batch_size]).sum())
    return correct / images.shape[0]


def train(model, dataset: Dataset, cfg: TrainConfig,
          val_accuracy_fn: Optional[Callable[[object, int], float]] = None,
          on_epoch_end: Optional[Callable[[EpochReport], None]] = None,
          timing: str = "off",
          order_rng_state: Optional[dict] = None):
    """Run the optimization loop; returns (best Checkpoint, [EpochReport]).

    `val_accuracy_fn(model, epoch)` overrides the validation measurement
    (used by tests to script accuracy sequences); `order_rng_state` resumes
    the batch-order stream from a previous checkpoint. With timing "off"
    (the default) the seconds field is None, so reports and their CSV are
    reproducible byte for byte; "wall" records wall-clock seconds.
    """
    if timing not in ("off", "wall"):
        raise ConfigError(f"timing must be 'off' or 'wall', got {timing!r}")
    train_images, train_labels = dataset.arrays("train")
    val_images, val_labels = dataset.arrays("val")
    if val_accuracy_fn is None:
        def val_accuracy_fn(m, epoch):
            return batch_accuracy(m, val_images, val_labels)

    if order_rng_state is not None:
        order_rng = restore_rng(order_rng_state)
    else:
        order_rng = make_rng(cfg.seed, "order")
    optimizer = make_optimizer(cfg, model.params)
    n = train_images.shape[0]
    reports: list[EpochReport] = []
    best_acc = -np.inf
    best_epoch = 0
    best_params: dict[str, np.ndarray] = {}
    best_rng: Optional[dict] = None
    stale = 0

    for epoch in range(1, cfg.epochs_max + 1):
        t0 = time.perf_counter()
        order = order_rng.permutation(n)
        sums = {"model_loss": 0.0, "decoder_loss": 0.0, "total_loss": 0.0}
        have_decoder = False
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            metrics, grads = model.loss_and_grads(train_images[idx], train_labels[idx])
            if not np.isfinite(metrics["total_loss"]):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} batch {b}")
            for name, g in grads.items():
                if not np.isfinite(g).all():
                    raise TrainingDivergedError(
                        f"non-finite gradient in parameter group {name!r} at epoch {epoch} batch {b}")
            w = len(idx)
            sums["model_loss"] += metrics["model_loss"] * w
            sums["total_loss"] += metrics["total_loss"] * w
            if metrics["decoder_loss"] is not None:
                sums["decoder_loss"] += metrics["decoder_loss"] * w
                have_decoder = True
            optimizer.step(model.params, grads)
        acc = float(val_accuracy_fn(model, epoch))
        report = EpochReport(
            epoch=epoch,
            model_loss=sums["model_loss"] / n,
            decoder_loss=(sums["decoder_loss"] / n) if have_decoder else None,
            total_loss=sums["total_loss"] / n,
            val_accuracy=acc,
            seconds=(time.perf_counter() - t0) if timing == "wall" else None,
        )
        reports.append(report)
        if acc > best_acc:
            best_acc = acc
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in model.params.items()}
            best_rng = rng_state(order_rng)
            stale = 0
        else:
            stale += 1
        if on_epoch_end is not None:
            on_epoch_end(report)
        if stale >= cfg.early_stop_patience:
            break

    for k, v in best_params.items():
        model.params[k] = v.copy()
    ckpt = Checkpoint(
        kind=model.kind,
        config=asdict(model.config),
        params={k: v.copy() for k, v in best_params.items()},
        rng_state=best_rng,
        meta={
            "best_epoch": best_epoch,
            "best_val_accuracy": best_acc,
            "epochs_run": len(reports),
            "train_config": asdict(cfg),
        },
    )
    return ckpt, reports


def model_from_checkpoint(ckpt: Checkpoint, expect_kind: Optional[str] = None):
    """Rebuild a model object from a checkpoint, parameters included."""
    if expect_kind is not None and ckpt.kind != expect_kind:
        raise ModelKindError(f"checkpoint holds a {ckpt.kind!r} model, {expect_kind!r} required")
    raw = dict(ckpt.config)
    for key, value in raw.items():
        if isinstance(value, list):
            raw[key] = tuple(value)
    if ckpt.kind == "capsnet":
        model = CapsNetModel(CapsNetConfig(**raw), params={})
    elif ckpt.kind == "cnn":
        model = CnnModel(CnnConfig(**raw), params={})
    else:
        raise ModelKindError(f"unknown model kind {ckpt.kind!r} in checkpoint")
    model.params = {k: v.copy() for k, v in ckpt.params.items()}
    return model


# ---------------------------------------------------------------------------
# evaluation

def evaluate_arrays(model, images: np.ndarray, labels: np.ndarray) -> dict:
    """Accuracy, per-class precision/recall, confusion matrix (rows = true)."""
    if images.shape[0] == 0:
        raise EmptySplitError("cannot evaluate on zero samples")
    k = model.config.class_count
    pred = np.concatenate([model.predict_batch(images[s:s + 64]) for s in range(0, images.shape[0], 64)])
    confusion = np.zeros((k, k), dtype=np.int64)
    for t, p in zip(labels, pred):
        confusion[t, p] += 1
    accuracy = float(np.trace(confusion)) / images.shape[0]
    precision = []
    recall = []
    for c in range(k):
        tp = float(confusion[c, c])
        col = float(confusion[:, c].sum())
        row = float(confusion[c, :].sum())
        precision.append(tp / col if col > 0 else 0.0)
        recall.append(tp / row if row > 0 else 0.0)
    return {
        "accuracy": accuracy,
        "precision": precision,
        "recall": recall,
        "confusion": confusion,
    }


def evaluate(model, dataset: Dataset, split: str, mode: Optional[str] = None) -> dict:
    images, labels = dataset.arrays(split, mode)
    return evaluate_arrays(model, images, labels)


# ---------------------------------------------------------------------------
# CSV emission

def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def reports_csv_text(reports: list[EpochReport]) -> str:
    """Render epoch reports as CSV; float cells use repr so rereading is exact."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in reports:
        writer.writerow([
            _cell(r.epoch),
            _cell(r.model_loss),
            _cell(r.decoder_loss),
            _cell(r.total_loss),
            _cell(r.val_accuracy),
            _cell(r.seconds),
        ])
    return buf.getvalue()


def write_reports_csv(path: str, reports: list[EpochReport]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(reports_csv_text(reports))


def write_confusion_csv(path: str, confusion: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        k = confusion.shape[0]
        writer.writerow(["true\\pred"] + [str(c) for c in range(k)])
        for r in range(k):
            writer.writerow([str(r)] + [str(int(x)) for x in confusion[r]])
