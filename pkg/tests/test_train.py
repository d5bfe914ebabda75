"""Training loop: early stopping, best-snapshot restore, zero-step contract,
divergence diagnostics, evaluation metrics, and CSV emission."""

import numpy as np
import pytest

from capsroute.cnn import CnnModel
from capsroute.data import make_synth_dataset
from capsroute.errors import (
    ConfigError,
    EmptySplitError,
    ModelKindError,
    TrainingDivergedError,
)
from capsroute.presets import CNN_DEFAULT, TINY
from capsroute.rng import make_rng
from capsroute.train import (
    Adam,
    EpochReport,
    SgdMomentum,
    TrainConfig,
    default_train_config,
    evaluate_arrays,
    reports_csv_text,
    train,
    write_confusion_csv,
)


class StubModel:
    """Implements the model protocol with scripted losses and unit gradients."""

    kind = "capsnet"

    def __init__(self, with_decoder=True, bad_loss=False, bad_grad=False):
        self.config = TINY
        self.params = {"w": np.zeros(3, dtype=np.float32)}
        self.with_decoder = with_decoder
        self.bad_loss = bad_loss
        self.bad_grad = bad_grad
        self.batch_labels = []

    def param_groups(self):
        return list(self.params)

    def loss_and_grads(self, images, labels):
        self.batch_labels.append(labels.copy())
        if self.bad_loss:
            return {"model_loss": np.nan, "decoder_loss": None, "total_loss": np.nan}, \
                {"w": np.zeros(3, dtype=np.float32)}
        grad = np.full(3, np.nan if self.bad_grad else 1.0, dtype=np.float32)
        decoder = 2.0 if self.with_decoder else None
        total = 1.0 + (TINY.decoder_loss_weight * 2.0 if self.with_decoder else 0.0)
        return {"model_loss": 1.0, "decoder_loss": decoder, "total_loss": total}, {"w": grad}

    def predict_batch(self, images):
        return np.zeros(images.shape[0], dtype=np.int64)


@pytest.fixture(scope="module")
def dataset():
    return make_synth_dataset(seed=7, n_per_class=4)


# ---------------------------------------------------------------------------
# config

def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(optimizer="rmsprop")
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=-0.1)
    with pytest.raises(ConfigError):
        TrainConfig(epochs_max=0)
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(early_stop_patience=0)
    with pytest.raises(ConfigError):
        TrainConfig(momentum=1.0)
    with pytest.raises(ConfigError):
        TrainConfig(beta2=1.0)
    assert TrainConfig(learning_rate=0.0).lr() == 0.0  # zero-step contract stays testable


def test_default_train_config_per_kind():
    caps = default_train_config("capsnet")
    cnn = default_train_config("cnn", epochs_max=3)
    assert caps.optimizer == "adam" and caps.lr() == 1e-4
    assert cnn.optimizer == "sgd_momentum" and cnn.lr() == 1e-2 and cnn.epochs_max == 3
    with pytest.raises(ModelKindError):
        default_train_config("transformer")


# ---------------------------------------------------------------------------
# optimizers

def test_sgd_momentum_two_steps_by_hand():
    params = {"w": np.array([1.0, 2.0])}
    opt = SgdMomentum(params, lr=0.1, momentum=0.5)
    g = {"w": np.array([1.0, -2.0])}
    opt.step(params, g)
    assert np.allclose(params["w"], [0.9, 2.2], atol=1e-15)
    opt.step(params, g)  # vel = 0.5*(-0.1g) - 0.1g = -0.15g
    assert np.allclose(params["w"], [0.75, 2.5], atol=1e-15)


def test_adam_first_step_is_signlike():
    params = {"w": np.array([1.0, -1.0, 0.5])}
    opt = Adam(params, lr=0.01)
    g = {"w": np.array([3.0, -0.2, 1e-4])}
    opt.step(params, g)
    # after bias correction the first step is lr * g/(|g| + eps) ~= lr * sign(g)
    assert np.allclose(params["w"], [1.0 - 0.01, -1.0 + 0.01, 0.5 - 0.01], atol=1e-5)


def test_zero_learning_rate_leaves_params_bitwise():
    for opt_cls in (lambda p: Adam(p, lr=0.0), lambda p: SgdMomentum(p, lr=0.0)):
        params = {"w": make_rng(0, "zero-lr").standard_normal(5)}
        before = params["w"].copy()
        opt = opt_cls(params)
        for _ in range(3):
            opt.step(params, {"w": np.ones(5)})
        assert np.array_equal(params["w"], before)


# ---------------------------------------------------------------------------
# training loop / early stopping

def run_injected(seq, patience, dataset, epochs_max=10, **kwargs):
    model = StubModel()
    cfg = TrainConfig(epochs_max=epochs_max, batch_size=16,
                      early_stop_patience=patience, seed=0, learning_rate=0.05)
    snapshots = {}

    def on_epoch_end(report):
        snapshots[report.epoch] = model.params["w"].copy()

    ckpt, reports = train(model, dataset, cfg,
                          val_accuracy_fn=lambda m, epoch: seq[epoch - 1],
                          on_epoch_end=on_epoch_end, **kwargs)
    return model, ckpt, reports, snapshots


def test_injected_sequence_stops_after_epoch_4_best_2(dataset):
    model, ckpt, reports, snaps = run_injected([0.5, 0.6, 0.55, 0.54, 0.7], 2, dataset)
    assert len(reports) == 4            # 0.55 and 0.54 never improve on 0.6
    assert ckpt.meta["best_epoch"] == 2
    assert ckpt.meta["best_val_accuracy"] == 0.6
    assert ckpt.meta["epochs_run"] == 4
    # restored weights are the epoch-2 snapshot, not the last epoch's
    assert np.array_equal(model.params["w"], snaps[2])
    assert np.array_equal(ckpt.params["w"], snaps[2])
    assert not np.array_equal(snaps[2], snaps[4])


def test_improvement_resets_patience(dataset):
    _, ckpt, reports, _ = run_injected([0.5, 0.4, 0.6, 0.55, 0.65, 0.1, 0.1], 2, dataset)
    # stale resets at epochs 3 and 5; two flat epochs after 5 stop at 7
    assert len(reports) == 7
    assert ckpt.meta["best_epoch"] == 5


def test_equal_accuracy_is_not_improvement(dataset):
    _, ckpt, reports, _ = run_injected([0.5, 0.5, 0.5, 0.5], 2, dataset)
    # plateau: epochs 2 and 3 are both stale, so patience 2 stops after epoch 3
    assert len(reports) == 3
    assert ckpt.meta["best_epoch"] == 1


def test_epochs_max_caps_training(dataset):
    _, ckpt, reports, _ = run_injected([0.1 * i for i in range(1, 11)], 3, dataset,
                                       epochs_max=4)
    assert len(reports) == 4
    assert ckpt.meta["best_epoch"] == 4


def test_best_accuracy_never_below_observed(dataset):
    seq = [0.3, 0.8, 0.2, 0.1]
    _, ckpt, reports, _ = run_injected(seq, 2, dataset)
    assert ckpt.meta["best_val_accuracy"] == max(r.val_accuracy for r in reports)


def test_reports_carry_loss_identity(dataset):
    _, _, reports, _ = run_injected([0.5, 0.6], 2, dataset, epochs_max=2)
    for r in reports:
        assert r.epoch >= 1
        assert abs(r.total_loss - (r.model_loss + TINY.decoder_loss_weight * r.decoder_loss)) <= 1e-6
        assert r.seconds is None


def test_timing_wall_records_seconds(dataset):
    _, _, reports, _ = run_injected([0.5], 1, dataset, epochs_max=1, timing="wall")
    assert reports[0].seconds is not None and reports[0].seconds >= 0.0
    with pytest.raises(ConfigError):
        run_injected([0.5], 1, dataset, timing="cpu")


def test_order_rng_state_resumes_batch_order(dataset):
    # run A: epoch 1 is best; its checkpoint rng state points at epoch 2's order
    model_a = StubModel()
    cfg = TrainConfig(epochs_max=2, batch_size=3, early_stop_patience=2,
                      seed=3, learning_rate=0.05)
    seq = [0.6, 0.5]
    ckpt_a, _ = train(model_a, dataset, cfg,
                      val_accuracy_fn=lambda m, e: seq[e - 1])
    assert ckpt_a.meta["best_epoch"] == 1
    n_batches = len(model_a.batch_labels) // 2
    epoch2_labels = model_a.batch_labels[n_batches:]

    model_b = StubModel()
    cfg_b = TrainConfig(epochs_max=1, batch_size=3, early_stop_patience=2,
                        seed=999, learning_rate=0.05)
    train(model_b, dataset, cfg_b, val_accuracy_fn=lambda m, e: 0.5,
          order_rng_state=ckpt_a.rng_state)
    assert len(model_b.batch_labels) == n_batches
    for a, b in zip(epoch2_labels, model_b.batch_labels):
        assert np.array_equal(a, b)


def test_zero_lr_training_leaves_real_model_unchanged(dataset):
    model = CnnModel(CNN_DEFAULT, rng=make_rng(0, "init-cnn"))
    before = {k: v.copy() for k, v in model.params.items()}
    cfg = default_train_config("cnn", learning_rate=0.0, epochs_max=2, seed=0)
    train(model, dataset, cfg)
    for k in before:
        assert np.array_equal(model.params[k], before[k]), k


def test_nan_loss_aborts_with_location(dataset):
    with pytest.raises(TrainingDivergedError, match="epoch 1 batch 0"):
        train(StubModel(bad_loss=True), dataset,
              TrainConfig(epochs_max=1, learning_rate=0.0))


def test_nan_grad_aborts_naming_group(dataset):
    with pytest.raises(TrainingDivergedError, match="parameter group 'w'"):
        train(StubModel(bad_grad=True), dataset,
              TrainConfig(epochs_max=1, learning_rate=0.0))


def test_empty_split_aborts():
    empty_val = make_synth_dataset(seed=0, n_per_class=2, fractions=(1.0, 0.0, 0.0))
    with pytest.raises(EmptySplitError):
        train(StubModel(), empty_val, TrainConfig(epochs_max=1, learning_rate=0.0))


# ---------------------------------------------------------------------------
# evaluation

class ScriptedModel:
    kind = "cnn"

    def __init__(self, preds, class_count=3):
        self.preds = np.asarray(preds)
        self.config = type("Cfg", (), {"class_count": class_count})()

    def predict_batch(self, images):
        n = images.shape[0]
        out, self.preds = self.preds[:n], self.preds[n:]
        return out


def test_evaluate_hand_counted_metrics():
    labels = np.array([0, 0, 1, 1, 2, 2, 0, 1, 2, 0])
    preds = [0, 1, 1, 1, 2, 0, 0, 1, 2, 2]
    result = evaluate_arrays(ScriptedModel(preds), np.zeros((10, 1, 4, 4)), labels)
    assert result["accuracy"] == 0.7
    assert np.array_equal(result["confusion"], [[2, 1, 1], [0, 3, 0], [1, 0, 2]])
    assert result["precision"] == pytest.approx([2 / 3, 3 / 4, 2 / 3])
    assert result["recall"] == pytest.approx([0.5, 1.0, 2 / 3])


def test_evaluate_all_correct_is_diagonal():
    labels = np.array([0, 1, 2, 1])
    result = evaluate_arrays(ScriptedModel(labels.copy()), np.zeros((4, 1, 4, 4)), labels)
    assert result["accuracy"] == 1.0
    assert np.array_equal(result["confusion"], np.diag([1, 2, 1]))


def test_evaluate_guards_zero_division():
    labels = np.array([0, 1, 2])
    result = evaluate_arrays(ScriptedModel([0, 0, 0]), np.zeros((3, 1, 4, 4)), labels)
    assert result["precision"][1] == 0.0 and result["precision"][2] == 0.0
    assert result["recall"][1] == 0.0


def test_evaluate_empty_raises():
    with pytest.raises(EmptySplitError):
        evaluate_arrays(ScriptedModel([]), np.zeros((0, 1, 4, 4)), np.zeros(0, dtype=np.int64))


# ---------------------------------------------------------------------------
# CSV emission

def test_reports_csv_exact_text():
    reports = [
        EpochReport(1, 0.5, 2.0, 0.501, 0.25, None),
        EpochReport(2, 0.25, None, 0.25, 0.5, 1.5),
    ]
    assert reports_csv_text(reports) == (
        "epoch,capsnet_loss,decoder_loss,total_loss,val_accuracy,seconds\n"
        "1,0.5,2.0,0.501,0.25,\n"
        "2,0.25,,0.25,0.5,1.5\n"
    )


def test_csv_floats_reread_exactly():
    ugly = 0.1 + 0.2
    text = reports_csv_text([EpochReport(1, ugly, None, ugly, ugly, None)])
    cell = text.splitlines()[1].split(",")[1]
    assert float(cell) == ugly


def test_confusion_csv_layout(tmp_path):
    path = str(tmp_path / "confusion.csv")
    write_confusion_csv(path, np.array([[5, 0, 1], [0, 4, 0], [2, 0, 3]]))
    assert open(path).read() == (
        "true\\pred,0,1,2\n"
        "0,5,0,1\n"
        "1,0,4,0\n"
        "2,2,0,3\n"
    )
