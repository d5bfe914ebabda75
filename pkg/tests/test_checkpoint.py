"""Checkpoint format: round-trips, corruption taxonomy, kind checking, and
RNG-state restoration."""

import struct
import zlib

import numpy as np
import pytest

from capsroute import checkpoint as ckpt_io
from capsroute.capsnet import CapsNetModel
from capsroute.checkpoint import Checkpoint
from capsroute.cnn import CnnModel
from capsroute.errors import (
    BadMagicError,
    ChecksumError,
    FormatVersionError,
    ModelKindError,
    RecordValidationError,
    TruncatedFileError,
)
from capsroute.presets import TINY, TINY_CNN
from capsroute.rng import make_rng, restore_rng, rng_state
from capsroute.train import model_from_checkpoint
from dataclasses import asdict


def make_checkpoint():
    rng = make_rng(0, "ckpt")
    params = {
        "a": rng.standard_normal((3, 4)).astype(np.float32),
        "b": rng.standard_normal(7),  # float64
        "c": np.zeros((2, 1, 2, 2), dtype=np.float32),
    }
    return Checkpoint(
        kind="capsnet",
        config=asdict(TINY),
        params=params,
        rng_state=rng_state(make_rng(5, "order")),
        meta={"best_epoch": 3, "best_val_accuracy": 0.75, "note": "x"},
    )


def test_round_trip(tmp_path):
    path = str(tmp_path / "m.ckpt")
    ckpt = make_checkpoint()
    ckpt_io.save(path, ckpt)
    loaded = ckpt_io.load(path)
    assert loaded.kind == "capsnet"
    assert loaded.config == {k: (list(v) if isinstance(v, tuple) else v)
                             for k, v in asdict(TINY).items()}
    assert set(loaded.params) == set(ckpt.params)
    for name in ckpt.params:
        assert loaded.params[name].dtype == ckpt.params[name].dtype
        assert np.array_equal(loaded.params[name], ckpt.params[name])
    assert loaded.meta["best_epoch"] == 3 and loaded.meta["note"] == "x"


def test_rng_state_round_trip_continues_stream(tmp_path):
    path = str(tmp_path / "m.ckpt")
    gen = make_rng(11, "order")
    gen.random(17)  # advance
    ckpt = make_checkpoint()
    ckpt.rng_state = rng_state(gen)
    expected = gen.random(5)
    ckpt_io.save(path, ckpt)
    resumed = restore_rng(ckpt_io.load(path).rng_state)
    assert np.array_equal(resumed.random(5), expected)


def test_save_deterministic_bytewise(tmp_path):
    p1, p2 = str(tmp_path / "a.ckpt"), str(tmp_path / "b.ckpt")
    ckpt_io.save(p1, make_checkpoint())
    ckpt_io.save(p2, make_checkpoint())
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_unsupported_dtype_rejected(tmp_path):
    ckpt = make_checkpoint()
    ckpt.params["bad"] = np.zeros(3, dtype=np.int32)
    with pytest.raises(RecordValidationError):
        ckpt_io.save(str(tmp_path / "m.ckpt"), ckpt)


def _saved_bytes(tmp_path):
    path = str(tmp_path / "m.ckpt")
    ckpt_io.save(path, make_checkpoint())
    return path, bytearray(open(path, "rb").read())


def test_bad_magic(tmp_path):
    path, raw = _saved_bytes(tmp_path)
    raw[:4] = b"NOPE"
    open(path, "wb").write(bytes(raw))
    with pytest.raises(BadMagicError):
        ckpt_io.load(path)


def test_version_mismatch(tmp_path):
    path, raw = _saved_bytes(tmp_path)
    struct.pack_into("<H", raw, 4, 9)
    body = bytes(raw[:-4])
    open(path, "wb").write(body + struct.pack("<I", zlib.crc32(body)))
    with pytest.raises(FormatVersionError):
        ckpt_io.load(path)


def test_corrupted_tensor_byte_fails_checksum(tmp_path):
    path, raw = _saved_bytes(tmp_path)
    raw[-20] ^= 0x01  # inside the last tensor's bytes
    open(path, "wb").write(bytes(raw))
    with pytest.raises(ChecksumError):
        ckpt_io.load(path)


def test_truncation(tmp_path):
    path, raw = _saved_bytes(tmp_path)
    open(path, "wb").write(bytes(raw[:-10]))
    with pytest.raises(TruncatedFileError):
        ckpt_io.load(path)


def test_model_from_checkpoint_kinds(tmp_path):
    cnn = CnnModel(TINY_CNN, rng=make_rng(0, "init-cnn"))
    ckpt = Checkpoint(kind="cnn", config=asdict(TINY_CNN), params=cnn.params)
    path = str(tmp_path / "cnn.ckpt")
    ckpt_io.save(path, ckpt)
    loaded = ckpt_io.load(path)
    with pytest.raises(ModelKindError):
        model_from_checkpoint(loaded, expect_kind="capsnet")
    model = model_from_checkpoint(loaded, expect_kind="cnn")
    assert isinstance(model, CnnModel)
    for name in cnn.params:
        assert np.array_equal(model.params[name], cnn.params[name])
    loaded.kind = "transformer"
    with pytest.raises(ModelKindError):
        model_from_checkpoint(loaded)


def test_model_from_checkpoint_rebuilds_capsnet(tmp_path):
    model = CapsNetModel(TINY, rng=make_rng(1, "init-capsnet"))
    ckpt = Checkpoint(kind="capsnet", config=asdict(TINY), params=model.params)
    path = str(tmp_path / "caps.ckpt")
    ckpt_io.save(path, ckpt)
    rebuilt = model_from_checkpoint(ckpt_io.load(path))
    assert rebuilt.config == TINY  # tuples restored from JSON lists
    image = make_rng(2, "img").random((TINY.input_side, TINY.input_side)).astype(np.float32)
    a = model.forward(image)
    b = rebuilt.forward(image)
    assert np.array_equal(a.class_scores, b.class_scores)
