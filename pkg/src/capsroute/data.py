"""Dataset schema, the BTDS binary format, and a synthetic generator.

Samples are 64x64 grayscale slices in [0,1] labeled meningioma (1),
glioma (2), or pituitary (3), optionally with a binary tumor mask and a
patient id. Splits are assigned per patient, never per image: slices of one
patient always land in the same split, so validation never sees a training
patient.

BTDS file layout (little-endian):
    magic "BTDS" | u16 version=1 | u32 sample count | u8 masks-present
    per record: u32 patient_id | u8 label | 4096 f32 pixels | [4096 u8 mask]
    u32 CRC32 over every preceding byte
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    BadMagicError,
    ChecksumError,
    ConfigError,
    EmptySplitError,
    FormatVersionError,
    RecordValidationError,
    ShapeError,
    TruncatedFileError,
)
from .rng import make_rng

SIDE = 64
MAGIC = b"BTDS"
VERSION = 1
LABEL_NAMES = {1: "meningioma", 2: "glioma", 3: "pituitary"}
INPUT_MODES = ("whole_brain", "segmented_tumor")
DEFAULT_FRACTIONS = (0.70, 0.15, 0.15)
SPLITS = ("train", "val", "test")


@dataclass
class Sample:
    image: np.ndarray                 # (64, 64) float32 in [0, 1]
    label: int                        # 1..3
    patient_id: int
    mask: Optional[np.ndarray] = None  # (64, 64) uint8 in {0, 1}

    def validate(self, record: str = "sample") -> "Sample":
        if self.image.shape != (SIDE, SIDE):
            raise RecordValidationError(f"{record}: image shape {self.image.shape}, expected ({SIDE}, {SIDE})")
        if self.image.dtype != np.float32:
            raise RecordValidationError(f"{record}: image dtype {self.image.dtype}, expected float32")
        if not np.isfinite(self.image).all() or self.image.min() < 0.0 or self.image.max() > 1.0:
            raise RecordValidationError(f"{record}: pixels outside [0, 1]")
        if self.label not in LABEL_NAMES:
            raise RecordValidationError(f"{record}: label {self.label} not in {sorted(LABEL_NAMES)}")
        if self.mask is not None:
            if self.mask.shape != (SIDE, SIDE) or self.mask.dtype != np.uint8:
                raise RecordValidationError(f"{record}: mask must be ({SIDE}, {SIDE}) uint8")
            if not np.isin(self.mask, (0, 1)).all():
                raise RecordValidationError(f"{record}: mask values outside {{0, 1}}")
        if not 0 <= self.patient_id < 2**32:
            raise RecordValidationError(f"{record}: patient_id {self.patient_id} not a u32")
        return self


# ---------------------------------------------------------------------------
# downsampling and input modes

def block_mean(image: np.ndarray) -> np.ndarray:
    """Mean over aligned 8x8 blocks: (512, 512) -> (64, 64), no normalization."""
    if image.shape != (512, 512):
        raise ShapeError(f"block_mean expects (512, 512), got {image.shape}")
    factor = 512 // SIDE
    return image.reshape(SIDE, factor, SIDE, factor).mean(axis=(1, 3))


def minmax_normalize(image: np.ndarray) -> np.ndarray:
    """Scale to [0, 1] per image; a constant image maps to all zeros."""
    lo = float(image.min())
    hi = float(image.max())
    if hi == lo:
        return np.zeros_like(image, dtype=np.float32)
    return ((image - lo) / (hi - lo)).astype(np.float32)


def downsample(image_512: np.ndarray) -> np.ndarray:
    """512x512 -> 64x64 by 8x8 block means, then per-image min-max to [0, 1]."""
    return minmax_normalize(block_mean(image_512))


def apply_input_mode(sample: Sample, mode: str) -> np.ndarray:
    """Materialize the network input for a sample under the given mode."""
    if mode == "whole_brain":
        return sample.image
    if mode == "segmented_tumor":
        if sample.mask is None:
            raise ConfigError("segmented_tumor mode requires samples with masks")
        return (sample.image * sample.mask).astype(np.float32)
    raise ConfigError(f"unknown input mode {mode!r}, expected one of {INPUT_MODES}")


# ---------------------------------------------------------------------------
# dataset with patient-level splits

@dataclass
class Dataset:
    samples: list[Sample]
    seed: int
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS
    input_mode: str = "whole_brain"
    split_indices: dict[str, list[int]] = field(default_factory=dict)

    def __post_init__(self):
        if self.input_mode not in INPUT_MODES:
            raise ConfigError(f"unknown input mode {self.input_mode!r}")
        if abs(sum(self.fractions) - 1.0) > 1e-9 or any(f < 0 for f in self.fractions):
            raise ConfigError(f"split fractions must be nonnegative and sum to 1, got {self.fractions}")
        if not self.split_indices:
            self.split_indices = assign_patient_splits(self.samples, self.seed, self.fractions)

    def __len__(self) -> int:
        return len(self.samples)

    def indices(self, split: str) -> list[int]:
        if split not in SPLITS:
            raise ConfigError(f"unknown split {split!r}, expected one of {SPLITS}")
        return self.split_indices[split]

    def arrays(self, split: str, mode: Optional[str] = None):
        """(images[N,1,64,64] float32, labels0[N] int64) for a split.

        Labels come back 0-based for the models; stored labels are 1-based.
        """
        mode = mode or self.input_mode
        idx = self.indices(split)
        if not idx:
            raise EmptySplitError(f"split {split!r} is empty")
        images = np.stack([apply_input_mode(self.samples[i], mode) for i in idx])
        labels = np.array([self.samples[i].label - 1 for i in idx], dtype=np.int64)
        return images[:, None, :, :], labels


def assign_patient_splits(samples: list[Sample], seed: int,
                          fractions: tuple[float, float, float]) -> dict[str, list[int]]:
    """Shuffle patients (not images) and cut at the rounded fraction boundaries.

    Realized fractions are within one patient of the request; every sample of
    a patient shares that patient's split.
    """
    patients: list[int] = []
    seen = set()
    for s in samples:
        if s.patient_id not in seen:
            seen.add(s.patient_id)
            patients.append(s.patient_id)
    order = make_rng(seed, "split").permutation(len(patients))
    shuffled = [patients[i] for i in order]
    p = len(shuffled)
    b1 = round(fractions[0] * p)
    b2 = round((fractions[0] + fractions[1]) * p)
    assignment = {}
    for rank, pid in enumerate(shuffled):
        assignment[pid] = "train" if rank < b1 else ("val" if rank < b2 else "test")
    out: dict[str, list[int]] = {name: [] for name in SPLITS}
    for i, s in enumerate(samples):
        out[assignment[s.patient_id]].append(i)
    return out


# ---------------------------------------------------------------------------
# BTDS store / load

def store(path: str, samples: list[Sample]) -> None:
    """Write samples to a BTDS file (atomically: temp file then rename).

    Masks are written only when every sample has one; a mix is an error
    because the format flags mask presence file-wide.
    """
    have_mask = [s.mask is not None for s in samples]
    if any(have_mask) and not all(have_mask):
        raise RecordValidationError("cannot store a mix of masked and maskless samples")
    masks_present = bool(samples) and all(have_mask)
    for i, s in enumerate(samples):
        s.validate(record=f"record {i}")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<HIB", VERSION, len(samples), 1 if masks_present else 0)
    for s in samples:
        out += struct.pack("<IB", s.patient_id, s.label)
        out += s.image.astype("<f4").tobytes()
        if masks_present:
            out += s.mask.astype(np.uint8).tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(out)
    os.replace(tmp, path)


def load(path: str) -> list[Sample]:
    """Read and validate a BTDS file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a BTDS file (magic {raw[:4]!r})")
    if len(raw) < 11:
        raise TruncatedFileError(f"{path}: header incomplete", len(raw))
    version, count, mask_flag = struct.unpack_from("<HIB", raw, 4)
    if version != VERSION:
        raise FormatVersionError(f"{path}: BTDS version {version}, supported: {VERSION}")
    if mask_flag not in (0, 1):
        raise RecordValidationError(f"{path}: mask flag {mask_flag} not 0/1")
    record_size = 4 + 1 + SIDE * SIDE * 4 + (SIDE * SIDE if mask_flag else 0)
    expected = 11 + count * record_size + 4
    if len(raw) < expected:
        raise TruncatedFileError(
            f"{path}: file holds {len(raw)} bytes, {expected} expected for {count} records",
            len(raw),
        )
    stored_crc = struct.unpack_from("<I", raw, expected - 4)[0]
    actual_crc = zlib.crc32(raw[: expected - 4])
    if stored_crc != actual_crc:
        raise ChecksumError(f"{path}: CRC32 mismatch (stored {stored_crc:#010x}, computed {actual_crc:#010x})")
    samples = []
    off = 11
    for i in range(count):
        patient_id, label = struct.unpack_from("<IB", raw, off)
        off += 5
        image = np.frombuffer(raw, dtype="<f4", count=SIDE * SIDE, offset=off).reshape(SIDE, SIDE).copy()
        off += SIDE * SIDE * 4
        mask = None
        if mask_flag:
            mask = np.frombuffer(raw, dtype=np.uint8, count=SIDE * SIDE, offset=off).reshape(SIDE, SIDE).copy()
            off += SIDE * SIDE
        samples.append(Sample(image=image, label=int(label), patient_id=int(patient_id), mask=mask)
                       .validate(record=f"record {i}"))
    return samples


def load_dataset(path: str, seed: int, fractions: tuple[float, float, float] = DEFAULT_FRACTIONS,
                 input_mode: str = "whole_brain") -> Dataset:
    return Dataset(samples=load(path), seed=seed, fractions=fractions, input_mode=input_mode)


# ---------------------------------------------------------------------------
# synthetic dataset

def _rotated_coords(cy: float, cx: float, angle: float):
    yy, xx = np.mgrid[0:SIDE, 0:SIDE].astype(np.float64)
    dy = yy - cy
    dx = xx - cx
    ca, sa = np.cos(angle), np.sin(angle)
    return ca * dy + sa * dx, -sa * dy + ca * dx


def _shape_mask(label: int, cy: float, cx: float, a: float, b: float, angle: float) -> np.ndarray:
    u, w = _rotated_coords(cy, cx, angle)
    if label == 1:      # filled ellipse
        region = (u / b) ** 2 + (w / a) ** 2 <= 1.0
    elif label == 2:    # ring
        r2 = (u / b) ** 2 + (w / a) ** 2
        region = (r2 <= 1.0) & (r2 >= 0.45)
    else:               # two crossing bars
        bar1 = (np.abs(u) <= 0.30 * b) & (np.abs(w) <= a)
        bar2 = (np.abs(w) <= 0.30 * b) & (np.abs(u) <= a)
        region = bar1 | bar2
    return region.astype(np.uint8)


def synth_generate(seed: int, n_per_class: int) -> list[Sample]:
    """Deterministic synthetic stand-in for the clinical slices.

    Three visually distinct lesion shapes (filled ellipse, ring, crossing
    bars) on a dim circular background, with per-patient geometry, small
    per-slice jitter, and additive noise. Every patient contributes two
    slices of one class; masks are the exact shape supports.
    """
    if n_per_class < 1:
        raise ConfigError(f"n_per_class must be >= 1, got {n_per_class}")
    rng = make_rng(seed, "synth")
    yy, xx = np.mgrid[0:SIDE, 0:SIDE].astype(np.float64)
    brain = ((yy - 31.5) ** 2 + (xx - 31.5) ** 2 <= 27.0**2).astype(np.float64)
    slices_per_patient = 2
    samples: list[Sample] = []
    next_pid = 1000
    for label in (1, 2, 3):
        remaining = n_per_class
        while remaining > 0:
            take = min(slices_per_patient, remaining)
            cy = rng.uniform(24.0, 40.0)
            cx = rng.uniform(24.0, 40.0)
            a = rng.uniform(9.0, 15.0)
            b = rng.uniform(7.0, 12.0)
            angle = rng.uniform(0.0, np.pi)
            for _ in range(take):
                jcy = cy + rng.uniform(-1.5, 1.5)
                jcx = cx + rng.uniform(-1.5, 1.5)
                ja = max(6.0, a + rng.uniform(-0.75, 0.75))
                jb = max(5.0, b + rng.uniform(-0.75, 0.75))
                jangle = angle + rng.uniform(-0.15, 0.15)
                mask = _shape_mask(label, jcy, jcx, ja, jb, jangle)
                image = 0.15 * brain + 0.80 * mask
                image += rng.normal(0.0, 0.02, size=(SIDE, SIDE))
                image = np.clip(image, 0.0, 1.0).astype(np.float32)
                samples.append(Sample(image=image, label=label, patient_id=next_pid, mask=mask))
            next_pid += 1
            remaining -= take
    return samples


def make_synth_dataset(seed: int, n_per_class: int,
                       fractions: tuple[float, float, float] = DEFAULT_FRACTIONS,
                       input_mode: str = "whole_brain") -> Dataset:
    return Dataset(samples=synth_generate(seed, n_per_class), seed=seed,
                   fractions=fractions, input_mode=input_mode)
