#!/usr/bin/env python3
"""Convert the public brain-tumor MRI archive into a BTDS dataset file.

Each source file is a MATLAB v7.3 (HDF5) container holding a struct with a
512x512 image, an integer label (1 meningioma, 2 glioma, 3 pituitary), a
binary tumor mask and a patient id. Images and masks are downsampled to
64x64 by 8x8 block means; images are then min-max normalized to [0, 1] and
masks re-binarized at 0.5, so every record satisfies the dataset invariants
of the training package.

Files that cannot be read (missing fields, wrong shapes, labels outside
{1,2,3}) are logged with their filename and skipped; the conversion fails
only when no valid record remains.

Usage:
    convert.py INPUT_DIR OUTPUT.btds [--fields image=cjdata/image,...]
               [--seed-for-ordering N]
"""

from __future__ import annotations

import argparse
import logging
import os
import struct
import sys
import zlib
from dataclasses import dataclass
from pathlib import Path

import h5py
import numpy as np

log = logging.getLogger("btds-convert")

SIDE = 64
SOURCE_SIDE = 512
MAGIC = b"BTDS"
VERSION = 1
LABEL_NAMES = {1: "meningioma", 2: "glioma", 3: "pituitary"}

# Field paths inside each HDF5 file; --fields overrides individual entries.
DEFAULT_FIELDS = {
    "image": "cjdata/image",
    "label": "cjdata/label",
    "mask": "cjdata/tumorMask",
    "pid": "cjdata/PID",
}


class ConvertError(Exception):
    """A problem with one source file; the record is skipped."""


@dataclass
class Record:
    patient_id: int
    label: int
    image: np.ndarray  # (64, 64) float32 in [0, 1]
    mask: np.ndarray   # (64, 64) uint8 in {0, 1}


def parse_fields(text: str) -> dict:
    """Merge 'key=path,key=path' overrides into the default field map."""
    fields = dict(DEFAULT_FIELDS)
    if not text:
        return fields
    for part in text.split(","):
        key, _, path = part.partition("=")
        key = key.strip()
        if key not in fields or not path:
            raise SystemExit(f"bad --fields entry {part!r}: expected one of "
                             f"{sorted(fields)} '=' an HDF5 path")
        fields[key] = path.strip()
    return fields


def _dataset(handle: h5py.File, path: str, filename: str) -> np.ndarray:
    node = handle.get(path)
    if node is None or not isinstance(node, h5py.Dataset):
        raise ConvertError(f"{filename}: missing field {path!r}")
    return np.asarray(node)


def _as_int(value: np.ndarray, what: str, filename: str) -> int:
    flat = np.asarray(value).reshape(-1)
    if flat.size != 1:
        raise ConvertError(f"{filename}: {what} is not a scalar (shape {value.shape})")
    scalar = float(flat[0])
    if scalar != int(scalar):
        raise ConvertError(f"{filename}: {what} {scalar!r} is not an integer")
    return int(scalar)


def _patient_id(value: np.ndarray, filename: str) -> int:
    """Decode the patient id, which MATLAB stores as a character-code array."""
    flat = np.asarray(value).reshape(-1)
    if flat.size == 0:
        raise ConvertError(f"{filename}: empty patient id")
    if flat.size == 1 and not np.issubdtype(flat.dtype, np.character):
        pid = _as_int(flat, "patient id", filename)
    else:
        if np.issubdtype(flat.dtype, np.character):
            text = b"".join(flat.tolist()).decode("ascii", "replace")
        else:
            text = "".join(chr(int(c)) for c in flat)
        text = text.strip().strip("\x00")
        # ids are usually numeric strings; anything else gets a stable hash
        pid = int(text) if text.isdigit() else zlib.crc32(text.encode())
    if not 0 <= pid < 2**32:
        raise ConvertError(f"{filename}: patient id {pid} does not fit in 32 bits")
    return pid


def block_mean(plane: np.ndarray) -> np.ndarray:
    factor = SOURCE_SIDE // SIDE
    return plane.reshape(SIDE, factor, SIDE, factor).mean(axis=(1, 3))


def read_record(path: Path, fields: dict) -> Record:
    """Read one archive file and produce a downsampled, normalized record."""
    filename = path.name
    try:
        handle = h5py.File(path, "r")
    except OSError as exc:
        raise ConvertError(f"{filename}: not a readable HDF5 file ({exc})") from exc
    with handle:
        label = _as_int(_dataset(handle, fields["label"], filename), "label", filename)
        if label not in LABEL_NAMES:
            raise ConvertError(f"{filename}: label {label} outside {{1,2,3}}")
        pid = _patient_id(_dataset(handle, fields["pid"], filename), filename)
        # MATLAB arrays are column-major; transpose restores row-major pixels
        image = _dataset(handle, fields["image"], filename).astype(np.float64).T
        mask = _dataset(handle, fields["mask"], filename).astype(np.float64).T
    for what, plane in (("image", image), ("mask", mask)):
        if plane.shape != (SOURCE_SIDE, SOURCE_SIDE):
            raise ConvertError(f"{filename}: {what} shape {plane.shape} is not "
                               f"({SOURCE_SIDE}, {SOURCE_SIDE})")
    small = block_mean(image)
    lo, hi = float(small.min()), float(small.max())
    if hi == lo:
        small = np.zeros_like(small)
    else:
        small = (small - lo) / (hi - lo)
    mask_small = (block_mean(mask) >= 0.5).astype(np.uint8)
    return Record(pid, label, small.astype(np.float32), mask_small)


def write_btds(path: str, records: list[Record]) -> None:
    """Write records in the canonical little-endian dataset layout."""
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<HIB", VERSION, len(records), 1)  # masks always present
    for rec in records:
        blob += struct.pack("<IB", rec.patient_id, rec.label)
        blob += rec.image.astype("<f4").tobytes()
        blob += rec.mask.astype(np.uint8).tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(bytes(blob))
    os.replace(tmp, path)


def convert(input_dir: str, output: str, fields: dict,
            seed_for_ordering: int | None = None) -> int:
    paths = sorted(Path(input_dir).glob("*.mat"))
    if not paths:
        log.error("no .mat files in %s; nothing written", input_dir)
        return 1
    if seed_for_ordering is not None:
        order = np.random.default_rng(seed_for_ordering).permutation(len(paths))
        paths = [paths[i] for i in order]

    records: list[Record] = []
    skipped = 0
    for path in paths:
        try:
            records.append(read_record(path, fields))
        except ConvertError as exc:
            log.warning("%s", exc)
            skipped += 1
    if not records:
        log.error("all %d files were rejected; nothing written", skipped)
        return 1

    write_btds(output, records)
    per_label = {name: sum(1 for r in records if r.label == lab)
                 for lab, name in LABEL_NAMES.items()}
    patients = len({r.patient_id for r in records})
    counts = ", ".join(f"{name} {n}" for name, n in per_label.items())
    print(f"wrote {output}: {len(records)} records ({counts}) "
          f"from {patients} patients; skipped {skipped} files")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Convert MATLAB v7.3 brain-tumor archive files to a BTDS dataset.")
    parser.add_argument("input_dir", help="directory of per-image .mat files")
    parser.add_argument("output", help="BTDS file to write")
    parser.add_argument("--fields", type=parse_fields, default=dict(DEFAULT_FIELDS),
                        metavar="K=PATH,...",
                        help="override HDF5 paths for image/label/mask/pid")
    parser.add_argument("--seed-for-ordering", type=int, default=None,
                        help="shuffle record order with this seed "
                             "(default: sorted by filename)")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    return convert(args.input_dir, args.output, args.fields, args.seed_for_ordering)


if __name__ == "__main__":
    raise SystemExit(main())
