"""Deterministic random number generation.

All randomness in the package flows through PCG64 generators derived from a
single 64-bit seed via numpy's SeedSequence. Distinct purposes (weight init,
shuffling, dataset synthesis, splitting) get independent streams keyed by a
label, so adding a consumer never perturbs existing streams. Same seed and
label give the same stream on every platform.
"""

from __future__ import annotations

import zlib

import numpy as np

ALGORITHM = "pcg64"


def make_rng(seed: int, stream: str = "") -> np.random.Generator:
    """Return a Generator for `stream` derived deterministically from `seed`."""
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    key = () if stream == "" else (zlib.crc32(stream.encode("utf-8")),)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def rng_state(gen: np.random.Generator) -> dict:
    """Serializable snapshot of a generator (JSON-safe: plain ints and strings)."""
    return gen.bit_generator.state


def restore_rng(state: dict) -> np.random.Generator:
    """Rebuild a generator from a snapshot produced by rng_state."""
    if state.get("bit_generator") != "PCG64":
        raise ValueError(f"unsupported generator state: {state.get('bit_generator')!r}")
    bg = np.random.PCG64()
    bg.state = state
    return np.random.Generator(bg)
