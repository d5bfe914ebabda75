"""Kernel backend selection.

The compiled Cython kernels are preferred when the extension built; the
numpy fallback is used otherwise. CAPSROUT_BACKEND=python|compiled forces a
choice (forcing "compiled" fails loudly if the extension is missing).

Both backends are bit-compatible; see kernels_py for the contract.
"""

from __future__ import annotations

import os

from . import kernels_py

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

AVAILABLE = ("python",) if _ckernels is None else ("python", "compiled")

# Bound at import; select() rebinds (used by tests and benchmarks).
BACKEND = ""
im2col = None
col2im = None
maxpool2_forward = None
maxpool2_backward = None


def _module(name: str):
    if name == "python":
        return kernels_py
    if name == "compiled":
        if _ckernels is None:
            raise ImportError(
                "compiled kernels requested via CAPSROUT_BACKEND but the "
                "extension is not built; install with the Cython extension "
                "or set CAPSROUT_BACKEND=python"
            )
        return _ckernels
    raise ValueError(f"unknown backend {name!r} (expected 'python' or 'compiled')")


def select(name: str) -> str:
    """Switch the active kernel backend. Returns the selected name."""
    global BACKEND, im2col, col2im, maxpool2_forward, maxpool2_backward
    mod = _module(name)
    BACKEND = name
    im2col = mod.im2col
    col2im = mod.col2im
    maxpool2_forward = mod.maxpool2_forward
    maxpool2_backward = mod.maxpool2_backward
    return name


def _initial_choice() -> str:
    forced = os.environ.get("CAPSROUT_BACKEND", "").strip().lower()
    if forced in ("python", "py"):
        return "python"
    if forced in ("compiled", "c", "cython"):
        return "compiled"
    if forced:
        raise ValueError(f"CAPSROUT_BACKEND={forced!r} not recognized")
    return "compiled" if _ckernels is not None else "python"


select(_initial_choice())
