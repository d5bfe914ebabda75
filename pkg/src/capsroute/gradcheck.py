"""Finite-difference gradient verification.

Central differences with h=1e-5 at 64-bit are the ground truth here. The
error measure is elementwise |analytic - numeric| / max(1, |numeric|),
reduced by max, so tiny gradients are judged on absolute error and large
ones on relative error. Individual tensor ops are expected to agree within
1e-6; a full model end to end (with its unrolled routing loop and deep
composition) within 1e-4.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .errors import ConfigError

DEFAULT_STEP = 1e-5
OP_TOLERANCE = 1e-6
MODEL_TOLERANCE = 1e-4


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max over elements of |analytic - numeric| / max(1, |numeric|)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.shape != n.shape:
        raise ConfigError(f"rel_error: shapes {a.shape} vs {n.shape}")
    if a.size == 0:
        return 0.0
    return float((np.abs(a - n) / np.maximum(1.0, np.abs(n))).max())


def fd_grad(f: Callable[[], float], x: np.ndarray, h: float = DEFAULT_STEP,
            indices: Optional[Iterable[int]] = None) -> np.ndarray:
    """Central-difference gradient of f with respect to x, perturbed in place.

    `f` takes no arguments and must read the exact array `x` (through a
    closure), so the temporary in-place perturbations are visible to it.
    With `indices` (flat), only those entries are probed and a 1-d array of
    their derivatives is returned; otherwise the full gradient, shaped like
    x, is returned.
    """
    if x.dtype != np.float64:
        raise ConfigError(f"finite differences need float64 tensors, got {x.dtype}")
    flat = x.reshape(-1)
    if not np.shares_memory(flat, x):
        raise ConfigError("fd_grad needs a contiguous tensor (flat view unavailable)")
    idx_list = range(flat.size) if indices is None else list(indices)
    out = np.empty(len(idx_list) if indices is not None else flat.size, dtype=np.float64)
    for pos, i in enumerate(idx_list):
        saved = flat[i]
        flat[i] = saved + h
        f_plus = f()
        flat[i] = saved - h
        f_minus = f()
        flat[i] = saved
        out[pos] = (f_plus - f_minus) / (2.0 * h)
    return out if indices is not None else out.reshape(x.shape)


def check_op_grad(f: Callable[[], float], x: np.ndarray, analytic: np.ndarray,
                  h: float = DEFAULT_STEP) -> float:
    """Error of an op's analytic gradient against central differences."""
    return rel_error(analytic, fd_grad(f, x, h))


@dataclass
class GroupReport:
    group: str
    rel_err: float
    tolerance: float
    checked: int          # number of entries probed
    size: int             # total entries in the group

    @property
    def ok(self) -> bool:
        return self.rel_err < self.tolerance

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return (f"{status} {self.group}: rel_err={self.rel_err:.3e} "
                f"tol={self.tolerance:.0e} ({self.checked}/{self.size} entries)")


def check_model(model, images: np.ndarray, labels: np.ndarray,
                tolerance: float = MODEL_TOLERANCE, h: float = DEFAULT_STEP,
                max_entries: Optional[int] = None,
                rng: Optional[np.random.Generator] = None,
                corrupt_group: Optional[str] = None) -> list[GroupReport]:
    """Check every parameter group's gradient of the total training loss.

    The model must hold float64 parameters (and get float64 inputs). With
    `max_entries`, groups larger than that are probed at a seeded random
    subset of entries. `corrupt_group` deliberately breaks one group's
    analytic gradient before comparison; it exists so tests can confirm a
    wrong backward is caught and named.
    """
    names = model.param_groups()
    if corrupt_group is not None and corrupt_group not in names:
        raise ConfigError(f"corrupt_group {corrupt_group!r} is not a parameter group")
    _, grads = model.loss_and_grads(images, labels)

    def loss() -> float:
        metrics, _ = model.loss_and_grads(images, labels)
        return metrics["total_loss"]

    reports = []
    for group in names:
        param = model.params[group]
        analytic = np.asarray(grads[group], dtype=np.float64).reshape(-1)
        if corrupt_group == group:
            analytic = analytic + 1.0
        n = param.size
        if max_entries is not None and n > max_entries:
            if rng is None:
                raise ConfigError("max_entries sampling needs an rng")
            idx = np.sort(rng.choice(n, size=max_entries, replace=False))
            numeric = fd_grad(loss, param, h, indices=idx)
            err = rel_error(analytic[idx], numeric)
            checked = int(max_entries)
        else:
            numeric = fd_grad(loss, param, h)
            err = rel_error(analytic, numeric.reshape(-1))
            checked = n
        reports.append(GroupReport(group, err, tolerance, checked, n))
    return reports


def format_reports(reports: list[GroupReport]) -> str:
    lines = [r.line() for r in reports]
    failed = [r.group for r in reports if not r.ok]
    if failed:
        lines.append(f"FAILED groups: {', '.join(failed)}")
    else:
        lines.append(f"all {len(reports)} parameter groups pass")
    return "\n".join(lines)
