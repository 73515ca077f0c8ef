"""Shared numeric helpers."""

from __future__ import annotations

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_INV_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
_LOG2 = float(np.log(2.0))


class ConvergenceError(RuntimeError):
    """A numerical routine failed to converge."""


def logcosh(t):
    """Overflow-safe log cosh: |t| + log1p(exp(-2|t|)) - log 2."""
    a = np.abs(t)
    return a + np.log1p(np.exp(-2.0 * a)) - np.log(2.0)


def _logcosh_offsets_mean_py(y, beta, c):
    out = np.empty(y.shape[0])
    for k in range(y.shape[0]):
        s = 0.0
        for i in range(c.shape[0]):
            a = abs(beta * y[k] + c[i])
            s += a + np.log1p(np.exp(-2.0 * a))
        out[k] = s / c.shape[0] - _LOG2
    return out


if numba is not None:
    _logcosh_offsets_mean_jit = numba.njit(cache=True)(_logcosh_offsets_mean_py)
else:  # pragma: no cover
    _logcosh_offsets_mean_jit = None


def logcosh_offsets_mean(y: np.ndarray, beta: float, c: np.ndarray) -> np.ndarray:
    """mean_i logcosh(beta * y_k + c_i) for every y_k, without the big matrix."""
    y = np.ascontiguousarray(y, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    if _logcosh_offsets_mean_jit is not None:
        return _logcosh_offsets_mean_jit(y, float(beta), c)
    out = np.empty(y.shape[0])
    chunk = max(1, int(4e7) // max(c.shape[0], 1))
    for lo in range(0, y.shape[0], chunk):
        g = y[lo : lo + chunk]
        out[lo : lo + chunk] = np.mean(logcosh(beta * g[:, None] + c[None, :]), axis=1)
    return out


def golden_min(f, lo: float, hi: float, xtol: float = 1e-10) -> float:
    """Golden-section minimizer of a unimodal scalar function on [lo, hi]."""
    a, b = float(lo), float(hi)
    c = b - _INV_GOLDEN * (b - a)
    d = a + _INV_GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > xtol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)
