"""Hot data-movement kernels with a compiled core and a NumPy fallback.

Three kernels dominate the non-GEMM time of training: patch extraction
for the 2D and 1D convolutions (im2col; the matching GEMM then runs in
BLAS) and the 3x3 zero-padded box sum that implements the grid graph
aggregation. Each has a compiled Cython implementation and a pure-NumPy
one; both produce bit-identical outputs (same gather, same floating-point
summation order), so backend choice never changes results.

Backend selection happens at import: the compiled extension is used when
importable, unless the PARKPREF_BACKEND environment variable ("c",
"python", or "auto") says otherwise.
"""

from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

try:
    from parkpref import _ckernels
except ImportError:
    _ckernels = None


def _check_float(x: np.ndarray) -> np.ndarray:
    if x.dtype not in (np.float32, np.float64):
        raise TypeError(f"kernel inputs must be float32/float64, got {x.dtype}")
    return np.ascontiguousarray(x)


def im2col2d_py(x: np.ndarray, k: int) -> np.ndarray:
    """Patch matrix of a zero-padded 2D grid batch.

    x: (B, H, W, C) -> (B, H, W, k*k*C); out[b, y, x_, (ty*k+tx)*C + c] is
    x[b, y+ty-p, x_+tx-p, c] with p = k//2 (zero outside the grid).
    """
    if k < 1 or k % 2 == 0:
        raise ValueError(f"kernel size must be odd and positive, got {k}")
    x = _check_float(x)
    b, h, w, c = x.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))  # (B, H, W, C, k, k)
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(b, h, w, k * k * c)


def im2col1d_py(x: np.ndarray, k: int) -> np.ndarray:
    """Patch matrix of a zero-padded sequence batch.

    x: (B, L, C) -> (B, L, k*C); out[b, i, t*C + c] = x[b, i+t-p, c].
    """
    if k < 1 or k % 2 == 0:
        raise ValueError(f"kernel size must be odd and positive, got {k}")
    x = _check_float(x)
    b, n, c = x.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (p, p), (0, 0)))
    win = sliding_window_view(xp, k, axis=1)  # (B, L, C, k)
    return np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(b, n, k * c)


def boxsum3x3_py(x: np.ndarray) -> np.ndarray:
    """Zero-padded 3x3 neighborhood sum over the leading two axes.

    x: (H, W, M) -> (H, W, M). Separable: columns first as
    (left + mid) + right, then rows as (up + mid) + down — the compiled
    kernel uses the identical association, keeping outputs bit-equal.
    """
    x = _check_float(x)
    xp = np.pad(x, ((0, 0), (1, 1), (0, 0)))
    tmp = (xp[:, :-2] + xp[:, 1:-1]) + xp[:, 2:]
    tp = np.pad(tmp, ((1, 1), (0, 0), (0, 0)))
    return (tp[:-2] + tp[1:-1]) + tp[2:]


def _im2col2d_c(x: np.ndarray, k: int) -> np.ndarray:
    if k < 1 or k % 2 == 0:
        raise ValueError(f"kernel size must be odd and positive, got {k}")
    return _ckernels.im2col2d(_check_float(x), k)


def _im2col1d_c(x: np.ndarray, k: int) -> np.ndarray:
    if k < 1 or k % 2 == 0:
        raise ValueError(f"kernel size must be odd and positive, got {k}")
    return _ckernels.im2col1d(_check_float(x), k)


def _boxsum3x3_c(x: np.ndarray) -> np.ndarray:
    return _ckernels.boxsum3x3(_check_float(x))


IMPLEMENTATIONS = {
    "python": {
        "im2col2d": im2col2d_py,
        "im2col1d": im2col1d_py,
        "boxsum3x3": boxsum3x3_py,
    },
}
if _ckernels is not None:
    IMPLEMENTATIONS["c"] = {
        "im2col2d": _im2col2d_c,
        "im2col1d": _im2col1d_c,
        "boxsum3x3": _boxsum3x3_c,
    }


def _initial_backend() -> str:
    requested = os.environ.get("PARKPREF_BACKEND", "auto").lower()
    if requested not in ("auto", "c", "python"):
        raise ValueError(
            f"PARKPREF_BACKEND must be auto, c, or python, got {requested!r}"
        )
    if requested == "auto":
        return "c" if _ckernels is not None else "python"
    if requested == "c" and _ckernels is None:
        raise ImportError(
            "PARKPREF_BACKEND=c but the compiled extension parkpref._ckernels "
            "is not importable; build it or use PARKPREF_BACKEND=python"
        )
    return requested


_backend = _initial_backend()


def get_backend() -> str:
    """Active kernel backend: 'c' (compiled) or 'python' (NumPy)."""
    return _backend


def set_backend(name: str):
    """Switch backends at runtime (used by tests and the benchmark)."""
    global _backend
    if name not in IMPLEMENTATIONS:
        raise ValueError(
            f"backend {name!r} not available; have {sorted(IMPLEMENTATIONS)}"
        )
    _backend = name


def available_backends() -> list[str]:
    return sorted(IMPLEMENTATIONS)


def im2col2d(x: np.ndarray, k: int) -> np.ndarray:
    return IMPLEMENTATIONS[_backend]["im2col2d"](x, k)


def im2col1d(x: np.ndarray, k: int) -> np.ndarray:
    return IMPLEMENTATIONS[_backend]["im2col1d"](x, k)


def boxsum3x3(x: np.ndarray) -> np.ndarray:
    return IMPLEMENTATIONS[_backend]["boxsum3x3"](x)
