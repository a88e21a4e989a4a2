"""Hot numeric kernels.

Each kernel exists twice: a numba ``@njit`` version and a pure-numpy
version. The public names bound at import time point to the numba
versions unless numba is missing or ``MOTIONCOPY_DISABLE_NUMBA`` is set
to a truthy value, in which case the numpy versions are used. Both
variants stay importable under ``*_numpy`` / ``*_numba`` so the test
suite and the benchmark can compare them directly.
"""

import os

import numpy as np

_FALSY = {"", "0", "false", "no", "off"}


def _numba_disabled():
    return os.environ.get("MOTIONCOPY_DISABLE_NUMBA", "").strip().lower() not in _FALSY


try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda func: func


USE_NUMBA = HAVE_NUMBA and not _numba_disabled()


# -- pairwise L1 ---------------------------------------------------------


def pairwise_l1_numpy(x):
    x = np.asarray(x, dtype=np.float64)
    return np.abs(x[:, None, :] - x[None, :, :]).sum(axis=-1)


@njit(cache=True)
def pairwise_l1_numba(x):
    m, d = x.shape
    out = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            s = 0.0
            for k in range(d):
                s += abs(x[i, k] - x[j, k])
            out[i, j] = s
            out[j, i] = s
    return out


# -- Sinkhorn scaling ----------------------------------------------------


def sinkhorn_scaling_numpy(kernel, iters, floor):
    kernel = np.asarray(kernel, dtype=np.float64)
    b = np.ones(kernel.shape[1])
    a = np.ones(kernel.shape[0])
    for _ in range(iters):
        a = 1.0 / np.maximum(kernel @ b, floor)
        b = 1.0 / np.maximum(kernel.T @ a, floor)
    return a, b


@njit(cache=True)
def sinkhorn_scaling_numba(kernel, iters, floor):
    n, m = kernel.shape
    a = np.ones(n)
    b = np.ones(m)
    for _ in range(iters):
        for i in range(n):
            s = 0.0
            for j in range(m):
                s += kernel[i, j] * b[j]
            a[i] = 1.0 / max(s, floor)
        for j in range(m):
            s = 0.0
            for i in range(n):
                s += kernel[i, j] * a[i]
            b[j] = 1.0 / max(s, floor)
    return a, b


# -- mask fusion ---------------------------------------------------------


def fuse_numpy(fg, bg, mask):
    fg = fg.astype(np.float64)
    bg = bg.astype(np.float64)
    out = bg + mask[..., None] * (fg - bg)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


@njit(cache=True)
def fuse_numba(fg, bg, mask):
    h, w, c = fg.shape
    out = np.empty((h, w, c), dtype=np.uint8)
    for y in range(h):
        for x in range(w):
            m = mask[y, x]
            for ch in range(c):
                b = float(bg[y, x, ch])
                v = np.rint(b + m * (float(fg[y, x, ch]) - b))
                if v < 0.0:
                    v = 0.0
                elif v > 255.0:
                    v = 255.0
                out[y, x, ch] = np.uint8(v)
    return out


# -- saturating residual add ---------------------------------------------


def saturating_add_numpy(base, residual):
    out = base.astype(np.int32) + residual.astype(np.int32)
    return np.clip(out, 0, 255).astype(np.uint8)


@njit(cache=True)
def saturating_add_numba(base, residual):
    h, w, c = base.shape
    out = np.empty((h, w, c), dtype=np.uint8)
    for y in range(h):
        for x in range(w):
            for ch in range(c):
                v = np.int32(base[y, x, ch]) + np.int32(residual[y, x, ch])
                if v < 0:
                    v = 0
                elif v > 255:
                    v = 255
                out[y, x, ch] = np.uint8(v)
    return out


if USE_NUMBA:
    pairwise_l1 = pairwise_l1_numba
    sinkhorn_scaling = sinkhorn_scaling_numba
    fuse = fuse_numba
    saturating_add = saturating_add_numba
else:
    pairwise_l1 = pairwise_l1_numpy
    sinkhorn_scaling = sinkhorn_scaling_numpy
    fuse = fuse_numpy
    saturating_add = saturating_add_numpy


def backend():
    """Name of the active kernel backend, ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"
