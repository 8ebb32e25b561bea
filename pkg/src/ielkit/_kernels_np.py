"""Numpy implementations of the hot kernels.

Same function surface as the compiled extension `_kernels_c`; one of the
two is selected by `ielkit.backend` at import time.  All functions take
and return C-contiguous float64 arrays and implement exact discrete
cross-correlation / stencils under three padding modes.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PAD_MODES = ("zero", "replicate", "periodic")
_NP_PAD = {"zero": "constant", "replicate": "edge", "periodic": "wrap"}


def _pad(x: np.ndarray, p: int, mode: str) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (p, p), (p, p)), mode=_NP_PAD[mode])


def _fold_axis(g: np.ndarray, p: int, mode: str, axis: int) -> np.ndarray:
    """Adjoint of padding a single axis by p on both sides."""
    n = g.shape[axis] - 2 * p
    sl = [slice(None)] * g.ndim

    def take(a, b):
        sl2 = list(sl)
        sl2[axis] = slice(a, b)
        return g[tuple(sl2)]

    core = take(p, p + n).copy()
    if mode == "zero":
        return core
    lead, tail = take(0, p), take(p + n, 2 * p + n)
    csl = [slice(None)] * core.ndim
    if mode == "replicate":
        csl[axis] = 0
        core[tuple(csl)] += lead.sum(axis=axis)
        csl[axis] = n - 1
        core[tuple(csl)] += tail.sum(axis=axis)
    else:  # periodic
        csl[axis] = slice(n - p, n)
        core[tuple(csl)] += lead
        csl[axis] = slice(0, p)
        core[tuple(csl)] += tail
    return core


def _fold(g: np.ndarray, p: int, mode: str) -> np.ndarray:
    """Adjoint of `_pad` (fold padded-border gradients back into the core)."""
    if p == 0:
        return g
    return _fold_axis(_fold_axis(g, p, mode, axis=2), p, mode, axis=1)


def conv2d_fwd(x: np.ndarray, k: np.ndarray, b: np.ndarray, mode: str) -> np.ndarray:
    kk = k.shape[-1]
    p = kk // 2
    win = sliding_window_view(_pad(x, p, mode), (kk, kk), axis=(1, 2))
    out = np.einsum("oiuv,ihwuv->ohw", k, win, optimize=True)
    out += b[:, None, None]
    return np.ascontiguousarray(out)


def conv2d_bwd_input(gy: np.ndarray, k: np.ndarray, mode: str) -> np.ndarray:
    cin = k.shape[1]
    kk = k.shape[-1]
    p = kk // 2
    _, h, w = gy.shape
    gp = np.zeros((cin, h + 2 * p, w + 2 * p))
    for u in range(kk):
        for v in range(kk):
            gp[:, u : u + h, v : v + w] += np.einsum("oi,ohw->ihw", k[:, :, u, v], gy)
    return np.ascontiguousarray(_fold(gp, p, mode))


def conv2d_bwd_kernel(gy: np.ndarray, x: np.ndarray, kk: int, mode: str):
    p = kk // 2
    win = sliding_window_view(_pad(x, p, mode), (kk, kk), axis=(1, 2))
    gk = np.einsum("ohw,ihwuv->oiuv", gy, win, optimize=True)
    gb = gy.sum(axis=(1, 2))
    return np.ascontiguousarray(gk), np.ascontiguousarray(gb)


def _lin_weights(n: int) -> np.ndarray:
    """Row-interpolation matrix (2n x n) for 2x bilinear upsampling.

    Output i samples the input at (i + 0.5)/2 - 0.5, edge-clamped
    (align-corners-false convention).
    """
    src = (np.arange(2 * n) + 0.5) / 2.0 - 0.5
    i0 = np.floor(src).astype(np.intp)
    t = src - i0
    lo = np.clip(i0, 0, n - 1)
    hi = np.clip(i0 + 1, 0, n - 1)
    r = np.zeros((2 * n, n))
    np.add.at(r, (np.arange(2 * n), lo), 1.0 - t)
    np.add.at(r, (np.arange(2 * n), hi), t)
    return r


def upsample2x_fwd(x: np.ndarray) -> np.ndarray:
    _, h, w = x.shape
    rh, rw = _lin_weights(h), _lin_weights(w)
    return np.ascontiguousarray(rh @ x @ rw.T)


def upsample2x_bwd(gy: np.ndarray) -> np.ndarray:
    _, h2, w2 = gy.shape
    rh, rw = _lin_weights(h2 // 2), _lin_weights(w2 // 2)
    return np.ascontiguousarray(rh.T @ gy @ rw)


def laplacian_fwd(x: np.ndarray, mode: str) -> np.ndarray:
    xp = _pad(x, 1, mode)
    out = (
        xp[:, :-2, 1:-1]
        + xp[:, 2:, 1:-1]
        + xp[:, 1:-1, :-2]
        + xp[:, 1:-1, 2:]
        - 4.0 * x
    )
    return np.ascontiguousarray(out)


def laplacian_adj(gy: np.ndarray, mode: str) -> np.ndarray:
    c, h, w = gy.shape
    gp = np.zeros((c, h + 2, w + 2))
    gp[:, :-2, 1:-1] += gy
    gp[:, 2:, 1:-1] += gy
    gp[:, 1:-1, :-2] += gy
    gp[:, 1:-1, 2:] += gy
    return np.ascontiguousarray(_fold(gp, 1, mode) - 4.0 * gy)
