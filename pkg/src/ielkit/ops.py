"""Core grid operations: convolution, 2x upsampling and the 2D DFT pair.

Conventions, fixed package-wide:
  * convolution is cross-correlation (no kernel flip), odd kernels only;
  * upsampling is bilinear, align-corners-false, edge-clamped;
  * forward DFT is unnormalized, the inverse carries the 1/(H*W) factor.
"""

from __future__ import annotations

import numpy as np

from ielkit import backend
from ielkit.errors import ConfigError, ShapeError
from ielkit.grids import as_grid, as_spectrum


def _check_padding(padding: str) -> str:
    if padding not in backend.PAD_MODES:
        raise ConfigError(f"padding must be one of {backend.PAD_MODES}, got {padding!r}")
    return padding


def conv2d(input, kernel, bias, padding: str = "zero") -> np.ndarray:
    """Cross-correlate a (C,H,W) grid with a (Cout,Cin,k,k) kernel.

    Output keeps the spatial size; out-of-range taps are resolved by the
    padding mode (zero, replicate or periodic).
    """
    x = as_grid(input, "input")
    k = np.asarray(kernel, dtype=np.float64)
    b = np.asarray(bias, dtype=np.float64)
    _check_padding(padding)
    if k.ndim != 4 or k.shape[2] != k.shape[3]:
        raise ShapeError(f"kernel must be (Cout, Cin, k, k), got {k.shape}")
    if k.shape[2] % 2 == 0:
        raise ConfigError(f"kernel size must be odd, got {k.shape[2]}")
    if k.shape[1] != x.shape[0]:
        raise ShapeError(
            f"kernel expects {k.shape[1]} input channels, grid has {x.shape[0]}"
        )
    if b.shape != (k.shape[0],):
        raise ShapeError(f"bias must have shape ({k.shape[0]},), got {b.shape}")
    return backend.conv2d_fwd(np.ascontiguousarray(x), np.ascontiguousarray(k), b, padding)


def upsample2x(input) -> np.ndarray:
    """Bilinear 2x upsampling: (C,H,W) -> (C,2H,2W)."""
    x = as_grid(input, "input")
    return backend.upsample2x_fwd(np.ascontiguousarray(x))


def fft2(input) -> np.ndarray:
    """Per-channel unnormalized forward 2D DFT of a real grid."""
    x = as_grid(input, "input")
    return np.fft.fft2(x, axes=(-2, -1))


def ifft2(spectrum) -> tuple[np.ndarray, float]:
    """Per-channel normalized inverse 2D DFT.

    Returns (real part, residue) where residue is the max-abs of the
    discarded imaginary part.  The residue is diagnostic only: callers
    mixing spectra may legitimately break conjugate symmetry.
    """
    z = as_spectrum(spectrum, "spectrum")
    w = np.fft.ifft2(z, axes=(-2, -1))
    residue = float(np.abs(w.imag).max()) if w.size else 0.0
    return np.ascontiguousarray(w.real), residue


def avgpool2(input) -> np.ndarray:
    """2x2 average pooling; H and W must be even."""
    x = as_grid(input, "input")
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avgpool2 needs even H and W, got {h}x{w}")
    return x.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))
