"""Inverse evolution layers: reversed heat-equation steps that amplify
high-frequency structure.

One step maps u to u - tau * Lap(u) with the 5-point stencil.  Under
periodic boundaries every Fourier mode (k, l) is multiplied by
1 + tau * s_kl, s_kl = 4 sin^2(pi k / H) + 4 sin^2(pi l / W), so no mode
shrinks and the highest modes grow fastest; a depth-D stack raises the
multiplier to the D-th power.  The layers live on the training path
only; inference never applies them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ielkit import autodiff, backend
from ielkit.errors import ConfigError
from ielkit.grids import as_grid

BOUNDARY_MODES = ("replicate", "periodic")


@dataclass(frozen=True)
class IELConfig:
    """One inverse-evolution stack: depth, step size and boundary handling."""

    depth: int = 5
    tau: float = 0.1
    boundary: str = "replicate"

    def __post_init__(self):
        if not (0 <= self.depth <= 64):
            raise ConfigError(f"depth must be in [0, 64], got {self.depth}")
        if not (0.0 < self.tau <= 0.5):
            raise ConfigError(f"tau must be in (0, 0.5], got {self.tau}")
        if self.boundary not in BOUNDARY_MODES:
            raise ConfigError(f"boundary must be one of {BOUNDARY_MODES}, got {self.boundary!r}")


def laplacian(input, boundary: str = "replicate") -> np.ndarray:
    """Per-channel 5-point stencil [[0,1,0],[1,-4,1],[0,1,0]]."""
    if boundary not in BOUNDARY_MODES:
        raise ConfigError(f"boundary must be one of {BOUNDARY_MODES}, got {boundary!r}")
    x = as_grid(input, "input")
    return backend.laplacian_fwd(np.ascontiguousarray(x), boundary)


def iel_step(input, tau: float, boundary: str = "replicate") -> np.ndarray:
    """One inverse-evolution step u - tau * Lap(u)."""
    if tau <= 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    x = as_grid(input, "input")
    return x - tau * laplacian(x, boundary)


def iel_apply(input, cfg: IELConfig) -> np.ndarray:
    """`cfg.depth` inverse-evolution steps; depth 0 is the identity."""
    x = as_grid(input, "input")
    for _ in range(cfg.depth):
        x = x - cfg.tau * backend.laplacian_fwd(np.ascontiguousarray(x), cfg.boundary)
    return x


def spectral_multiplier(h: int, w: int, cfg: IELConfig) -> np.ndarray:
    """(H, W) per-mode gain (1 + tau * s_kl)^depth of the periodic stack."""
    k = np.arange(h)[:, None]
    l = np.arange(w)[None, :]
    s = 4.0 * np.sin(np.pi * k / h) ** 2 + 4.0 * np.sin(np.pi * l / w) ** 2
    return (1.0 + cfg.tau * s) ** cfg.depth


def iel_spectral_oracle(input, cfg: IELConfig) -> np.ndarray:
    """Fourier-domain twin of `iel_apply`; periodic boundary only."""
    if cfg.boundary != "periodic":
        raise ConfigError("the spectral oracle supports the periodic boundary only")
    x = as_grid(input, "input")
    _, h, w = x.shape
    z = np.fft.fft2(x, axes=(-2, -1)) * spectral_multiplier(h, w, cfg)[None, :, :]
    return np.fft.ifft2(z, axes=(-2, -1)).real


def iel_adjoint_apply(g: np.ndarray, cfg: IELConfig) -> np.ndarray:
    """Transpose of the depth-D stack (for reverse-mode differentiation)."""
    out = np.ascontiguousarray(g)
    for _ in range(cfg.depth):
        out = out - cfg.tau * backend.laplacian_adj(np.ascontiguousarray(out), cfg.boundary)
    return out


def iel(x: autodiff.Var, cfg: IELConfig) -> autodiff.Var:
    """Tape node applying the stack; linear, so the VJP is the adjoint."""
    y = iel_apply(x.value, cfg)
    return autodiff.Var(
        y, parents=((x, lambda g: iel_adjoint_apply(g, cfg)),), op="iel_apply"
    )
