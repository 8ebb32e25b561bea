"""Multi-scale frequency fusion.

Fuses a low-resolution feature map with a high-resolution one by mixing
their DFT amplitude and phase planes separately:

    up   = upsample2x(f_lr)
    A, P = polar(fft2(up)),  polar(fft2(f_hr))
    A_f  = alpha * A_up + (1 - alpha) * A_hr
    P_f  = beta  * P_up + (1 - beta)  * P_hr        (raw angles, no wrapping)
    out  = up + conv1x1(Re(ifft2(A_f * e^{j P_f})))

alpha and beta are logistic-squashed scalars so unconstrained gradient
descent keeps them in (0, 1).  Mixing wrapped phases linearly can break
conjugate symmetry of the fused spectrum; the imaginary residue that the
real-part extraction discards is therefore measured and reported, never
assumed small.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ielkit import autodiff as ad
from ielkit.errors import DomainError, ShapeError
from ielkit.grids import ParamStore, as_spectrum

log = logging.getLogger(__name__)


class AmplitudePhase(NamedTuple):
    amplitude: np.ndarray  # >= 0
    phase: np.ndarray      # in (-pi, pi]; 0 where amplitude is 0


@dataclass
class MFFParams:
    """Learnable fusion state: raw mixing logits plus the 1x1 projection."""

    alpha_raw: np.ndarray   # scalar, shape ()
    beta_raw: np.ndarray    # scalar, shape ()
    conv_weights: np.ndarray  # (C, C)
    conv_bias: np.ndarray     # (C,)

    @property
    def alpha(self) -> float:
        return float(1.0 / (1.0 + np.exp(-self.alpha_raw)))

    @property
    def beta(self) -> float:
        return float(1.0 / (1.0 + np.exp(-self.beta_raw)))


def mff_init(channels: int, seed: int = 0) -> MFFParams:
    """Neutral start: alpha = beta = 0.5 and a zero projection, so the
    module begins as an exact low-branch passthrough."""
    if channels < 1:
        raise ShapeError(f"channels must be >= 1, got {channels}")
    del seed  # all-zero init is already deterministic; kept for API stability
    return MFFParams(
        alpha_raw=np.zeros(()),
        beta_raw=np.zeros(()),
        conv_weights=np.zeros((channels, channels)),
        conv_bias=np.zeros(channels),
    )


def decompose(spectrum) -> AmplitudePhase:
    """Split a complex spectrum into modulus and argument planes.

    Matches the tape-level op: noise-level imaginary parts snap to the
    real axis and zero bins get phase 0.
    """
    z = as_spectrum(spectrum)
    a = np.abs(z)
    p = np.arctan2(z.imag, z.real)
    on_axis = np.abs(z.imag) <= 1e-9 * a
    p = np.where(on_axis, np.where(z.real < 0.0, np.pi, 0.0), p)
    p = np.where(a > 0.0, p, 0.0)
    p = np.where(p == -np.pi, np.pi, p)
    return AmplitudePhase(amplitude=a, phase=p)


def recompose(ap: AmplitudePhase) -> np.ndarray:
    """Rebuild the complex spectrum A * e^{jP}."""
    a = np.asarray(ap.amplitude, dtype=np.float64)
    if (a < 0).any():
        raise DomainError("amplitude must be non-negative")
    p = np.asarray(ap.phase, dtype=np.float64)
    if a.shape != p.shape:
        raise ShapeError(f"amplitude {a.shape} and phase {p.shape} differ in shape")
    return a * (np.cos(p) + 1j * np.sin(p))


def _check_pair(f_lr: np.ndarray, f_hr: np.ndarray) -> None:
    cl, hl, wl = f_lr.shape
    ch, hh, wh = f_hr.shape
    if cl != ch:
        raise ShapeError(f"channel mismatch: {cl} vs {ch}")
    if (hh, wh) != (2 * hl, 2 * wl):
        raise ShapeError(
            f"high-res grid must be exactly double: {hl}x{wl} vs {hh}x{wh}"
        )


def fuse(
    f_lr: ad.Var,
    f_hr: ad.Var,
    alpha_raw: ad.Var,
    beta_raw: ad.Var,
    conv_w: ad.Var,
    conv_b: ad.Var,
    pin_alpha: float | None = None,
    pin_beta: float | None = None,
) -> tuple[ad.Var, float]:
    """Tape-level fusion; returns (output node, imaginary residue).

    `pin_alpha`/`pin_beta` bypass the logistic and hold the mixing weight
    at an exact constant (used to test limiting behaviour); pinned
    weights receive no gradient.
    """
    _check_pair(f_lr.value, f_hr.value)
    up = ad.upsample2x(f_lr)
    re_l, im_l = ad.fft2_pair(up)
    re_h, im_h = ad.fft2_pair(f_hr)
    a_l, p_l = ad.amplitude(re_l, im_l), ad.phase(re_l, im_l)
    a_h, p_h = ad.amplitude(re_h, im_h), ad.phase(re_h, im_h)

    def _mix(weight_raw, pin, lo, hi):
        if pin is not None:
            lo_part = ad.scale(lo, pin)
            hi_part = ad.scale(hi, 1.0 - pin)
        else:
            wvar = ad.sigmoid(weight_raw)
            lo_part = ad.mul(wvar, lo)
            hi_part = ad.mul(ad.scale(wvar, -1.0, 1.0), hi)
        return ad.add(lo_part, hi_part)

    a_f = _mix(alpha_raw, pin_alpha, a_l, a_h)
    p_f = _mix(beta_raw, pin_beta, p_l, p_h)
    re_f = ad.mul(a_f, ad.cos(p_f))
    im_f = ad.mul(a_f, ad.sin(p_f))
    spatial, residue = ad.ifft2_real(re_f, im_f)
    out = ad.add(up, ad.conv1x1(spatial, conv_w, conv_b))
    log.debug("mff residue %.3e", residue)
    return out, residue


class MFFCache(NamedTuple):
    out: ad.Var
    f_lr: ad.Var
    f_hr: ad.Var
    leaves: dict
    residue: float


class MFFGrads(NamedTuple):
    f_lr: np.ndarray
    f_hr: np.ndarray
    alpha_raw: np.ndarray
    beta_raw: np.ndarray
    conv_weights: np.ndarray
    conv_bias: np.ndarray


def mff_forward(
    f_lr,
    f_hr,
    params: MFFParams,
    pin_alpha: float | None = None,
    pin_beta: float | None = None,
    return_cache: bool = False,
):
    """Fuse two feature scales; returns the (C, 2h, 2w) output grid.

    With `return_cache=True` also returns the cache that `mff_backward`
    consumes.
    """
    lr = ad.Var(np.asarray(f_lr, dtype=np.float64))
    hr = ad.Var(np.asarray(f_hr, dtype=np.float64))
    leaves = {
        "alpha_raw": ad.Var(params.alpha_raw),
        "beta_raw": ad.Var(params.beta_raw),
        "conv_weights": ad.Var(params.conv_weights),
        "conv_bias": ad.Var(params.conv_bias),
    }
    out, residue = fuse(
        lr, hr,
        leaves["alpha_raw"], leaves["beta_raw"],
        leaves["conv_weights"], leaves["conv_bias"],
        pin_alpha=pin_alpha, pin_beta=pin_beta,
    )
    if return_cache:
        return out.value, MFFCache(out=out, f_lr=lr, f_hr=hr, leaves=leaves, residue=residue)
    return out.value


def mff_backward(cache: MFFCache, grad_output) -> MFFGrads:
    """Exact reverse-mode gradients of a cached forward pass."""
    g = np.asarray(grad_output, dtype=np.float64)
    if g.shape != cache.out.value.shape:
        raise ShapeError(f"grad shape {g.shape} != output shape {cache.out.value.shape}")
    ad.backward(cache.out, seed=g)

    def grad_of(node: ad.Var) -> np.ndarray:
        return node.grad if node.grad is not None else np.zeros_like(node.value)

    return MFFGrads(
        f_lr=grad_of(cache.f_lr),
        f_hr=grad_of(cache.f_hr),
        alpha_raw=grad_of(cache.leaves["alpha_raw"]),
        beta_raw=grad_of(cache.leaves["beta_raw"]),
        conv_weights=grad_of(cache.leaves["conv_weights"]),
        conv_bias=grad_of(cache.leaves["conv_bias"]),
    )


def params_to_store(params: MFFParams, store: ParamStore | None = None, prefix: str = "mff"):
    """Register the four MFF tensors in a ParamStore under `prefix`."""
    store = store if store is not None else ParamStore()
    store.add(f"{prefix}.alpha_raw", params.alpha_raw)
    store.add(f"{prefix}.beta_raw", params.beta_raw)
    store.add(f"{prefix}.conv_weights", params.conv_weights)
    store.add(f"{prefix}.conv_bias", params.conv_bias)
    return store


def params_from_store(store: ParamStore, prefix: str = "mff") -> MFFParams:
    return MFFParams(
        alpha_raw=store[f"{prefix}.alpha_raw"].value,
        beta_raw=store[f"{prefix}.beta_raw"].value,
        conv_weights=store[f"{prefix}.conv_weights"].value,
        conv_bias=store[f"{prefix}.conv_bias"].value,
    )
