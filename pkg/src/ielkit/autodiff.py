"""Minimal reverse-mode tape over numpy arrays.

Every differentiable operation builds a `Var` holding the forward value
and, per parent, a vector-Jacobian closure.  `backward` walks the graph
once in reverse topological order and accumulates gradients on every
node (shared subexpressions accumulate automatically).  Values are real
float64 arrays throughout; complex spectra travel as (re, im) pairs so
no Wirtinger calculus is needed.
"""

from __future__ import annotations

import numpy as np

from ielkit import backend
from ielkit.errors import ShapeError
from ielkit.grids import ParamStore


class Var:
    """A node in the computation graph."""

    __slots__ = ("value", "parents", "grad", "op")

    def __init__(self, value, parents=(), op: str = "leaf"):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents  # tuple of (Var, vjp callable)
        self.grad = None
        self.op = op

    def __repr__(self):
        return f"Var(op={self.op!r}, shape={self.value.shape})"


def topo_order(root: Var) -> list[Var]:
    """All reachable nodes, children before parents."""
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            stack.append((parent, False))
    order.reverse()
    return order


def backward(root: Var, seed=None) -> None:
    """Accumulate dL/dnode into every node reachable from `root`."""
    root.grad = np.ones_like(root.value) if seed is None else np.asarray(seed, dtype=np.float64)
    for node in topo_order(root):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in node.parents:
            pg = vjp(g)
            parent.grad = pg if parent.grad is None else parent.grad + pg


def graph_ops(root: Var) -> set[str]:
    """Names of all operations appearing in the graph under `root`."""
    return {node.op for node in topo_order(root)}


def bind_params(store: ParamStore) -> dict[str, Var]:
    """Wrap every store entry in a leaf Var (values shared, not copied)."""
    return {name: Var(p.value) for name, p in store.items()}


def harvest_grads(store: ParamStore, leaves: dict[str, Var]) -> None:
    """Accumulate leaf gradients back into the store."""
    for name, leaf in leaves.items():
        if leaf.grad is not None:
            store[name].grad += leaf.grad


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `g` down to `shape` (reverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------- basics

def add(a: Var, b: Var) -> Var:
    return Var(
        a.value + b.value,
        parents=(
            (a, lambda g: _unbroadcast(g, a.value.shape)),
            (b, lambda g: _unbroadcast(g, b.value.shape)),
        ),
        op="add",
    )


def sub(a: Var, b: Var) -> Var:
    return Var(
        a.value - b.value,
        parents=(
            (a, lambda g: _unbroadcast(g, a.value.shape)),
            (b, lambda g: _unbroadcast(-g, b.value.shape)),
        ),
        op="sub",
    )


def mul(a: Var, b: Var) -> Var:
    return Var(
        a.value * b.value,
        parents=(
            (a, lambda g: _unbroadcast(g * b.value, a.value.shape)),
            (b, lambda g: _unbroadcast(g * a.value, b.value.shape)),
        ),
        op="mul",
    )


def scale(a: Var, s: float, shift: float = 0.0) -> Var:
    """s * a + shift with constant s, shift."""
    return Var(s * a.value + shift, parents=((a, lambda g: s * g),), op="scale")


def ssum(a: Var) -> Var:
    return Var(a.value.sum(), parents=((a, lambda g: g * np.ones_like(a.value)),), op="sum")


def sigmoid(a: Var) -> Var:
    # expit via tanh avoids overflow warnings for large negative inputs
    y = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return Var(y, parents=((a, lambda g, y=y: g * y * (1.0 - y)),), op="sigmoid")


def softplus(a: Var) -> Var:
    # log(1 + e^x), computed stably; derivative is the logistic.
    v = a.value
    y = np.logaddexp(0.0, v)
    return Var(y, parents=((a, lambda g: g / (1.0 + np.exp(-v))),), op="softplus")


def tanh(a: Var) -> Var:
    y = np.tanh(a.value)
    return Var(y, parents=((a, lambda g, y=y: g * (1.0 - y * y)),), op="tanh")


def sin(a: Var) -> Var:
    return Var(np.sin(a.value), parents=((a, lambda g: g * np.cos(a.value)),), op="sin")


def cos(a: Var) -> Var:
    return Var(np.cos(a.value), parents=((a, lambda g: -g * np.sin(a.value)),), op="cos")


# ------------------------------------------------------- grid operations

def conv2d(x: Var, w: Var, b: Var, padding: str) -> Var:
    xv = np.ascontiguousarray(x.value)
    wv = np.ascontiguousarray(w.value)
    y = backend.conv2d_fwd(xv, wv, b.value, padding)
    kk = wv.shape[-1]

    def vjp_x(g):
        return backend.conv2d_bwd_input(np.ascontiguousarray(g), wv, padding)

    def vjp_w(g):
        gk, _ = backend.conv2d_bwd_kernel(np.ascontiguousarray(g), xv, kk, padding)
        return gk

    def vjp_b(g):
        return g.sum(axis=(1, 2))

    return Var(y, parents=((x, vjp_x), (w, vjp_w), (b, vjp_b)), op="conv2d")


def conv1x1(x: Var, w: Var, b: Var) -> Var:
    """Channel-mixing 1x1 convolution; w is (Cout, Cin)."""
    y = np.einsum("oc,chw->ohw", w.value, x.value) + b.value[:, None, None]
    return Var(
        y,
        parents=(
            (x, lambda g: np.einsum("oc,ohw->chw", w.value, g)),
            (w, lambda g: np.einsum("ohw,chw->oc", g, x.value)),
            (b, lambda g: g.sum(axis=(1, 2))),
        ),
        op="conv1x1",
    )


def upsample2x(x: Var) -> Var:
    y = backend.upsample2x_fwd(np.ascontiguousarray(x.value))
    return Var(
        y,
        parents=((x, lambda g: backend.upsample2x_bwd(np.ascontiguousarray(g))),),
        op="upsample2x",
    )


def avgpool2(x: Var) -> Var:
    c, h, w = x.value.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avgpool2 needs even H and W, got {h}x{w}")
    y = x.value.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))

    def vjp(g):
        return np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) * 0.25

    return Var(y, parents=((x, vjp),), op="avgpool2")


# --------------------------------------------------- spectral operations

def fft2_pair(x: Var) -> tuple[Var, Var]:
    """Forward DFT of a real grid as two real nodes (re, im).

    With upstream gradients (g_re, g_im), the input gradient is
    Re(F^T conj(G)) = Re(fft2(g_re)) + Im(fft2(g_im)).
    """
    z = np.fft.fft2(x.value, axes=(-2, -1))
    re = Var(
        np.ascontiguousarray(z.real),
        parents=((x, lambda g: np.fft.fft2(g, axes=(-2, -1)).real),),
        op="fft2_re",
    )
    im = Var(
        np.ascontiguousarray(z.imag),
        parents=((x, lambda g: np.fft.fft2(g, axes=(-2, -1)).imag),),
        op="fft2_im",
    )
    return re, im


def ifft2_real(re: Var, im: Var) -> tuple[Var, float]:
    """Real part of the normalized inverse DFT; reports the imaginary residue."""
    z = re.value + 1j * im.value
    w = np.fft.ifft2(z, axes=(-2, -1))
    residue = float(np.abs(w.imag).max()) if w.size else 0.0
    hw = z.shape[-2] * z.shape[-1]

    def vjp_re(g):
        return np.fft.fft2(g, axes=(-2, -1)).real / hw

    def vjp_im(g):
        return np.fft.fft2(g, axes=(-2, -1)).imag / hw

    out = Var(
        np.ascontiguousarray(w.real),
        parents=((re, vjp_re), (im, vjp_im)),
        op="ifft2_real",
    )
    return out, residue


def amplitude(re: Var, im: Var) -> Var:
    """Modulus of (re, im); gradient pinned to zero at zero-amplitude bins."""
    a = np.hypot(re.value, im.value)
    safe = np.where(a > 0.0, a, 1.0)

    def vjp_re(g):
        return np.where(a > 0.0, g * re.value / safe, 0.0)

    def vjp_im(g):
        return np.where(a > 0.0, g * im.value / safe, 0.0)

    return Var(a, parents=((re, vjp_re), (im, vjp_im)), op="amplitude")


def phase(re: Var, im: Var) -> Var:
    """Two-argument arctangent in (-pi, pi]; zero bins get phase 0.

    Imaginary parts below fp-noise level (1e-9 of the modulus) are
    treated as exactly on the real axis: spectra of real grids carry
    identically-real bins whose rounding noise would otherwise flip the
    angle between -pi and pi and make downstream phase mixing
    discontinuous.
    """
    a = np.hypot(re.value, im.value)
    a2 = a * a
    on_axis = np.abs(im.value) <= 1e-9 * a
    p = np.arctan2(im.value, re.value)
    p = np.where(on_axis, np.where(re.value < 0.0, np.pi, 0.0), p)
    p = np.where(a2 > 0.0, p, 0.0)
    p = np.where(p == -np.pi, np.pi, p)
    safe = np.where(a2 > 0.0, a2, 1.0)

    def vjp_re(g):
        return np.where(a2 > 0.0, -g * im.value / safe, 0.0)

    def vjp_im(g):
        return np.where(a2 > 0.0, g * re.value / safe, 0.0)

    return Var(p, parents=((re, vjp_re), (im, vjp_im)), op="phase")


# -------------------------------------------------------------- losses

def mse(a: Var, target: np.ndarray) -> Var:
    diff = a.value - target
    n = diff.size
    return Var(np.asarray((diff**2).mean()), parents=((a, lambda g: g * 2.0 * diff / n),), op="mse")


def softmax_ce(logits: Var, labels: np.ndarray) -> Var:
    """Mean pixel cross-entropy of (C,H,W) logits against (H,W) int labels."""
    z = logits.value
    zmax = z.max(axis=0, keepdims=True)
    ez = np.exp(z - zmax)
    sm = ez / ez.sum(axis=0, keepdims=True)
    h, w = labels.shape
    picked = z[labels, np.arange(h)[:, None], np.arange(w)[None, :]]
    lse = zmax[0] + np.log(ez.sum(axis=0))
    loss = float((lse - picked).mean())

    onehot = np.zeros_like(z)
    onehot[labels, np.arange(h)[:, None], np.arange(w)[None, :]] = 1.0
    npix = h * w

    def vjp(g):
        return g * (sm - onehot) / npix

    return Var(np.asarray(loss), parents=((logits, vjp),), op="softmax_ce")
