"""Grid value types and the trainable-parameter store.

A RealGrid is a float64 ndarray of shape (channels, height, width); a
ComplexSpectrum is its complex128 counterpart.  Both are plain numpy
arrays; the helpers here validate shape/finiteness at API boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ielkit.errors import DataError, NumericsError, ShapeError

# Type aliases used in signatures throughout the package.
RealGrid = np.ndarray        # (C, H, W) float64
ComplexSpectrum = np.ndarray  # (C, H, W) complex128
LabelGrid = np.ndarray       # (H, W) integer class ids


def as_grid(x, name: str = "grid") -> np.ndarray:
    """Validate and coerce `x` to a (C, H, W) float64 grid."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 3:
        raise ShapeError(f"{name} must be 3-d (channels, height, width), got shape {a.shape}")
    if not np.isfinite(a).all():
        raise NumericsError(f"{name} contains non-finite values")
    return a


def as_spectrum(x, name: str = "spectrum") -> np.ndarray:
    a = np.asarray(x, dtype=np.complex128)
    if a.ndim != 3:
        raise ShapeError(f"{name} must be 3-d (channels, height, width), got shape {a.shape}")
    if not np.isfinite(a.real).all() or not np.isfinite(a.imag).all():
        raise NumericsError(f"{name} contains non-finite components")
    return a


def as_label_grid(x, n_classes: int | None = None, name: str = "label") -> np.ndarray:
    a = np.asarray(x)
    if a.ndim != 2 or not np.issubdtype(a.dtype, np.integer):
        a = np.asarray(x, dtype=np.int64)
        if a.ndim != 2:
            raise ShapeError(f"{name} must be a 2-d integer grid, got shape {a.shape}")
    a = a.astype(np.int64, copy=False)
    if n_classes is not None and (a.min(initial=0) < 0 or a.max(initial=0) >= n_classes):
        raise DataError(f"{name} ids must lie in [0, {n_classes})")
    return a


@dataclass
class Param:
    """One named tensor with its gradient buffer."""

    value: np.ndarray
    grad: np.ndarray
    trainable: bool = True

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


class ParamStore:
    """Ordered collection of named parameters with gradient buffers.

    Gradients accumulate between calls to `zero_grads`; the optimizer
    zeroes them after every applied step, so each step starts clean.
    Single-writer during an optimization step.
    """

    def __init__(self):
        self._params: dict[str, Param] = {}

    def add(self, name: str, value, trainable: bool = True) -> Param:
        if name in self._params:
            raise ValueError(f"parameter {name!r} already exists")
        v = np.array(value, dtype=np.float64)
        p = Param(value=v, grad=np.zeros_like(v), trainable=trainable)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def trainable_items(self):
        return [(n, p) for n, p in self._params.items() if p.trainable]

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    def n_scalars(self, trainable_only: bool = True) -> int:
        return sum(
            p.value.size for p in self._params.values() if p.trainable or not trainable_only
        )

    def clone(self) -> "ParamStore":
        out = ParamStore()
        for name, p in self._params.items():
            q = out.add(name, p.value.copy(), trainable=p.trainable)
            q.grad[...] = p.grad
        return out

    # -- checkpoint format: plain-text header (one line per parameter with
    # -- name and shape), an `end` sentinel, then the values concatenated
    # -- as little-endian float64.
    MAGIC = b"ielkit-params 1"

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.MAGIC + b"\n")
            for name, p in self._params.items():
                dims = " ".join(str(d) for d in p.value.shape)
                line = name if not dims else f"{name} {dims}"
                fh.write(line.encode("ascii") + b"\n")
            fh.write(b"end\n")
            for p in self._params.values():
                fh.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "ParamStore":
        with open(path, "rb") as fh:
            blob = fh.read()
        head, sep, rest = blob.partition(b"\nend\n")
        if not sep:
            raise DataError(f"{path}: missing end-of-header sentinel")
        lines = head.split(b"\n")
        if lines[0] != cls.MAGIC:
            raise DataError(f"{path}: not a parameter checkpoint")
        store = cls()
        offset = 0
        for raw in lines[1:]:
            tokens = raw.decode("ascii").split()
            name, shape = tokens[0], tuple(int(t) for t in tokens[1:])
            count = int(np.prod(shape)) if shape else 1
            vals = np.frombuffer(rest, dtype="<f8", count=count, offset=offset)
            offset += count * 8
            store.add(name, vals.reshape(shape).astype(np.float64))
        if offset != len(rest):
            raise DataError(f"{path}: trailing bytes after parameter data")
        return store
