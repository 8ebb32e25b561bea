"""Kernel backend selection.

The hot kernels (convolution, stencil, resampling) exist twice: a
compiled extension (`ielkit._kernels_c`, built from Cython) and a pure
numpy fallback (`ielkit._kernels_np`).  The compiled one is preferred
when importable; set IELKIT_BACKEND=numpy or IELKIT_BACKEND=compiled to
force a choice.  Both produce the same values (fp round-off aside); see
benchmarks/bench_kernels.py for a speed comparison.
"""

import os

from ielkit import _kernels_np
from ielkit.errors import ConfigError

_requested = os.environ.get("IELKIT_BACKEND", "auto").lower()
if _requested not in ("auto", "compiled", "numpy"):
    raise ConfigError(
        f"IELKIT_BACKEND must be 'auto', 'compiled' or 'numpy', got {_requested!r}"
    )

_compiled = None
if _requested in ("auto", "compiled"):
    try:
        from ielkit import _kernels_c as _compiled
    except ImportError:
        _compiled = None

if _requested == "compiled" and _compiled is None:
    raise ConfigError("IELKIT_BACKEND=compiled but the extension is not built")

_impl = _compiled if _compiled is not None else _kernels_np
BACKEND = "compiled" if _impl is _compiled and _compiled is not None else "numpy"

PAD_MODES = _kernels_np.PAD_MODES

conv2d_fwd = _impl.conv2d_fwd
conv2d_bwd_input = _impl.conv2d_bwd_input
conv2d_bwd_kernel = _impl.conv2d_bwd_kernel
upsample2x_fwd = _impl.upsample2x_fwd
upsample2x_bwd = _impl.upsample2x_bwd
laplacian_fwd = _impl.laplacian_fwd
laplacian_adj = _impl.laplacian_adj
