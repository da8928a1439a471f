"""Kernel backend selection.

The compiled core (built from _compiled.pyx) is preferred when present;
otherwise the numpy fallback is used. Set HARMONY_KERNELS=compiled or
=python to force a backend explicitly; forcing the compiled backend on an
install without the extension raises ImportError.
"""
import os

from harmony.kernels import _python

_choice = os.environ.get("HARMONY_KERNELS", "auto").strip().lower() or "auto"
if _choice == "auto":
    try:
        from harmony.kernels import _compiled as _active
    except ImportError:
        _active = _python
elif _choice in ("compiled", "c"):
    from harmony.kernels import _compiled as _active
elif _choice in ("python", "py"):
    _active = _python
else:
    raise ValueError(
        f"HARMONY_KERNELS must be 'auto', 'compiled' or 'python', got {_choice!r}"
    )

BACKEND = "python" if _active is _python else "compiled"
LOG_CLAMP = _active.LOG_CLAMP

matmul = _active.matmul
add_row_vector = _active.add_row_vector
col_sums = _active.col_sums
relu = _active.relu
relu_grad = _active.relu_grad
tanh_forward = _active.tanh_forward
tanh_grad = _active.tanh_grad
softmax_rows = _active.softmax_rows
weighted_cross_entropy = _active.weighted_cross_entropy
sgd_step = _active.sgd_step
