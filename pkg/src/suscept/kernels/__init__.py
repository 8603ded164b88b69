"""Kernel backend selection.

Two interchangeable backends provide the conv/pool hot loops: the compiled
Cython extension (built at install time) and a pure-numpy im2col fallback.
The default is the compiled one when importable; set SUSCEPT_KERNELS to
"python" or "compiled" to force a choice, or call use_backend() at runtime.

Results agree between backends to float64 rounding but are not bit-identical
(summation order differs), so reproducibility guarantees hold per backend.
"""
from __future__ import annotations

import os

from . import python as _python_backend

try:
    from . import _conv as _compiled_backend
except ImportError:
    _compiled_backend = None

_BACKENDS = {"python": _python_backend}
if _compiled_backend is not None:
    _BACKENDS["compiled"] = _compiled_backend

_active = None


def available_backends():
    return sorted(_BACKENDS)


def use_backend(name: str):
    """Switch the active backend; returns the backend module."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(
            f"kernel backend {name!r} not available (have: {available_backends()})"
        )
    _active = _BACKENDS[name]
    return _active


def active_backend_name() -> str:
    return _active.NAME


def _initial_choice() -> str:
    env = os.environ.get("SUSCEPT_KERNELS", "auto").lower()
    if env in _BACKENDS:
        return env
    if env not in ("", "auto"):
        raise ImportError(
            f"SUSCEPT_KERNELS={env!r} is not available (have: {available_backends()})"
        )
    return "compiled" if "compiled" in _BACKENDS else "python"


use_backend(_initial_choice())


def conv2d_forward(x, w, b, stride, padding):
    return _active.conv2d_forward(x, w, b, stride, padding)


def conv2d_backward(x, w, dy, stride, padding, need_param_grads):
    return _active.conv2d_backward(x, w, dy, stride, padding, need_param_grads)


def maxpool_forward(x, kernel, stride):
    return _active.maxpool_forward(x, kernel, stride)


def maxpool_backward(dy, idx, x_shape, kernel, stride):
    return _active.maxpool_backward(dy, idx, x_shape, kernel, stride)
