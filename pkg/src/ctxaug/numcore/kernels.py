"""Kernel backend selection.

The compiled Cython kernels are used when importable; otherwise the numpy
versions in ``_pykernels`` are used. Set ``CTXAUG_KERNELS=python`` to force
the fallback (``CTXAUG_KERNELS=cython`` makes a missing extension an error).
"""
import os

from . import _pykernels

_FUNCTIONS = ("lstm_forward", "lstm_backward", "scatter_add_rows", "sample_rows")


def _load(name):
    if name == "python":
        return _pykernels
    from . import _ckernels  # noqa: PLC0415

    return _ckernels


def _select():
    wanted = os.environ.get("CTXAUG_KERNELS", "auto").lower()
    if wanted == "python":
        return "python", _pykernels
    try:
        return "cython", _load("cython")
    except ImportError:
        if wanted == "cython":
            raise
        return "python", _pykernels


BACKEND, _impl = _select()


def available_backends():
    names = ["python"]
    try:
        _load("cython")
        names.append("cython")
    except ImportError:
        pass
    return names


def get_backend(name):
    """Module implementing the kernels for backend ``name``."""
    if name not in ("python", "cython"):
        raise ValueError(f"unknown kernel backend {name!r}")
    return _load(name)


def use_backend(name):
    """Switch the active backend process-wide (mainly for tests and benchmarks)."""
    global BACKEND, _impl
    if name == "auto":
        name = available_backends()[-1]
    _impl = get_backend(name)
    BACKEND = name
    for fn in _FUNCTIONS:
        globals()[fn] = getattr(_impl, fn)


lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward
scatter_add_rows = _impl.scatter_add_rows
sample_rows = _impl.sample_rows
