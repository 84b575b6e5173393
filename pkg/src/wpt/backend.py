"""Kernel backend selection.

The compiled core is used when it imports and the target can be packed;
``WPT_BACKEND=python`` forces the pure-Python loops everywhere.
"""
from __future__ import annotations

import os

from . import _pykernels

try:
    from . import _kernels as _ckernels
except ImportError:  # extension not built
    _ckernels = None

from ._packing import pack, packable


def compiled_available() -> bool:
    return _ckernels is not None


def default_backend() -> str:
    if os.environ.get("WPT_BACKEND", "").lower() == "python" or _ckernels is None:
        return "python"
    return "compiled"


def resolve(backend: str | None) -> str:
    b = (backend or default_backend()).lower()
    if b not in ("python", "compiled"):
        raise ValueError(f"unknown backend {backend!r}")
    if b == "compiled" and _ckernels is None:
        raise RuntimeError("compiled kernels are not built; reinstall or use backend='python'")
    return b


class ChainKernels:
    """Bound kernels for one tempered target on one backend."""

    def __init__(self, target, backend: str | None = None):
        b = resolve(backend)
        if b == "compiled" and not packable(target):
            b = "python"
        self.backend = b
        self.target = target
        self._obj = _ckernels.CTarget(pack(target)) if b == "compiled" else target
        self._mod = _ckernels if b == "compiled" else _pykernels

    def st_chain(self, *args, **kw):
        return self._mod.st_chain(self._obj, *args, **kw)

    def pt_chain(self, *args, **kw):
        return self._mod.pt_chain(self._obj, *args, **kw)

    def logpdf_batch(self, beta, X):
        return self._mod.logpdf_batch(self._obj, beta, X)


def simplified_module(backend: str | None = None):
    return _ckernels if resolve(backend) == "compiled" else _pykernels
