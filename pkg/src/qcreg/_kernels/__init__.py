"""Kernel backend selection.

The compiled Cython core is preferred; the pure-numpy fallback is used when
the extension is missing or the QCREG_PURE environment variable is set to a
non-empty value.
"""
from __future__ import annotations

import os

from . import fallback

HAVE_COMPILED = False
_impl = fallback

if not os.environ.get("QCREG_PURE"):
    try:
        from . import _core  # type: ignore[attr-defined]

        _impl = _core
        HAVE_COMPILED = True
    except ImportError:
        pass


def backend() -> str:
    return "compiled" if _impl is not fallback else "python"


def locate_kernel(*args, **kwargs):
    return _impl.locate_kernel(*args, **kwargs)


def lbs_local_values(*args, **kwargs):
    return _impl.lbs_local_values(*args, **kwargs)
