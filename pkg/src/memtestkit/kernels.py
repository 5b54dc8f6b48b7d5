"""Backend selection for the word kernels.

The compiled module is preferred.  Set ``MEMTESTKIT_BACKEND=python`` to force
the numpy implementation (useful for parity testing and for platforms without
a C compiler).
"""

from __future__ import annotations

import os

from . import _fallback

_requested = os.environ.get("MEMTESTKIT_BACKEND", "auto").lower()

if _requested == "python":
    _impl = _fallback
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        if _requested == "native":
            raise
        _impl = _fallback

BACKEND: str = _impl.BACKEND

fill_range = _impl.fill_range
fill_class = _impl.fill_class
count_ne_range = _impl.count_ne_range
count_ne_class = _impl.count_ne_class
count_ne_words = _impl.count_ne_words
park_miller_blocks = _impl.park_miller_blocks
lcg_generators = _impl.lcg_generators


def available_backends() -> dict:
    """Map backend name to module for every backend importable here."""
    out = {"python": _fallback}
    try:
        from . import _native
        out["native"] = _native
    except ImportError:
        pass
    return out
