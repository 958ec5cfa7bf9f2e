"""Split-scan backend selection.

Prefers the compiled extension and falls back to the numpy implementation
when it is not built. Set REHABSCORE_KERNEL=python or =cython to force a
backend (forcing cython raises if the extension is missing).
"""

from __future__ import annotations

import os

from . import split_py

_FORCED = os.environ.get("REHABSCORE_KERNEL", "").strip().lower()

if _FORCED == "python":
    _impl = split_py
    BACKEND = "python"
elif _FORCED in ("", "cython"):
    try:
        from . import split_cy as _impl

        BACKEND = "cython"
    except ImportError:
        if _FORCED == "cython":
            raise
        _impl = split_py
        BACKEND = "python"
else:
    raise ValueError(
        "REHABSCORE_KERNEL must be 'python' or 'cython', got %r" % _FORCED
    )

scan_best_split = _impl.scan_best_split


def available_backends() -> dict:
    """Importable backends by name, regardless of which one is selected."""
    out = {"python": split_py.scan_best_split}
    try:
        from . import split_cy

        out["cython"] = split_cy.scan_best_split
    except ImportError:
        pass
    return out
