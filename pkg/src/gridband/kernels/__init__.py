"""Split-search kernels with a compiled fast path.

The compiled extension is preferred when present; ``GRIDBAND_PURE=1`` forces
the numpy reference. Both backends are bit-identical by contract, so the
choice can never change results, only speed.
"""

from __future__ import annotations

import os

from . import _ref

if os.environ.get("GRIDBAND_PURE") == "1":
    _impl = _ref
    BACKEND = "python"
else:
    try:
        from . import _fast as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = _ref
        BACKEND = "python"

NO_SPLIT = _ref.NO_SPLIT
best_split = _impl.best_split
apply_tree = _impl.apply_tree

__all__ = ["BACKEND", "NO_SPLIT", "best_split", "apply_tree"]
