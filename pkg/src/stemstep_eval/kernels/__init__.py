"""Kernel dispatch: compiled extension when built, pure Python otherwise.

Set ``STEMSTEP_EVAL_PURE_PYTHON=1`` to force the fallback (used by the
benchmark and by tests that compare the two backends).
"""

from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("STEMSTEP_EVAL_PURE_PYTHON"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

lcs_length = _impl.lcs_length
greedy_align = _impl.greedy_align

__all__ = ["BACKEND", "lcs_length", "greedy_align"]
