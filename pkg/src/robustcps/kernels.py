"""Kernel dispatch: the compiled extension when available, else numpy.

Set ``ROBUSTCPS_PURE=1`` to force the numpy fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("ROBUSTCPS_PURE", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _impl = _kernels_py

IMPL = _impl.IMPL
ball_successors = _impl.ball_successors
safety_rounds = _impl.safety_rounds
rhs_bruteforce = _impl.rhs_bruteforce
