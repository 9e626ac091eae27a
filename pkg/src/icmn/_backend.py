"""Pick the compiled kernels when available, else the pure-Python ones.

Set ``ICMN_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback

try:
    if os.environ.get("ICMN_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python backend requested")
    from . import _kernels
except ImportError:
    _kernels = None

BACKENDS = {"python": _fallback}
if _kernels is not None:
    BACKENDS["cython"] = _kernels

NAME = "cython" if _kernels is not None else "python"
_active = BACKENDS[NAME]


def get(name=None):
    """Kernel module by name; ``None`` gives the one selected at import."""
    if name is None:
        return _active
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} is not available (have {sorted(BACKENDS)})") from None
