"""Pick the kernel implementation once, at import.

The compiled extension is used when it was built; ``FEDSIM_PURE_PYTHON=1``
forces the numpy fallback (handy for benchmarks and for checking the two
agree).
"""

import os

from . import _fallback

if os.environ.get("FEDSIM_PURE_PYTHON", "") not in ("", "0"):
    kernels = _fallback
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        kernels = _fallback

BACKEND = kernels.NAME


def available():
    """Names of the kernel modules importable in this environment."""
    out = {"python": _fallback}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        out["compiled"] = _kernels
    return out
