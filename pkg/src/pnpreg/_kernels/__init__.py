"""Hot-kernel dispatch: compiled extension when available, numpy otherwise.

``BACKEND`` reports which implementation is live ("compiled" or "python").
Setting the environment variable PNPREG_PURE_PYTHON=1 before import forces
the fallback; useful for benchmarking and debugging.
"""

import os

if os.environ.get("PNPREG_PURE_PYTHON"):
    from . import _fallback as _impl

    BACKEND = "python"
else:
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:
        from . import _fallback as _impl

        BACKEND = "python"

DEN_SCALE = _impl.DEN_SCALE
DEN_SOFT_SCALE = _impl.DEN_SOFT_SCALE

soft_threshold = _impl.soft_threshold
hard_threshold = _impl.hard_threshold
conv_window = _impl.conv_window
conv_circular = _impl.conv_circular
fbs_dense = _impl.fbs_dense

__all__ = [
    "BACKEND",
    "DEN_SCALE",
    "DEN_SOFT_SCALE",
    "soft_threshold",
    "hard_threshold",
    "conv_window",
    "conv_circular",
    "fbs_dense",
]
