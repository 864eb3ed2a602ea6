"""Select the compiled kernels when available, else the numpy fallback.

Set ``HYBRIDGSHP_PURE=1`` to force the fallback (used by the benchmark and
the backend-equivalence tests).
"""
import os

from . import _pykernels as pure

BACKEND = "python"
_impl = pure
if os.environ.get("HYBRIDGSHP_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = pure

exp1 = _impl.exp1
exp1_array = _impl.exp1_array
agg_push = _impl.agg_push
agg_temperature = _impl.agg_temperature
# numpy's convolve beats the compiled O(n^2) loop, so it is used on both backends
direct_superposition = pure.direct_superposition
borehole_step = _impl.borehole_step


def compiled():
    """Return the compiled kernel module, or None when it is not built."""
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels
