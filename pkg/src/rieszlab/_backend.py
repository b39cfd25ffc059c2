"""Select the compiled kernel core when available, else the numpy fallback.

Set ``RIESZLAB_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("RIESZLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

pair_power = _impl.pair_power
apply_power = _impl.apply_power
greedy_transport = _impl.greedy_transport
