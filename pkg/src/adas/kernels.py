"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
fallback is imported. Set ``ADAS_KERNELS=python`` to force the fallback or
``ADAS_KERNELS=cython`` to fail loudly when the extension is missing.
"""

import os

_choice = os.environ.get("ADAS_KERNELS", "auto").lower()
if _choice not in ("auto", "python", "cython"):
    raise ImportError(f"ADAS_KERNELS must be auto, python or cython (got {_choice!r})")

if _choice == "python":
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        if _choice == "cython":
            raise
        from . import _kernels_py as _impl

BACKEND = _impl.NAME
contract = _impl.contract
project_dealias = _impl.project_dealias
if_euler = _impl.if_euler
if_ab2 = _impl.if_ab2
set_num_threads = _impl.set_num_threads
