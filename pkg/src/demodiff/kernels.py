"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise the pure-Python
module is. Set ``DEMODIFF_KERNELS=python`` to force the fallback, or
``DEMODIFF_KERNELS=c`` to fail loudly if the extension is missing.
"""

import os
from types import ModuleType

from . import _pykernels

__all__ = ["BACKEND", "backend", "available_backends", "philox4x64", "random_words",
           "uniform_indices", "betainc", "top_r"]


def _load_compiled():
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


_compiled = _load_compiled()


def available_backends() -> dict[str, ModuleType]:
    found = {"python": _pykernels}
    if _compiled is not None:
        found["c"] = _compiled
    return found


def backend(name: str) -> ModuleType:
    """Kernel module by name (``"c"`` or ``"python"``)."""
    try:
        return available_backends()[name]
    except KeyError:
        raise ImportError(f"kernel backend {name!r} is not available") from None


def _select() -> tuple[str, ModuleType]:
    wanted = os.environ.get("DEMODIFF_KERNELS", "auto").strip().lower()
    if wanted == "python":
        return "python", _pykernels
    if wanted == "c":
        return "c", backend("c")
    if _compiled is not None:
        return "c", _compiled
    return "python", _pykernels


BACKEND, _active = _select()

philox4x64 = _active.philox4x64
random_words = _active.random_words
uniform_indices = _active.uniform_indices
betainc = _active.betainc
top_r = _active.top_r
