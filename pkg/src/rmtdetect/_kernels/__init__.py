"""Hot-loop kernels with a compiled core and a pure-Python fallback.

The Cython extension ``_ckernels`` is used when it imports cleanly; otherwise
``_pykernels`` is loaded. Set ``RMTDETECT_PURE_PYTHON=1`` to force the
fallback (benchmarks and backend cross-checks do this).
"""

from __future__ import annotations

import os
from types import ModuleType

from rmtdetect._kernels import _pykernels

_ckernels: ModuleType | None
try:
    from rmtdetect._kernels import _ckernels  # type: ignore[attr-defined,no-redef]
except ImportError:  # extension not built
    _ckernels = None

BACKENDS: dict[str, ModuleType] = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels

if _ckernels is not None and os.environ.get("RMTDETECT_PURE_PYTHON", "") in ("", "0"):
    BACKEND = "cython"
else:
    BACKEND = "python"

impl: ModuleType = BACKENDS[BACKEND]


def get_backend(name: str | None = None) -> ModuleType:
    """Return the kernel module ``name`` (default: the active one)."""
    if name is None:
        return impl
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available; have {sorted(BACKENDS)}") from None
