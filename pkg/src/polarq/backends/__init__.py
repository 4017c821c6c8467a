"""Backend selection: compiled core when available, numpy batch fallback.

The compiled extension implements the same frame-level contract as the
numpy engine (same counter-mode random streams included), so the choice is
purely about speed.  Set POLARQ_BACKEND=py or =c to force one.
"""

from __future__ import annotations

import os

from . import pykern

try:
    from . import _ckern  # compiled; optional

    HAVE_COMPILED = True
except ImportError:  # pragma: no cover - depends on build environment
    _ckern = None
    HAVE_COMPILED = False


class Backend:
    def __init__(self, name, scl_batch, genie_llrs):
        self.name = name
        self.scl_batch = scl_batch
        self.genie_llrs = genie_llrs

    def supports(self, spec) -> bool:
        if self.name == "ckern":
            return not spec.exact_cn
        return True


_PY = Backend("pykern", pykern.scl_batch, pykern.genie_llrs)
_C = Backend("ckern", _ckern.scl_batch, pykern.genie_llrs) if HAVE_COMPILED else None


def get_backend(name: str | None = None, spec=None) -> Backend:
    """Resolve a backend by name, env override, or availability.

    With a ``spec``, falls back to the numpy engine for features the
    compiled core declines (the exact check node).
    """
    name = name or os.environ.get("POLARQ_BACKEND", "")
    if name in ("py", "pykern"):
        return _PY
    if name in ("c", "ckern"):
        if _C is None:
            raise RuntimeError("compiled backend requested but not built")
        return _C
    if name:
        raise ValueError(f"unknown backend {name!r}")
    chosen = _C if _C is not None else _PY
    if spec is not None and not chosen.supports(spec):
        return _PY
    return chosen
