"""Backend selection for the search kernel.

The compiled extension ``lnpathlab._ckernel`` is used when it imports; the
pure-Python engines are the fallback.  ``LNPATHLAB_BACKEND=python`` forces
the fallback.
"""

from __future__ import annotations

import os

try:
    from . import _ckernel  # type: ignore[attr-defined]
except ImportError:  # extension not built
    _ckernel = None

BACKENDS = ("compiled", "python")


def available() -> tuple[str, ...]:
    return BACKENDS if _ckernel is not None else ("python",)


def default_backend() -> str:
    forced = os.environ.get("LNPATHLAB_BACKEND", "").strip().lower()
    if forced:
        return resolve(forced)
    return "compiled" if _ckernel is not None else "python"


def resolve(name: str | None) -> str:
    if name is None:
        return default_backend()
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; choose from {BACKENDS}")
    if name == "compiled" and _ckernel is None:
        raise RuntimeError("compiled kernel is not built; reinstall with a C compiler and Cython")
    return name


def compiled():
    if _ckernel is None:
        raise RuntimeError("compiled kernel is not built")
    return _ckernel
