"""Kernel backend selection.

Two interchangeable implementations of the hot query kernels exist:

  _core      Cython-compiled scalar kernels (preferred)
  _fallback  pure numpy reference kernels

Both evaluate every floating-point expression in the same IEEE-754 order,
so results are bit-identical and the suite cross-checks them directly. The
active backend is picked at import: the compiled module when it built, else
the fallback. Set DYNBPS_BACKEND=core|fallback to force one, or call
set_backend() at runtime (the bench harness does this to time both).
"""

from __future__ import annotations

import importlib
import os

_ALIASES = {
    "core": "_core", "compiled": "_core", "cython": "_core",
    "fallback": "_fallback", "python": "_fallback", "numpy": "_fallback",
}

_state = {"module": None, "name": None}


def _import_backend(name: str):
    return importlib.import_module(f".{name}", __name__)


def available_backends() -> tuple:
    """Backend names usable with set_backend, preferred first."""
    names = []
    try:
        _import_backend("_core")
        names.append("core")
    except ImportError:
        pass
    names.append("fallback")
    return tuple(names)


def set_backend(name: str) -> str:
    """Select the kernel backend by name; returns the previous name."""
    key = _ALIASES.get(name.strip().lower())
    if key is None:
        raise ValueError(f"unknown backend {name!r}; expected one of "
                         f"{sorted(set(_ALIASES))}")
    previous = _state["name"]
    _state["module"] = _import_backend(key)
    _state["name"] = "core" if key == "_core" else "fallback"
    return previous


def get_kernels():
    """The active kernel module (lazy first load honoring DYNBPS_BACKEND)."""
    if _state["module"] is None:
        requested = os.environ.get("DYNBPS_BACKEND", "auto").strip().lower()
        if requested in ("", "auto"):
            try:
                set_backend("core")
            except ImportError:
                set_backend("fallback")
        else:
            set_backend(requested)
    return _state["module"]


def backend_name() -> str:
    get_kernels()
    return _state["name"]
