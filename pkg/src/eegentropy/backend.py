"""Selects the kernel implementation: compiled extension or numpy fallback.

The compiled module ``eegentropy._kernels`` is preferred when importable;
otherwise the numpy twin ``eegentropy._kernels_py`` is used.  Set
``EEGENTROPY_BACKEND=python`` or ``=compiled`` to force one (forcing
``compiled`` raises if the extension is missing).  Both expose the same
four functions with identical semantics; the benchmark command and the
parity tests load both sides explicitly via ``load_kernels``.
"""

from __future__ import annotations

import os

_ENV_VAR = "EEGENTROPY_BACKEND"
_NAMES = ("compiled", "python")


def load_kernels(name: str):
    """Import one kernel implementation by name."""
    if name == "python":
        from . import _kernels_py

        return _kernels_py
    if name == "compiled":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}; expected one of {_NAMES}")


def available_backends() -> tuple[str, ...]:
    out = []
    for name in _NAMES:
        try:
            load_kernels(name)
        except ImportError:
            continue
        out.append(name)
    return tuple(out)


def _select():
    forced = os.environ.get(_ENV_VAR, "").strip()
    if forced:
        if forced not in _NAMES:
            raise ImportError(
                f"{_ENV_VAR}={forced!r} is not a backend; expected one of {_NAMES}"
            )
        return forced, load_kernels(forced)
    try:
        return "compiled", load_kernels("compiled")
    except ImportError:
        return "python", load_kernels("python")


backend_name, kernels = _select()
