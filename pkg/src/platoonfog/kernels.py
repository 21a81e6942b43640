"""Backend selection: compiled extension when available, pure python otherwise.

Both backends expose the same two entry points (``vi_solve`` and
``simulate_events``) with identical semantics; see ``platoonfog.bench`` for a
throughput comparison.
"""

from __future__ import annotations

from . import _kernels_py

try:
    from . import _kernels

    _DEFAULT = _kernels
    BACKEND = "compiled"
except ImportError:  # pragma: no cover - depends on the build environment
    _kernels = None
    _DEFAULT = _kernels_py
    BACKEND = "python"

vi_solve = _DEFAULT.vi_solve
simulate_events = _DEFAULT.simulate_events


def backend_name() -> str:
    return BACKEND


def available_backends() -> dict:
    """Name -> module for every importable backend."""
    out = {"python": _kernels_py}
    if _kernels is not None:
        out["compiled"] = _kernels
    return out
