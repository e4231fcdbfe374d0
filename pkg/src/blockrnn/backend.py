"""Kernel backend selection: compiled extension if available, numpy fallback.

The contract of both backends is identical (see ``_kernels_py``). Selection
happens once at import; override with the environment variable
``BLOCKRNN_BACKEND=compiled`` or ``BLOCKRNN_BACKEND=python``. The thread
count set here is passed to every kernel call; results are bit-identical
for any thread count by construction (batch-parallel with disjoint writes,
serial fixed-order reductions).
"""

from __future__ import annotations

import os

from . import _kernels_py

_COMPILED = None
try:
    from . import _kernels_cy as _COMPILED  # type: ignore
except ImportError:
    _COMPILED = None

_num_threads = 1


def available_backends() -> list[str]:
    out = ["python"]
    if _COMPILED is not None:
        out.insert(0, "compiled")
    return out


def _select():
    choice = os.environ.get("BLOCKRNN_BACKEND", "").strip().lower()
    if choice in ("py", "python", "numpy"):
        return _kernels_py, "python"
    if choice in ("cy", "compiled", "cython"):
        if _COMPILED is None:
            raise ImportError(
                "BLOCKRNN_BACKEND requests the compiled backend but the "
                "extension is not built; install with the C extension or "
                "unset BLOCKRNN_BACKEND"
            )
        return _COMPILED, "compiled"
    if choice not in ("", "auto"):
        raise ValueError(f"unknown BLOCKRNN_BACKEND value {choice!r}")
    if _COMPILED is not None:
        return _COMPILED, "compiled"
    return _kernels_py, "python"


_backend, _backend_name = _select()


def get_backend(name: str | None = None):
    """The module implementing the kernel contract.

    ``name`` forces a specific backend ("compiled" / "python") for one call
    site, e.g. the backend-comparison benchmark; default is the selected one.
    """
    if name is None:
        return _backend
    if name in ("python", "py", "numpy"):
        return _kernels_py
    if name in ("compiled", "cy", "cython"):
        if _COMPILED is None:
            raise ValueError("compiled backend is not available")
        return _COMPILED
    raise ValueError(f"unknown backend {name!r}")


def backend_name() -> str:
    return _backend_name


def set_num_threads(n: int) -> None:
    """Degree of batch-dimension parallelism inside kernels (>= 1)."""
    global _num_threads
    n = int(n)
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _num_threads = n


def get_num_threads() -> int:
    return _num_threads
