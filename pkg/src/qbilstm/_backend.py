"""Kernel backend selection.

The compiled ``_kernels`` extension is used when it was built; otherwise the
numpy fallback is used.  Setting ``QBILSTM_PURE_PYTHON=1`` forces the fallback.
"""

import importlib
import logging
import os

logger = logging.getLogger(__name__)

BACKENDS = ("cython", "python")


def load_backend(name: str):
    """Return the kernel module for ``name`` ("cython" or "python")."""
    if name == "cython":
        return importlib.import_module("qbilstm._kernels")
    if name == "python":
        return importlib.import_module("qbilstm._fallback")
    raise ValueError(f"unknown backend {name!r}, expected one of {BACKENDS}")


def available_backends() -> list[str]:
    names = []
    for name in BACKENDS:
        try:
            load_backend(name)
        except ImportError:
            continue
        names.append(name)
    return names


def _select():
    if os.environ.get("QBILSTM_PURE_PYTHON", "") not in ("", "0"):
        return "python", load_backend("python")
    try:
        return "cython", load_backend("cython")
    except ImportError:
        logger.debug("compiled kernels unavailable, using numpy fallback")
        return "python", load_backend("python")


BACKEND, kernels = _select()
