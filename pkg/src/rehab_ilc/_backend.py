"""Select the compiled kernels when available, else the numpy fallback.

Set ``REHAB_ILC_BACKEND`` to ``python`` or ``cython`` to force a choice.
"""
import importlib
import logging
import os

log = logging.getLogger(__name__)

_MODULES = {"cython": "rehab_ilc._ckernels", "python": "rehab_ilc._pykernels"}


def load(name):
    return importlib.import_module(_MODULES[name])


def available():
    names = ["python"]
    try:
        load("cython")
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names


def _select():
    forced = os.environ.get("REHAB_ILC_BACKEND", "").strip().lower()
    if forced:
        if forced not in _MODULES:
            raise ImportError(f"unknown REHAB_ILC_BACKEND {forced!r}")
        return forced, load(forced)
    try:
        return "cython", load("cython")
    except ImportError:
        log.info("compiled kernels unavailable, using numpy fallback")
        return "python", load("python")


BACKEND, kernels = _select()
