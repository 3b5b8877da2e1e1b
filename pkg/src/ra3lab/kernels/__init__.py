"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import from ``RA3LAB_BACKEND`` ("numba" or
"numpy"; default numba when importable) and can be switched explicitly with
:func:`use_backend`, which is how the equivalence tests and the benchmark
(`python -m ra3lab.bench`) compare the two paths. ``RA3LAB_THREADS`` caps the
numba threading layer.
"""

import os

from . import numpy_impl

_KERNELS = ("vi_backup", "vi_solve", "sample_latent_paths",
            "estep_accumulate", "sample_token_seqs")

_numba_impl = None
_backend = None


def _load_numba():
    global _numba_impl
    if _numba_impl is None:
        from . import numba_impl
        _numba_impl = numba_impl
    return _numba_impl


def available_backends():
    try:
        _load_numba()
        return ("numba", "numpy")
    except ImportError:
        return ("numpy",)


def use_backend(name):
    """Select the kernel backend ("numba" or "numpy") for this process."""
    global _backend
    if name == "numpy":
        _backend = numpy_impl
    elif name == "numba":
        _backend = _load_numba()
        threads = os.environ.get("RA3LAB_THREADS")
        if threads:
            import numba
            numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))
    else:
        raise ValueError(f"unknown backend {name!r}; expected 'numba' or 'numpy'")
    return _backend


def active_backend():
    return "numpy" if _backend is numpy_impl else "numba"


def _init():
    choice = os.environ.get("RA3LAB_BACKEND", "").strip().lower()
    if choice:
        use_backend(choice)
        return
    try:
        use_backend("numba")
    except ImportError:
        use_backend("numpy")


_init()


def __getattr__(name):
    if name in _KERNELS:
        return getattr(_backend, name)
    raise AttributeError(name)
