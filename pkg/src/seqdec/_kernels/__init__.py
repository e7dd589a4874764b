"""Hot loops: bounded dense simplex pivoting and tabular Q-learning.

The compiled extension is used when it was built; otherwise the numpy
implementation with identical semantics is loaded.  Set
``SEQDEC_PURE_PYTHON=1`` to force the fallback.
"""
import contextlib
import os
import sys

from . import _pykernels as python_backend

compiled_backend = None
if os.environ.get("SEQDEC_PURE_PYTHON") != "1":
    try:
        from . import _ckernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

simplex_iterate = backend.simplex_iterate
q_learning_loop = backend.q_learning_loop



@contextlib.contextmanager
def use_backend(name: str):
    """Temporarily route the kernels through ``"cython"`` or ``"python"``."""
    mod = sys.modules[__name__]
    if name == "python":
        chosen = python_backend
    elif name == "cython":
        if compiled_backend is None:
            raise RuntimeError("compiled kernels are not available")
        chosen = compiled_backend
    else:
        raise ValueError(f"unknown backend {name!r}")
    saved = (mod.simplex_iterate, mod.q_learning_loop)
    mod.simplex_iterate, mod.q_learning_loop = chosen.simplex_iterate, chosen.q_learning_loop
    try:
        yield chosen
    finally:
        mod.simplex_iterate, mod.q_learning_loop = saved


__all__ = ["use_backend", "BACKEND", "backend", "compiled_backend", "python_backend", "simplex_iterate", "q_learning_loop"]
