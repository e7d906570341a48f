"""Selects the compiled SA kernels when they are built, the Python ones otherwise.

Set ``PROCRUSTES_EMBED_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _sa_python

BACKEND = "python"
sa_sweep = _sa_python.sa_sweep
wolff_sweep = _sa_python.wolff_sweep

if os.environ.get("PROCRUSTES_EMBED_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._sa_kernel import sa_sweep, wolff_sweep  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass

python_sa_sweep = _sa_python.sa_sweep
python_wolff_sweep = _sa_python.wolff_sweep

__all__ = ["BACKEND", "sa_sweep", "wolff_sweep", "python_sa_sweep", "python_wolff_sweep"]
