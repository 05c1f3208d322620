"""Criterion kernels: compiled extension when built, numpy fallback otherwise.

Set ``DOSEOPT_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

REL_TOL = 1e-12
DET_FLOOR = 1e-300

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("DOSEOPT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def logdet_psd(M, rel_tol: float = REL_TOL, det_floor: float = DET_FLOOR) -> float:
    """log det of a symmetric PSD matrix via pivoted Cholesky; -inf if singular."""
    return float(_impl.logdet_psd(np.ascontiguousarray(M, dtype=float), rel_tol, det_floor))


def batch_criterion(G, W, probs, rel_tol: float = REL_TOL, det_floor: float = DET_FLOOR):
    return _impl.batch_criterion(
        np.ascontiguousarray(G, dtype=float),
        np.ascontiguousarray(W, dtype=float),
        np.ascontiguousarray(probs, dtype=float),
        rel_tol, det_floor)
