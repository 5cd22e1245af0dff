"""Cholesky factorization with a diagonal jitter ladder."""
from __future__ import annotations

import logging

import numpy as np
import scipy.linalg as la

from .errors import FactorizationError

log = logging.getLogger(__name__)

JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)


def jitter_cholesky(A: np.ndarray, ladder=JITTER_LADDER):
    """Lower Cholesky factor of a symmetric PSD matrix, adding jitter if needed.

    Jitter levels are multiples of trace(A)/dim, tried in order.

    Returns:
        (L, jitter) with L @ L.T == A + jitter * I.

    Raises:
        FactorizationError: when every level of the ladder fails.
    """
    A = np.asarray(A, dtype=float)
    dim = A.shape[0]
    if dim == 0:
        return np.zeros((0, 0)), 0.0
    scale = np.trace(A) / dim
    for level in ladder:
        jitter = level * scale
        try:
            L = la.cholesky(A + jitter * np.eye(dim), lower=True)
        except la.LinAlgError:
            continue
        if jitter > 0:
            log.info("cholesky needed jitter %.3g (%.0e x mean diagonal)", jitter, level)
        return L, jitter
    raise FactorizationError(
        f"matrix of size {dim} is not positive definite even with jitter {ladder[-1]:.0e} x trace/dim"
    )
