"""Gaussian processes conditioned on exact past observations ("pins").

Two independent routes are provided. :class:`ConditionedKernel` applies the
pin-by-pin recursion

    alpha_j(t) = k_{j-1}(t, T_j) / k_{j-1}(T_j, T_j)
    k_j(t, s)  = k_{j-1}(t, s) - alpha_j(t) k_{j-1}(s, T_j)

with the pin-level quantities memoized at construction. :func:`cond_cov_matrix`
and :func:`cond_mean` use the Schur complement on a Cholesky factor instead;
in a disagreement the Schur route is the reference.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Sequence, Tuple

import mpmath
import numpy as np
import scipy.linalg as la

from .errors import DegenerateConditioningError, DomainError, ParameterError
from .kernels import KernelSpec, eval_cov, gram
from .linalg import jitter_cholesky

DEGENERACY_TOL = 1e-14


@dataclass(frozen=True)
class Observations:
    """Past pins T_1 < ... < T_n (all > 0) with observed values x_1..x_n."""

    times: Tuple[float, ...] = ()
    values: Tuple[float, ...] = ()

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        values = tuple(float(x) for x in self.values)
        if len(times) != len(values):
            raise ParameterError("observation times and values differ in length")
        if any(t <= 0 for t in times):
            raise ParameterError("observation times must be positive")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ParameterError("observation times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return len(self.times)

    @property
    def last_time(self) -> float:
        """T_n, or 0 for the unconditioned process (which starts at 0)."""
        return self.times[-1] if self.times else 0.0

    @property
    def last_value(self) -> float:
        return self.values[-1] if self.values else 0.0


class ConditionedKernel:
    """Covariance and mean of the n-fold conditioned process X^n.

    Args:
        spec: kernel of the unconditioned process.
        obs: the pins.
        mp_dps: when given, all arithmetic runs in mpmath at this many decimal
            digits (numpy object arrays); otherwise float64.

    Raises:
        DegenerateConditioningError: if some pivot k_{j-1}(T_j, T_j) is not
            above 1e-14 * k(T_j, T_j).
    """

    def __init__(self, spec: KernelSpec, obs: Observations, mp_dps: int | None = None):
        self.spec = spec
        self.obs = obs
        self.mp_dps = mp_dps
        n = obs.n
        with self._precision():
            T = self.convert(obs.times)
            K = eval_cov(spec, T[:, None], T[None, :]) if n else self.convert([]).reshape(0, 0)
            self._T = T
            rows, pivots = [], []
            M = K.copy()
            for j in range(n):
                piv = M[j, j]
                if not piv > DEGENERACY_TOL * K[j, j]:
                    raise DegenerateConditioningError(
                        f"conditional variance at pin {j + 1} (T={obs.times[j]}) vanished: {float(piv):.3e}"
                    )
                row = M[j].copy()
                rows.append(row)
                pivots.append(piv)
                M = M - row[:, None] * row[None, :] / piv
            # rows[j][l] = k_j(T_{j+1}, T_l), pivots[j] = k_j(T_{j+1}, T_{j+1})
            self._rows = rows
            self._pivots = pivots
            # innovations r_j = x_j - m_{j-1}(T_j) drive the recursive mean
            X = self.convert(obs.values)
            mean_at_pins = X * 0
            innov = []
            for j in range(n):
                r = X[j] - mean_at_pins[j]
                innov.append(r)
                mean_at_pins = mean_at_pins + rows[j] / pivots[j] * r
            self._innov = innov

    @contextlib.contextmanager
    def _precision(self):
        if self.mp_dps is None:
            yield
        else:
            with mpmath.workdps(self.mp_dps):
                yield

    def convert(self, x):
        """Array of x in this kernel's working precision."""
        if self.mp_dps is None:
            return np.asarray(x, dtype=float)
        arr = np.asarray(x, dtype=object)
        with mpmath.workdps(self.mp_dps):
            return np.vectorize(mpmath.mpf, otypes=[object])(arr) if arr.size else arr.astype(object)

    @property
    def n(self) -> int:
        return self.obs.n

    @property
    def pivots(self):
        """k_{j-1}(T_j, T_j) for j = 1..n."""
        return list(self._pivots)

    def pin_alpha(self, j: int):
        """Vector alpha_j(T_l), l = 1..n (1-based j)."""
        return self._rows[j - 1] / self._pivots[j - 1]

    def _alphas(self, points, upto: int | None = None):
        """Matrix A with A[p, j-1] = alpha_j(points[p]) for j = 1..upto."""
        n = self.n if upto is None else upto
        P = points.shape[0]
        if n == 0:
            return self.convert(np.zeros((P, 0)))
        R = eval_cov(self.spec, points[:, None], self._T[None, :])
        cols = []
        for j in range(n):
            a = R[:, j] / self._pivots[j]
            cols.append(a)
            R = R - a[:, None] * self._rows[j][None, :]
        return np.stack(cols, axis=1)

    def _points(self, t):
        pts = self.convert(np.atleast_1d(t)).ravel()
        if np.any(pts < 0):
            raise DomainError("times must be nonnegative")
        return pts

    def alpha_j(self, j: int, t):
        """alpha_j(t) for 1 <= j <= n."""
        if not 1 <= j <= self.n:
            raise ParameterError(f"pin index must be in 1..{self.n}, got {j}")
        with self._precision():
            pts = self._points(t)
            out = self._alphas(pts, upto=j)[:, j - 1]
        return out[0] if np.ndim(t) == 0 else out.reshape(np.shape(t))

    def partial_cov_matrix(self, j: int, points) -> np.ndarray:
        """[k_j(p, q)] for the process conditioned on the first j pins only."""
        with self._precision():
            pts = self._points(points)
            K = eval_cov(self.spec, pts[:, None], pts[None, :])
            if j == 0:
                return K
            A = self._alphas(pts, upto=j)
            piv = np.array(self._pivots[:j], dtype=A.dtype)
            return K - ((A * piv)[:, None, :] * A[None, :, :]).sum(axis=-1)

    def cov_matrix(self, points) -> np.ndarray:
        """[k_n(p, q)] over a set of points."""
        return self.partial_cov_matrix(self.n, points)

    def cov(self, t, s):
        """k_n(t, s) for scalar t and s."""
        M = self.cov_matrix([t, s])
        return M[0, 1]

    def mean(self, t):
        """E[X^n_t], iterating the pin-by-pin mean update."""
        with self._precision():
            pts = self._points(t)
            if self.n == 0:
                out = pts * 0
            else:
                A = self._alphas(pts)
                innov = np.array(self._innov, dtype=A.dtype)
                out = (A * innov).sum(axis=1)
        return out[0] if np.ndim(t) == 0 else out.reshape(np.shape(t))


def alpha_j(ck: ConditionedKernel, j: int, t):
    return ck.alpha_j(j, t)


def cond_cov(ck: ConditionedKernel, t, s):
    return ck.cov(t, s)


def _schur_parts(spec: KernelSpec, obs: Observations, grid):
    grid = np.asarray(grid, dtype=float)
    T = np.asarray(obs.times, dtype=float)
    L, _ = jitter_cholesky(gram(spec, T))
    K_Tg = eval_cov(spec, T[:, None], grid[None, :])
    V = la.solve_triangular(L, K_Tg, lower=True)
    return grid, L, V


def cond_cov_matrix(spec: KernelSpec, obs: Observations, grid: Sequence[float]) -> np.ndarray:
    """K_gg - K_gT K_TT^{-1} K_Tg via a Cholesky factor of K_TT."""
    grid = np.asarray(grid, dtype=float)
    K_gg = gram(spec, grid)
    if obs.n == 0:
        return K_gg
    grid, _, V = _schur_parts(spec, obs, grid)
    return K_gg - V.T @ V


def cond_mean(spec: KernelSpec, obs: Observations, grid: Sequence[float]) -> np.ndarray:
    """K_gT K_TT^{-1} x on the grid."""
    grid = np.asarray(grid, dtype=float)
    if obs.n == 0:
        return np.zeros_like(grid)
    grid, L, V = _schur_parts(spec, obs, grid)
    w = la.solve_triangular(L, np.asarray(obs.values, dtype=float), lower=True)
    return V.T @ w
