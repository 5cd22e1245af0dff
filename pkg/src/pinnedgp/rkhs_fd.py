"""Finite-dimensional surrogates for the reproducing-kernel rate functionals.

On a time grid, the squared RKHS norm of a path h is replaced by the quadratic
form h^T K^+ h with K the Gram matrix of the relevant kernel. Components of h
outside the range of K have infinite rate; here they raise OutOfSpaceError.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .asymptotics import BridgeAsymptotics
from .conditioning import Observations
from .errors import OutOfSpaceError, ParameterError
from .kernels import KernelSpec

EIG_CUTOFF = 1e-12
OUT_OF_SPACE_TOL = 1e-6


@dataclass
class GridRate:
    """Quadratic-form rate 1/2 h^T K^+ h on a fixed grid.

    Args:
        grid: time points.
        K: symmetric Gram matrix on ``grid``.
        regularization: ridge added to the diagonal before decomposition.
    """

    grid: np.ndarray
    K: np.ndarray
    regularization: float = 0.0
    _w: np.ndarray = field(init=False, repr=False)
    _V: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        K = np.asarray(self.K, dtype=float)
        if K.shape != (self.grid.size, self.grid.size):
            raise ParameterError("Gram matrix does not match the grid")
        K = (K + K.T) / 2
        self.K = K
        w, V = np.linalg.eigh(K + self.regularization * np.eye(K.shape[0]))
        keep = w > EIG_CUTOFF * max(w.max(), 0.0) if w.size else w > 0
        self._w = w[keep]
        self._V = V[:, keep]

    @classmethod
    def from_kernel(cls, kernel, grid, regularization: float = 0.0) -> "GridRate":
        """Build from a vectorized kernel function kernel(t, s)."""
        g = np.asarray(grid, dtype=float)
        return cls(g, kernel(g[:, None], g[None, :]), regularization)

    def pinv(self) -> np.ndarray:
        return (self._V / self._w) @ self._V.T

    def pinv_residual(self) -> float:
        """||K K^+ K - K|| / ||K||; small when the pseudo-inverse is trustworthy."""
        K = self.K
        return float(np.linalg.norm(K @ self.pinv() @ K - K) / max(np.linalg.norm(K), 1e-300))

    def rate(self, h) -> float:
        return rate_quadratic(self, h)


def rate_quadratic(gr: GridRate, h, atol: float = 0.0) -> float:
    """1/2 h^T K^+ h.

    Args:
        gr: factored Gram matrix.
        h: path values on the grid.
        atol: paths with norm at most this are treated as zero (rounding
            noise from a difference of nearly equal paths).

    Raises:
        OutOfSpaceError: if the part of h outside the numerical range of K
            has norm above max(1e-6 * ||h||, atol).
    """
    h = np.asarray(h, dtype=float)
    if h.shape != gr.grid.shape:
        raise ParameterError("h must have one value per grid point")
    hn = np.linalg.norm(h)
    if hn <= atol:
        return 0.0
    coef = gr._V.T @ h
    resid = np.linalg.norm(h - gr._V @ coef)
    if resid > max(OUT_OF_SPACE_TOL * hn, atol):
        raise OutOfSpaceError(f"path has a component of norm {resid:.3e} outside the kernel range")
    return 0.5 * float(np.sum(coef**2 / gr._w))


def spanned_path(ba: BridgeAsymptotics, grid, y: float, rng: np.random.Generator) -> np.ndarray:
    """Random h = x_n + K_n lam with the last weight chosen so that h(1) = y.

    The grid must end at 1.
    """
    g = np.asarray(grid, dtype=float)
    if g[-1] != 1.0:
        raise ParameterError("grid must end at 1")
    Kn = ba.bar_k_n(g[:, None], g[None, :])
    lam = rng.standard_normal(g.size)
    lam[-1] = 0.0
    lam[-1] = (y - ba.x_n - Kn[-1] @ lam) / Kn[-1, -1]
    return ba.x_n + Kn @ lam


def appendix_a_identity_check(spec: KernelSpec, obs: Observations, y: float, grid, h=None, rng=None) -> float:
    """Residual of the bridge-rate decomposition on a grid.

    Compares 1/2 (h - m)^T K_Y^+ (h - m), with m_t = x_n + beta_t (y - x_n),
    against 1/2 (h - x_n)^T K_n^+ (h - x_n) - (y - x_n)^2 / (2 k_n(1,1)).

    Args:
        spec, obs: define the limit kernels k_n, beta and k_Y.
        y: bridge end value.
        grid: times in [0, 1] containing 0 and 1.
        h: path on the grid with h(0) = x_n, h(1) = y; drawn at random from
            the span of the k_n rows when omitted.
        rng: generator used when h is omitted.

    Returns:
        Absolute difference between the two sides.
    """
    g = np.asarray(grid, dtype=float)
    if g[0] != 0.0 or g[-1] != 1.0:
        raise ParameterError("grid must contain 0 and 1 as endpoints")
    ba = BridgeAsymptotics(spec, obs)
    xn = ba.x_n
    if h is None:
        h = spanned_path(ba, g, y, rng if rng is not None else np.random.default_rng())
    h = np.asarray(h, dtype=float)
    Kn = GridRate.from_kernel(ba.bar_k_n, g)
    KY = GridRate.from_kernel(ba.bar_k_Y, g)
    m = xn + ba.bar_beta(g) * (y - xn)
    # differences below this are cancellation noise
    atol = 64 * np.finfo(float).eps * (np.linalg.norm(h) + np.linalg.norm(m))
    lhs = rate_quadratic(KY, h - m, atol=atol)
    rhs = rate_quadratic(Kn, h - xn) - (y - xn) ** 2 / (2 * float(ba.bar_k_n(1.0, 1.0)))
    return abs(lhs - rhs)
