"""Exact Gaussian path sampling on time grids.

Two equivalent routes: :class:`PathSampler` factors the grid Gram matrix once
and maps standard normals through the factor, and :func:`sequential_step`
draws one point at a time from the exact conditional law given everything
visited so far, extending a Cholesky factor by one row per step.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .conditioning import Observations, cond_cov_matrix, cond_mean
from .errors import DegenerateConditioningError, DomainError, ParameterError
from .kernels import KernelSpec, eval_cov
from .linalg import JITTER_LADDER, jitter_cholesky

log = logging.getLogger(__name__)

DEGENERACY_REL = 1e-14


def path_rng(seed: int, path_id: int) -> np.random.Generator:
    """Independent generator for one path, determined by (seed, path_id) only."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(int(path_id),))))


class PathSampler:
    """Joint sampler of (X_t) on a grid, optionally conditioned on pins.

    Args:
        spec: process family.
        grid: strictly increasing positive times.
        seed: root seed of the per-path streams.
        obs: pins to condition on; all grid times must exceed the last pin.
        ladder: jitter ladder (multiples of trace/dim) for the factorization.
    """

    def __init__(self, spec: KernelSpec, grid, seed: int = 0, obs: Observations | None = None,
                 ladder=JITTER_LADDER):
        grid = np.asarray(grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0:
            raise ParameterError("grid must be a nonempty 1-d array")
        if np.any(np.diff(grid) <= 0):
            raise ParameterError("grid must be strictly increasing")
        if grid[0] < 0:
            raise DomainError("grid times must be nonnegative")
        self.spec = spec
        self.grid = grid
        self.seed = int(seed)
        self.obs = obs if obs is not None else Observations()
        if self.obs.n and grid[0] <= self.obs.last_time:
            raise ParameterError("grid must lie after the last pin")
        cov = cond_cov_matrix(spec, self.obs, grid)
        self.mean = cond_mean(spec, self.obs, grid)
        self.factor, self.jitter = jitter_cholesky(cov, ladder)
        if self.jitter:
            log.warning("sampler factorization needed jitter %.3e", self.jitter)
        self.cov = cov

    def factor_residual(self) -> float:
        """max |L L^T - K| / trace(K)."""
        L = self.factor
        return float(np.max(np.abs(L @ L.T - self.cov)) / max(np.trace(self.cov), 1e-300))

    def transform(self, Z) -> np.ndarray:
        """Map standard normals (rows) to paths."""
        return self.mean + np.asarray(Z) @ self.factor.T

    def sample_path(self, path_id: int = 0) -> np.ndarray:
        z = path_rng(self.seed, path_id).standard_normal(self.grid.size)
        return self.transform(z)

    def sample_paths(self, path_ids) -> np.ndarray:
        ids = np.atleast_1d(path_ids)
        Z = np.stack([path_rng(self.seed, i).standard_normal(self.grid.size) for i in ids])
        return self.transform(Z)


@dataclass
class SequentialState:
    """Visited (time, value) pairs and the Cholesky factor of their Gram matrix.

    ``w`` holds L^{-1} x so that conditional means are a single dot product.
    """

    spec: KernelSpec
    times: list = field(default_factory=list)
    values: list = field(default_factory=list)
    L: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    w: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def from_observations(cls, spec: KernelSpec, obs: Observations) -> "SequentialState":
        st = cls(spec)
        for t, x in zip(obs.times, obs.values):
            st.push(t, x)
        return st

    def conditional(self, t: float):
        """(mean, variance, new factor row) of X_t given the visited points."""
        k_tt = float(eval_cov(self.spec, t, t))
        if not self.times:
            return 0.0, k_tt, np.zeros(0)
        kv = eval_cov(self.spec, np.asarray(self.times), t)
        row = la.solve_triangular(self.L, kv, lower=True)
        return float(row @ self.w), k_tt - float(row @ row), row

    def push(self, t: float, x: float, cond=None):
        if self.times and t <= self.times[-1]:
            raise ParameterError("times must increase")
        mean, var, row = cond if cond is not None else self.conditional(t)
        k_tt = float(eval_cov(self.spec, t, t))
        if not var > DEGENERACY_REL * k_tt:
            raise DegenerateConditioningError(f"conditional variance {var:.3e} at t={t} vanished")
        d = np.sqrt(var)
        n = len(self.times)
        L = np.zeros((n + 1, n + 1))
        L[:n, :n] = self.L
        L[n, :n] = row
        L[n, n] = d
        self.L = L
        self.w = np.append(self.w, (x - mean) / d)
        self.times.append(float(t))
        self.values.append(float(x))


def sequential_step(st: SequentialState, next_time: float, z: float) -> float:
    """Draw X at ``next_time`` given all visited points, using the normal draw z.

    A degenerate conditional variance is clamped to 0 with a warning; the
    point then equals its conditional mean and is not added to the factor.
    """
    if st.times and next_time <= st.times[-1]:
        raise ParameterError("next_time must exceed all visited times")
    mean, var, row = st.conditional(next_time)
    k_tt = float(eval_cov(st.spec, next_time, next_time))
    if not var > DEGENERACY_REL * k_tt:
        warnings.warn(f"conditional variance {var:.3e} at t={next_time} is degenerate; clamped to 0", RuntimeWarning)
        return mean
    x = mean + np.sqrt(var) * z
    st.push(next_time, x, cond=(mean, var, row))
    return x
