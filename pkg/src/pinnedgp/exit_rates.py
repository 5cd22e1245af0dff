"""Small-step barrier-crossing rates of the bridge.

For a step from x_n (at T_n) to y (at T_n + eps) with barrier value U at T_n,
the upper crossing rate is

    I_U = inf_{0<t<1} [(U - x_n)(1 - beta_t) + beta_t (U - y)]^2 / (2 k_Y(t, t))

with beta and k_Y the limit objects of :class:`BridgeAsymptotics`; the lower
rate mirrors it and the two-sided rate is the smaller of the two. The infimum
is found by a 401-point scan of [1e-4, 1 - 1e-4] followed by golden-section
refinement around the best grid cell.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .asymptotics import BridgeAsymptotics
from .errors import DegenerateConditioningError, DomainError, InvalidStartError, ParameterError, UnsupportedFamilyError
from .kernels import KernelSpec

N_SCAN = 401
DELTA = 1e-4
T_TOL = 1e-10
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
# margin on the per-cell variance bound used for pruning
_KMAX_MARGIN = 1.01
# rows per block in batched evaluation (bounds the (rows, N_SCAN) scratch matrix)
BLOCK = 16384


@dataclass(frozen=True)
class ExitProblem:
    """One step of the walk: start x_n, end y, barrier values at the step start."""

    ba: BridgeAsymptotics
    x_n: float
    y: float
    upper: Optional[float] = None
    lower: Optional[float] = None

    def __post_init__(self):
        if self.upper is None and self.lower is None:
            raise ParameterError("at least one barrier is required")
        if self.upper is not None and self.lower is not None and self.lower > self.upper:
            raise ParameterError("lower barrier lies above the upper barrier")


class RateProfile:
    """beta_t and k_Y(t,t) tabulated on the scan grid, with a batched minimizer.

    Args:
        ba: limit objects for the step.
        n_scan: number of scan points.
        delta: endpoint margin of the scan interval.
    """

    def __init__(self, ba: BridgeAsymptotics, n_scan: int = N_SCAN, delta: float = DELTA):
        self.ba = ba
        self.t = np.linspace(delta, 1.0 - delta, n_scan)
        self.beta = np.asarray(ba.bar_beta(self.t), dtype=float)
        self.kyy = np.asarray(ba.bar_k_Y_diag(self.t), dtype=float)
        if np.any(self.kyy <= 0):
            raise DegenerateConditioningError("bridge variance is not positive inside (0, 1)")
        s = 1.0 / np.sqrt(2.0 * self.kyy)
        # rows (1-beta)/sqrt(2k) and beta/sqrt(2k): the objective is (A u + B v)^2
        self.uv = np.stack([(1.0 - self.beta) * s, self.beta * s])
        self._sqrt2k = np.sqrt(2.0 * self.kyy)
        # pruning needs a monotone beta within [0, 1]
        self.monotone_beta = bool(np.all(np.diff(self.beta) >= 0) and self.beta[0] >= 0 and self.beta[-1] <= 1)
        # upper bound of k_Y(t,t) on each scan cell, for pruning
        sub = np.linspace(0.0, 1.0, 17)
        tt = self.t[:-1, None] + sub[None, :] * np.diff(self.t)[:, None]
        self.kmax_cell = _KMAX_MARGIN * np.max(np.asarray(ba.bar_k_Y_diag(tt), dtype=float), axis=1)

    def objective(self, A, B, t):
        beta = np.asarray(self.ba.bar_beta(t), dtype=float)
        k = np.asarray(self.ba.bar_k_Y_diag(t), dtype=float)
        num = (A * (1.0 - beta) + B * beta) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(k > 0, num / (2.0 * k), np.inf)

    def scan(self, A, B):
        """Grid values sqrt-objective (signed) for each (A, B) pair, shape (P, n_scan)."""
        return np.stack([A, B], axis=1) @ self.uv

    def _golden(self, A, B, lo, hi, tol: float = T_TOL):
        a, b = lo.copy(), hi.copy()
        c = b - _INVPHI * (b - a)
        d = a + _INVPHI * (b - a)
        fc = self.objective(A, B, c)
        fd = self.objective(A, B, d)
        while np.max(b - a) > tol:
            left = fc < fd
            a, b = np.where(left, a, c), np.where(left, d, b)
            c_new = np.where(left, b - _INVPHI * (b - a), d)
            d_new = np.where(left, c, a + _INVPHI * (b - a))
            x = np.where(left, c_new, d_new)
            fx = self.objective(A, B, x)
            fc, fd = np.where(left, fx, fd), np.where(left, fc, fx)
            c, d = c_new, d_new
        mid = (a + b) / 2
        return np.minimum(np.minimum(fc, fd), self.objective(A, B, mid))

    def _bracket(self, idx):
        n = self.t.size
        return self.t[np.maximum(idx - 1, 0)], self.t[np.minimum(idx + 1, n - 1)]

    def minimize(self, A, B) -> np.ndarray:
        """Infimum over t of the objective for each pair (A_i, B_i)."""
        A = np.atleast_1d(np.asarray(A, dtype=float))
        B = np.atleast_1d(np.asarray(B, dtype=float))
        G = self.scan(A, B) ** 2
        idx = np.argmin(G, axis=1)
        gmin = G[np.arange(A.size), idx]
        lo, hi = self._bracket(idx)
        return np.minimum(gmin, self._golden(A, B, lo, hi))

    def below(self, A, B, threshold) -> np.ndarray:
        """Boolean mask of minimize(A, B) < threshold for A, B > 0, refining only undecided pairs.

        The scan value bounds the minimum from above; a per-cell bound of the
        bracket bounds it from below. Golden refinement runs only when the
        threshold falls between the two.
        """
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        threshold = np.asarray(threshold, dtype=float)
        M = np.abs(self.scan(A, B))
        rows = np.arange(A.size)
        idx = np.argmin(M, axis=1)
        gmin = M[rows, idx] ** 2
        out = gmin < threshold
        open_ = ~out
        if self.monotone_beta:
            n = self.t.size
            lb = np.full(A.size, np.inf)
            for j in (np.maximum(idx - 1, 0), np.minimum(idx, n - 2)):
                # numerators at the cell ends; monotone beta keeps them between these
                n0 = M[rows, j] * self._sqrt2k[j]
                n1 = M[rows, j + 1] * self._sqrt2k[j + 1]
                lb = np.minimum(lb, np.minimum(n0, n1) ** 2 / (2.0 * self.kmax_cell[j]))
            open_ &= lb < threshold
        if np.any(open_):
            lo, hi = self._bracket(idx[open_])
            val = np.minimum(gmin[open_], self._golden(A[open_], B[open_], lo, hi))
            out[open_] = val < threshold[open_]
        return out


def rate_profile(ba: BridgeAsymptotics) -> RateProfile:
    """Cached :class:`RateProfile` for ``ba``."""
    prof = getattr(ba, "_rate_profile", None)
    if prof is None:
        prof = RateProfile(ba)
        ba._rate_profile = prof
    return prof


def _one_sided(ba: BridgeAsymptotics, A: float, B: float) -> float:
    if B <= 0:
        return 0.0
    return float(rate_profile(ba).minimize(A, B)[0])


def rate_upper(ep: ExitProblem) -> float:
    """Upper-barrier crossing rate of the bridge.

    Raises:
        InvalidStartError: if x_n >= U.
    """
    if ep.upper is None:
        raise ParameterError("no upper barrier")
    if ep.x_n >= ep.upper:
        raise InvalidStartError(f"start {ep.x_n} is not below the upper barrier {ep.upper}")
    return _one_sided(ep.ba, ep.upper - ep.x_n, ep.upper - ep.y)


def rate_lower(ep: ExitProblem) -> float:
    """Lower-barrier crossing rate of the bridge.

    Raises:
        InvalidStartError: if x_n <= L.
    """
    if ep.lower is None:
        raise ParameterError("no lower barrier")
    if ep.x_n <= ep.lower:
        raise InvalidStartError(f"start {ep.x_n} is not above the lower barrier {ep.lower}")
    return _one_sided(ep.ba, ep.x_n - ep.lower, ep.y - ep.lower)


def rate_double(ep: ExitProblem) -> float:
    """min(rate_lower, rate_upper); zero when y is already outside (L, U)."""
    if ep.upper is None or ep.lower is None:
        raise ParameterError("both barriers are required")
    return min(rate_lower(ep), rate_upper(ep))


def closed_g(spec: KernelSpec, a: float, x: float, y: float) -> float:
    """Closed-form rate for Brownian motion and integrated Brownian motion.

    Args:
        spec: fBm with H = 1/2, or an integrated Brownian motion.
        a: barrier level; x and y must lie strictly on the same side of it.
        x, y: step start and end values.

    Returns:
        2 (a-x)(a-y) for Brownian motion, 3/2 (sqrt|a-x| + sqrt|a-y|)^4 for
        integrated Brownian motion.
    """
    if not ((x < a and y < a) or (x > a and y > a)):
        raise DomainError("x and y must lie strictly on the same side of the barrier")
    if spec.is_brownian:
        return 2.0 * (a - x) * (a - y)
    if spec.is_integrated_brownian:
        return 1.5 * (math.sqrt(abs(a - x)) + math.sqrt(abs(a - y))) ** 4
    raise UnsupportedFamilyError(f"no closed-form rate for {spec.describe()}")


class StepRates:
    """Batched one-sided rate decisions for the Monte Carlo walk.

    Uses the closed forms for Brownian and integrated Brownian motion and the
    scan-plus-golden minimizer otherwise.
    """

    def __init__(self, ba: BridgeAsymptotics, use_closed_form: bool = True):
        spec = ba.spec
        self.closed = None
        if use_closed_form and spec.is_brownian:
            self.closed = lambda A, B: 2.0 * A * B
        elif use_closed_form and spec.is_integrated_brownian:
            self.closed = lambda A, B: 1.5 * (np.sqrt(A) + np.sqrt(B)) ** 4
        self.profile = None if self.closed is not None else rate_profile(ba)

    def rates(self, A, B) -> np.ndarray:
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        if self.closed is not None:
            return self.closed(A, B)
        out = np.empty(A.size)
        for i in range(0, A.size, BLOCK):
            out[i:i + BLOCK] = self.profile.minimize(A[i:i + BLOCK], B[i:i + BLOCK])
        return out

    def below(self, A, B, threshold) -> np.ndarray:
        """rates(A, B) < threshold, elementwise (A, B > 0)."""
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        threshold = np.broadcast_to(np.asarray(threshold, dtype=float), A.shape)
        if self.closed is not None:
            return self.closed(A, B) < threshold
        out = np.empty(A.size, dtype=bool)
        for i in range(0, A.size, BLOCK):
            sl = slice(i, i + BLOCK)
            out[sl] = self.profile.below(A[sl], B[sl], threshold[sl])
        return out
