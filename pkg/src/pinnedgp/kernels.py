"""Closed-form covariance kernels for the supported Gaussian process families.

Every kernel is written with plain arithmetic so that it evaluates on floats,
numpy arrays and numpy object arrays holding ``mpmath.mpf`` values alike. The
extended-precision path is what the finite-epsilon oracles rely on.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, ParameterError, UnsupportedFamilyError


class Family(str, enum.Enum):
    FBM = "fbm"
    CHERIDITO = "cheridito"
    MFOLD_IBM = "mfold_ibm"
    INTEGRATED_FBM = "integrated_fbm"


@dataclass(frozen=True)
class KernelSpec:
    """A covariance family together with its parameters.

    Use the named constructors (:meth:`fbm`, :meth:`cheridito`,
    :meth:`mfold_ibm`, :meth:`integrated_fbm`) rather than the raw fields.
    """

    family: Family
    H: Optional[float] = None
    c: Optional[float] = None
    c_H: Optional[float] = None
    m: Optional[int] = None

    def __post_init__(self):
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        if fam in (Family.FBM, Family.CHERIDITO, Family.INTEGRATED_FBM):
            if self.H is None or not 0.0 < float(self.H) < 1.0:
                raise ParameterError(f"Hurst index must lie in (0, 1), got {self.H!r}")
        if fam is Family.CHERIDITO:
            if self.H == 0.5:
                raise ParameterError("Cheridito mixture requires H != 1/2")
            if not self.c or not self.c_H:
                raise ParameterError("Cheridito mixture requires nonzero c and c_H")
        if fam is Family.MFOLD_IBM:
            if self.m is None or int(self.m) != self.m or self.m < 1:
                raise ParameterError(f"m-fold integration count must be an integer >= 1, got {self.m!r}")
            object.__setattr__(self, "m", int(self.m))

    @classmethod
    def fbm(cls, H: float) -> "KernelSpec":
        return cls(Family.FBM, H=H)

    @classmethod
    def cheridito(cls, H: float, c: float, c_H: float) -> "KernelSpec":
        return cls(Family.CHERIDITO, H=H, c=c, c_H=c_H)

    @classmethod
    def mfold_ibm(cls, m: int) -> "KernelSpec":
        return cls(Family.MFOLD_IBM, m=m)

    @classmethod
    def integrated_fbm(cls, H: float) -> "KernelSpec":
        return cls(Family.INTEGRATED_FBM, H=H)

    @property
    def is_integrated(self) -> bool:
        return self.family in (Family.MFOLD_IBM, Family.INTEGRATED_FBM)

    @property
    def is_brownian(self) -> bool:
        """Standard Brownian motion (fBm with H = 1/2)."""
        return self.family is Family.FBM and self.H == 0.5

    @property
    def is_integrated_brownian(self) -> bool:
        """Integrated Brownian motion, reachable as m=1 or integrated fBm with H=1/2."""
        return (self.family is Family.MFOLD_IBM and self.m == 1) or (
            self.family is Family.INTEGRATED_FBM and self.H == 0.5
        )

    def describe(self) -> str:
        fam = self.family
        if fam is Family.FBM:
            return f"fbm(H={self.H})"
        if fam is Family.CHERIDITO:
            return f"cheridito(H={self.H}, c={self.c}, c_H={self.c_H})"
        if fam is Family.MFOLD_IBM:
            return f"mfold_ibm(m={self.m})"
        return f"integrated_fbm(H={self.H})"


def _is_array(*xs) -> bool:
    return any(isinstance(x, np.ndarray) for x in xs)


def _min(a, b):
    return np.minimum(a, b) if _is_array(a, b) else min(a, b)


def _check_times(t, s):
    if np.any(np.asarray(t) < 0) or np.any(np.asarray(s) < 0):
        raise DomainError("times must be nonnegative")


def _as_input(x):
    # lists/tuples become float arrays; mpf scalars and object arrays pass through
    if isinstance(x, (list, tuple)):
        return np.asarray(x, dtype=float)
    return x


def fbm_cov(H, t, s):
    """k_H(t,s) = (t^2H + s^2H - |t-s|^2H) / 2."""
    h2 = 2 * H
    return (t**h2 + s**h2 - abs(t - s) ** h2) / 2


def _poly_overlap(p: int, lo, hi):
    """Int_0^lo (lo - xi)^p (hi - xi)^p dxi for lo <= hi, by binomial expansion.

    With u = lo - xi the integrand is u^p (d + u)^p, d = hi - lo >= 0, so every
    term of the expansion is nonnegative and no cancellation occurs.
    """
    d = hi - lo
    total = 0
    for j in range(p + 1):
        total = total + math.comb(p, j) * d ** (p - j) * lo ** (p + j + 1) / (p + j + 1)
    return total


def mfold_cov(m: int, t, s):
    lo = _min(t, s)
    hi = t + s - lo
    return _poly_overlap(m, lo, hi) / math.factorial(m) ** 2


def integrated_fbm_cov(H, t, s):
    h1 = 2 * H + 1
    h2 = 2 * H + 2
    return (
        s * t**h1 / h1
        + t * s**h1 / h1
        - (t**h2 + s**h2 - abs(t - s) ** h2) / (h1 * h2)
    ) / 2


def eval_cov(spec: KernelSpec, t, s):
    """Covariance k(t, s) of the process described by ``spec``.

    Works elementwise on broadcastable arrays.
    """
    t, s = _as_input(t), _as_input(s)
    _check_times(t, s)
    fam = spec.family
    if fam is Family.FBM:
        return fbm_cov(spec.H, t, s)
    if fam is Family.CHERIDITO:
        return spec.c**2 * _min(t, s) + spec.c_H**2 * fbm_cov(spec.H, t, s)
    if fam is Family.MFOLD_IBM:
        return mfold_cov(spec.m, t, s)
    return integrated_fbm_cov(spec.H, t, s)


def eval_inner(spec: KernelSpec, t, s):
    """Covariance kappa(t, s) of the integrand of an integrated family."""
    t, s = _as_input(t), _as_input(s)
    _check_times(t, s)
    if spec.family is Family.MFOLD_IBM:
        lo = _min(t, s)
        hi = t + s - lo
        return _poly_overlap(spec.m - 1, lo, hi) / math.factorial(spec.m - 1) ** 2
    if spec.family is Family.INTEGRATED_FBM:
        return fbm_cov(spec.H, t, s)
    raise UnsupportedFamilyError(f"{spec.family.value} is not an integrated family")


def gram(spec: KernelSpec, times) -> np.ndarray:
    """Gram matrix [k(t_i, t_j)] on a set of times."""
    times = np.asarray(times, dtype=float)
    return eval_cov(spec, times[:, None], times[None, :])
