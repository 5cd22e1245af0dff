"""Small-time asymptotics of the pinned process and of its bridge.

For a step of length eps starting at the last pin T_n, the conditioned process
X^n_{T_n + eps t} and its bridge Y^n (pinned again at T_n + eps) have
covariances that, suitably rescaled, converge to the limits computed here:

* ``bar_k_n``  -- limit covariance of X^n, scale eps^p (``process_exp``)
* ``bar_beta`` -- limit of the bridge interpolation weight
* ``bar_k_Y``  -- limit covariance of the bridge, scale eps^q (``bridge_exp``)

Fractional families use the first-order theory. Integrated families degenerate
at first order (the limit of X^n is a random straight line), so their bridge
uses refined expansions of the inner kernel; :func:`expansion_coeffs` builds
those coefficient tables, and :func:`finite_eps_bridge_cov_oracle` evaluates
the exact finite-eps bridge covariance in extended precision to check them.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import List

import mpmath
import numpy as np

from .conditioning import DEGENERACY_TOL, ConditionedKernel, Observations
from .errors import DegenerateConditioningError, ParameterError, UnsupportedFamilyError
from .kernels import Family, KernelSpec, eval_inner, fbm_cov

ORACLE_EPS_FLOOR = 1e-6


@dataclass(frozen=True)
class SpeedExponents:
    """Inverse-speed exponents: gamma_eps^2 = eps^process_exp, eta_eps^2 = eps^bridge_exp."""

    process_exp: float
    bridge_exp: float


def speed_exponents(spec: KernelSpec) -> SpeedExponents:
    fam = spec.family
    if fam is Family.FBM:
        return SpeedExponents(2 * spec.H, 2 * spec.H)
    if fam is Family.CHERIDITO:
        h = min(spec.H, 0.5)
        return SpeedExponents(2 * h, 2 * h)
    if fam is Family.MFOLD_IBM:
        return SpeedExponents(2.0, 3.0 if spec.m == 1 else 4.0)
    return SpeedExponents(2.0, 2.0 + 2.0 * spec.H)


def _routed(spec: KernelSpec) -> KernelSpec:
    # once-integrated Brownian motion is handled as integrated fBm with H = 1/2
    if spec.family is Family.MFOLD_IBM and spec.m == 1:
        return KernelSpec.integrated_fbm(0.5)
    return spec


def _shifted_poly_integral(p: int, q: int, Tn, T):
    """Int_0^T (Tn - x)^p (T - x)^q dx for integers p, q >= 0 and T <= Tn."""
    D = Tn - T
    total = 0.0
    for i in range(p + 1):
        total = total + math.comb(p, i) * D ** (p - i) * T ** (q + i + 1) / (q + i + 1)
    return total


def phi_bar_integrated_fbm(H: float, t, s):
    """Second-order bridge kernel of integrated fBm; independent of the past."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if H == 0.5:
        lo = np.minimum(t, s)
        return lo**3 / 3 + lo**2 * np.abs(t - s) / 2
    p = 2 * H + 2
    return (np.abs(t - s) ** p - t**p - s**p) / (2 * (2 * H + 1) * (2 * H + 2))


def _bridge_combo(phi, t, s):
    """phi(t,s) + t s phi(1,1) - t phi(1,s) - s phi(t,1)."""
    return phi(t, s) + t * s * phi(1.0, 1.0) - t * phi(1.0, s) - s * phi(t, 1.0)


@dataclass
class ExpansionCoefficients:
    """Refined expansion of an integrated family around T_n, plus its conditioned versions.

    Unconditioned pieces (all depending on T_n):

        kappa(T_n+eps u, T_n+eps v) = a2 + eps e (u+v) + eps^(1+alpha') g_hat(u,v) + ...
        int_0^T kappa(T_n+eps u, v) dv = c(T) + eps u f(T) + eps^(1+alpha') g_tilde(u;T) + ...

    so that the increment covariance of X is
    eps^2 [a2 ts + b (t^2 s + t s^2) eps + phi_bar(t,s) eps^(1+alpha') + ...] with
    b = e/2, and k(T_n+eps t, T) - k(T_n, T) = eps [c t + d t^2 eps + psi_bar(t;T) eps^(1+alpha') + ...]
    with d = f/2. Here alpha' = alpha - 1 for ``part == 1`` (no separate linear
    term) and alpha' = alpha for ``part == 2``.

    Conditioned pieces follow the pin recursions; ``c_piv[j-1]`` is
    c_{j-1}(T_j), and likewise for ``d_piv`` and ``G_piv`` (the t^3 / 3
    coefficient of psi_bar_{j-1}(t; T_j)).
    """

    spec: KernelSpec
    T_n: float
    alpha: float
    part: int
    a2: float
    e: float
    pivots: List[float] = field(default_factory=list)
    c_piv: List[float] = field(default_factory=list)
    d_piv: List[float] = field(default_factory=list)
    G_piv: List[float] = field(default_factory=list)

    @property
    def b(self) -> float:
        return self.e / 2

    # -- unconditioned closed forms -------------------------------------------------
    def _norm(self) -> float:
        return 1.0 / math.factorial(self.spec.m - 1) ** 2

    def c(self, T):
        """int_0^T kappa(T_n, v) dv (the linear coefficient of the kernel increment)."""
        Tn = self.T_n
        if self.spec.family is Family.MFOLD_IBM:
            m = self.spec.m
            return self._norm() / m * _shifted_poly_integral(m - 1, m, Tn, T)
        H = self.spec.H
        h1 = 2 * H + 1
        return 0.5 * (Tn ** (2 * H) * T + (T**h1 + (Tn - T) ** h1 - Tn**h1) / h1)

    def f(self, T):
        """Coefficient of eps u in int_0^T kappa(T_n + eps u, v) dv."""
        Tn = self.T_n
        if self.spec.family is Family.MFOLD_IBM:
            m = self.spec.m
            return self._norm() * (m - 1) / m * _shifted_poly_integral(m - 2, m, Tn, T)
        H = self.spec.H
        return H * Tn ** (2 * H - 1) * T - 0.5 * Tn ** (2 * H) + 0.5 * (Tn - T) ** (2 * H)

    def d(self, T):
        return self.f(T) / 2

    def G(self, T):
        """Coefficient of u^2 in g_tilde(u; T); zero for integrated fBm."""
        if self.spec.family is Family.MFOLD_IBM and self.spec.m >= 3:
            m = self.spec.m
            return self._norm() * (m - 1) * (m - 2) / (2 * m) * _shifted_poly_integral(m - 3, m, self.T_n, T)
        return 0.0

    def g_hat(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.spec.family is Family.MFOLD_IBM:
            m = self.spec.m
            C = self._norm() * (m - 1) / (2 * m - 3) * self.T_n ** (2 * m - 3)
            return C * ((m - 2) / 2 * (u + v) ** 2 + u * v)
        if self.spec.H == 0.5:
            return np.minimum(u, v)
        return -0.5 * np.abs(u - v) ** (2 * self.spec.H)

    def g_tilde(self, u, T):
        return self.G(T) * np.asarray(u, dtype=float) ** 2

    def phi_bar(self, t, s):
        """Double integral of g_hat over [0,t] x [0,s]."""
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        if self.spec.family is Family.MFOLD_IBM:
            m = self.spec.m
            C = self._norm() * (m - 1) / (2 * m - 3) * self.T_n ** (2 * m - 3)
            return C * ((m - 2) / 2 * (t**3 * s / 3 + t**2 * s**2 / 2 + t * s**3 / 3) + t**2 * s**2 / 4)
        return phi_bar_integrated_fbm(self.spec.H, t, s)

    def psi_bar(self, t, T):
        return self.G(T) * np.asarray(t, dtype=float) ** 3 / 3

    # -- conditioned versions ----------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.pivots)

    def a2_j(self, j: int) -> float:
        return self.a2 - sum(self.c_piv[l] ** 2 / self.pivots[l] for l in range(j))

    def b_j(self, j: int) -> float:
        return self.b - sum(self.c_piv[l] * self.d_piv[l] / self.pivots[l] for l in range(j))

    @property
    def a2_n(self) -> float:
        return self.a2_j(self.n)

    @property
    def b_n(self) -> float:
        return self.b_j(self.n)

    def phi_bar_j(self, j: int, t, s):
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        out = self.phi_bar(t, s)
        for l in range(j):
            w = self.c_piv[l] / self.pivots[l]
            G = self.G_piv[l]
            out = out - w * (G * t**3 / 3 * s + G * s**3 / 3 * t)
            if self.part == 2 and self.alpha == 1:
                out = out - self.d_piv[l] ** 2 / self.pivots[l] * t**2 * s**2
        return out

    def phi_bar_n(self, t, s):
        return self.phi_bar_j(self.n, t, s)

    # -- order-eps^2 expansions, used for residual checks ------------------------
    def kappa_exact(self, u, v, eps):
        Tn = self.T_n
        return eval_inner(self.spec, Tn + eps * np.asarray(u, dtype=float), Tn + eps * np.asarray(v, dtype=float))

    def kappa_expansion(self, u, v, eps):
        """kappa(T_n + eps u, T_n + eps v) through order eps^2."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        first = self.a2 + self.e * (u + v) * eps
        if self.spec.family is Family.MFOLD_IBM:
            return first + self.g_hat(u, v) * eps**2
        H = self.spec.H
        Tn = self.T_n
        return (
            first
            - 0.5 * np.abs(u - v) ** (2 * H) * eps ** (2 * H)
            + H * (2 * H - 1) / 2 * Tn ** (2 * H - 2) * (u**2 + v**2) * eps**2
        )

    def kappa_integral_exact(self, u, T, eps):
        """int_0^T kappa(T_n + eps u, v) dv for T <= T_n, in closed form."""
        tau = self.T_n + eps * np.asarray(u, dtype=float)
        if self.spec.family is Family.MFOLD_IBM:
            m = self.spec.m
            return self._norm() / m * _shifted_poly_integral(m - 1, m, tau, T)
        H = self.spec.H
        h1 = 2 * H + 1
        return 0.5 * (tau ** (2 * H) * T + (T**h1 + (tau - T) ** h1 - tau**h1) / h1)

    def kappa_integral_expansion(self, u, T, eps):
        """int_0^T kappa(T_n + eps u, v) dv through order eps^2 (T < T_n for integrated fBm)."""
        u = np.asarray(u, dtype=float)
        first = self.c(T) + eps * u * self.f(T)
        if self.spec.family is Family.MFOLD_IBM:
            return first + eps**2 * u**2 * self.G(T)
        H = self.spec.H
        Tn = self.T_n
        Q = 0.5 * H * (2 * H - 1) * T * Tn ** (2 * H - 2) - 0.5 * H * (Tn ** (2 * H - 1) - (Tn - T) ** (2 * H - 1))
        return first + eps**2 * u**2 * Q


def _refined_alpha(spec: KernelSpec):
    """(alpha, part) of the refined expansion for an integrated family."""
    if spec.family is Family.MFOLD_IBM:
        return 1.0, 2
    H = spec.H
    if H < 0.5:
        return 2 * H, 1
    if H == 0.5:
        return 1.0, 1
    return 2 * H - 1, 2


def _pin_recursion(ck: ConditionedKernel, values0) -> list:
    """Values f_{j-1}(T_j), j=1..n, for f_j(T) = f_{j-1}(T) - alpha_j(T) f_{j-1}(T_j)."""
    v = np.asarray(values0, dtype=float)
    out = []
    for j in range(1, ck.n + 1):
        out.append(float(v[j - 1]))
        v = v - ck.pin_alpha(j) * v[j - 1]
    return out


def expansion_coeffs(spec: KernelSpec, obs: Observations) -> ExpansionCoefficients:
    """Refined expansion coefficients (and their conditioned versions) at T_n.

    Raises:
        UnsupportedFamilyError: for fBm and the Cheridito mixture.
        DegenerateConditioningError: if there is no pin (T_n must be positive).
    """
    if not spec.is_integrated:
        raise UnsupportedFamilyError(f"no refined expansion for {spec.family.value}")
    if obs.n == 0:
        raise DegenerateConditioningError("integrated families need at least one pin (T_n > 0)")
    spec = _routed(spec)
    alpha, part = _refined_alpha(spec)
    Tn = obs.last_time
    if spec.family is Family.MFOLD_IBM:
        m = spec.m
        norm = 1.0 / math.factorial(m - 1) ** 2
        a2 = norm * Tn ** (2 * m - 1) / (2 * m - 1)
        e = norm * Tn ** (2 * m - 2) / 2
    else:
        H = spec.H
        a2 = Tn ** (2 * H)
        e = H * Tn ** (2 * H - 1)
    co = ExpansionCoefficients(spec=spec, T_n=Tn, alpha=alpha, part=part, a2=a2, e=e)
    ck = ConditionedKernel(spec, obs)
    T = np.asarray(obs.times)
    co.pivots = [float(p) for p in ck.pivots]
    co.c_piv = _pin_recursion(ck, [co.c(t) for t in T])
    co.d_piv = _pin_recursion(ck, [co.d(t) for t in T])
    co.G_piv = _pin_recursion(ck, [co.G(t) for t in T])
    return co


class BridgeAsymptotics:
    """Limit objects for one step of length eps after the last pin.

    Args:
        spec: process family.
        obs: past pins; T_n = obs.last_time (0 when there are none).
        quadratic_coefficient: for the m-fold integrated family (m >= 2), the
            coefficient of (t s^2 + t^2 s - t^2 s^2 - t s) in bar_k_Y: either
            ``"b2_over_a2"`` (b_n^2 / a_n^2, the default) or ``"b2"`` (b_n^2).
    """

    def __init__(self, spec: KernelSpec, obs: Observations | None = None, quadratic_coefficient: str = "b2_over_a2"):
        if quadratic_coefficient not in ("b2_over_a2", "b2"):
            raise ParameterError(f"unknown quadratic coefficient {quadratic_coefficient!r}")
        self.spec = spec
        self.obs = obs if obs is not None else Observations()
        self.exps = speed_exponents(spec)
        self.quadratic_coefficient = quadratic_coefficient
        self.T_n = self.obs.last_time
        self.x_n = self.obs.last_value
        self.coeffs: ExpansionCoefficients | None = None
        fam = spec.family
        if fam is Family.FBM:
            self._h, self._sigma2 = spec.H, 1.0
        elif fam is Family.CHERIDITO:
            self._h = min(spec.H, 0.5)
            self._sigma2 = spec.c**2 if spec.H > 0.5 else spec.c_H**2
        else:
            self.coeffs = expansion_coeffs(spec, self.obs)
            a2n = self.coeffs.a2_n
            if not a2n > DEGENERACY_TOL * self.coeffs.a2:
                raise DegenerateConditioningError(f"asymptotic slope variance a_n^2 = {a2n:.3e} is not positive")

    @property
    def a2_n(self) -> float:
        if self.coeffs is None:
            raise UnsupportedFamilyError("a_n^2 is defined for integrated families only")
        return self.coeffs.a2_n

    @property
    def b_n(self) -> float:
        if self.coeffs is None:
            raise UnsupportedFamilyError("b_n is defined for integrated families only")
        return self.coeffs.b_n

    @property
    def uses_refined(self) -> bool:
        return self.coeffs is not None

    def bar_k_n(self, t, s):
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        if self.coeffs is None:
            return self._sigma2 * fbm_cov(self._h, t, s)
        return self.coeffs.a2_n * t * s

    def bar_beta(self, t):
        t = np.asarray(t, dtype=float)
        if self.coeffs is None:
            # bar_k_n(1,1) = sigma^2 k_h(1,1) = sigma^2 > 0
            return fbm_cov(self._h, t, 1.0)
        return t

    def bar_k_Y(self, t, s):
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        if self.coeffs is None:
            h = self._h
            return self._sigma2 * (fbm_cov(h, t, s) - fbm_cov(h, t, 1.0) * fbm_cov(h, s, 1.0))
        co = self.coeffs
        out = _bridge_combo(co.phi_bar_n, t, s)
        if co.part == 2 and co.alpha == 1:
            q = co.b_n**2 / co.a2_n if self.quadratic_coefficient == "b2_over_a2" else co.b_n**2
            out = out + q * (t * s**2 + t**2 * s - t**2 * s**2 - t * s)
        return out

    def bar_k_Y_diag(self, t):
        return self.bar_k_Y(t, t)


def step_asymptotics(spec: KernelSpec, obs: Observations | None = None) -> BridgeAsymptotics:
    """BridgeAsymptotics for families whose bridge limit ignores the past.

    Fractional families and integrated fBm have past-independent k_Y and beta;
    integrated fBm still needs some pin with T_n > 0, so a nominal pin at
    T = 1 is used when ``obs`` has none.

    Raises:
        UnsupportedFamilyError: for the m-fold integrated family with m >= 2,
            whose limit depends on the pin times.
    """
    obs = obs if obs is not None else Observations()
    if spec.family is Family.MFOLD_IBM and spec.m >= 2:
        raise UnsupportedFamilyError("the m-fold (m >= 2) bridge limit depends on the pins; pass them explicitly")
    if spec.is_integrated and obs.n == 0:
        obs = Observations((1.0,), (0.0,))
    return BridgeAsymptotics(spec, obs)


def bar_k_n(ba: BridgeAsymptotics, t, s):
    return ba.bar_k_n(t, s)


def bar_beta(ba: BridgeAsymptotics, t):
    return ba.bar_beta(t)


def bar_k_Y(ba: BridgeAsymptotics, t, s):
    return ba.bar_k_Y(t, s)


def finite_eps_bridge_cov_matrix(spec: KernelSpec, obs: Observations, eps: float, ts, dps: int = 50) -> np.ndarray:
    """Exact Cov(Y^n_{T_n+eps t_i}, Y^n_{T_n+eps t_j}) / eps^q on a grid of t values.

    The bridge covariance is an O(eps^q) difference of O(1) kernel values, so
    everything is evaluated in mpmath at ``dps`` digits and only the final
    ratio is rounded to float.
    """
    if eps <= 0:
        raise ParameterError("eps must be positive")
    if eps < ORACLE_EPS_FLOOR:
        warnings.warn(f"eps={eps:g} is below {ORACLE_EPS_FLOOR:g}; cancellation may dominate", RuntimeWarning)
    q = speed_exponents(spec).bridge_exp
    ck = ConditionedKernel(spec, obs, mp_dps=dps)
    with mpmath.workdps(dps):
        e = mpmath.mpf(eps)
        ts_mp = ck.convert(np.atleast_1d(np.asarray(ts, dtype=float)))
        pts = np.append(ck.convert(obs.last_time) + e * ts_mp, ck.convert(obs.last_time) + e)
        M = ck.cov_matrix(pts)
        end = M[-1, -1]
        if not end > 0:
            raise DegenerateConditioningError("variance at the step end vanished")
        B = M[:-1, :-1] - M[:-1, -1][:, None] * M[-1, :-1][None, :] / end
        B = B / e ** mpmath.mpf(q)
        return np.vectorize(float)(B).astype(float)


def finite_eps_bridge_cov_oracle(spec: KernelSpec, obs: Observations, y: float, eps: float, t: float, s: float,
                                 dps: int = 50) -> float:
    """Exact bridge covariance at (t, s) scaled by eps^-q.

    ``y`` (the pinned end value) does not affect a Gaussian bridge covariance;
    it is accepted for symmetry with the rate functions.
    """
    return float(finite_eps_bridge_cov_matrix(spec, obs, eps, [t, s], dps=dps)[0, 1])
