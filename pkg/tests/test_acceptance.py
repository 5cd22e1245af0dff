"""Acceptance criteria 1-10, one PASS/FAIL line each.

The Monte Carlo criteria (1-4) run 10^5 paths per cell; expect about a minute
on one core. Results are shared between criteria through a module cache so
that common cells (H=0.3, crude, step 0.01) run once.
"""
import functools
import math

import numpy as np
import pytest

from pinnedgp.asymptotics import BridgeAsymptotics, expansion_coeffs, finite_eps_bridge_cov_matrix, step_asymptotics
from pinnedgp.conditioning import ConditionedKernel, Observations, cond_cov_matrix, cond_mean
from pinnedgp.exit_rates import ExitProblem, closed_g, rate_upper
from pinnedgp.kernels import KernelSpec
from pinnedgp.montecarlo import McRun, Method, estimate_crossing
from pinnedgp.rkhs_fd import GridRate, appendix_a_identity_check, spanned_path

N_MC = 100_000
SEED = 20240601
BM_EXIT = 0.31732


@functools.lru_cache(maxsize=None)
def mc(H: float, method: str, step: float):
    return estimate_crossing(McRun(KernelSpec.fbm(H), step=step, upper=1.0, n_paths=N_MC, seed=SEED,
                                   method=Method(method)))


def _sigma(p: float) -> float:
    return math.sqrt(p * (1 - p) / N_MC)


@pytest.mark.slow
def test_criterion_01_brownian_corrected(acceptance):
    r = mc(0.5, "corrected", 0.01)
    ok = abs(r.estimate - BM_EXIT) <= 0.0046
    acceptance(1, ok, f"H=0.5 corrected eps=0.01: p={r.estimate:.5f} ({r.ci_low:.5f}, {r.ci_high:.5f}), "
                      f"|p-{BM_EXIT}|={abs(r.estimate - BM_EXIT):.5f} <= 0.0046, {r.wall_time:.1f}s")
    assert ok


@pytest.mark.slow
def test_criterion_02_h03_table_cells(acceptance):
    corr, crude = mc(0.3, "corrected", 0.01), mc(0.3, "crude", 0.01)
    gap = corr.estimate - crude.estimate
    ok = 0.59 <= corr.estimate <= 0.63 and 0.46 <= crude.estimate <= 0.50 and gap >= 0.10
    acceptance(2, ok, f"H=0.3 eps=0.01: corrected={corr.estimate:.5f} in [0.59,0.63], crude={crude.estimate:.5f} "
                      f"in [0.46,0.50], gap={gap:.5f} >= 0.10, {corr.wall_time + crude.wall_time:.1f}s")
    assert ok


@pytest.mark.slow
def test_criterion_03_h07_table_cells(acceptance):
    corr, crude = mc(0.7, "corrected", 0.01), mc(0.7, "crude", 0.01)
    gap = corr.estimate - crude.estimate
    ok = 0.19 <= corr.estimate <= 0.22 and gap < 0.02
    acceptance(3, ok, f"H=0.7 eps=0.01: corrected={corr.estimate:.5f} in [0.19,0.22], crude={crude.estimate:.5f}, "
                      f"gap={gap:.5f} < 0.02")
    assert ok


@pytest.mark.slow
def test_criterion_04_crude_bias_monotone(acceptance):
    ps = [mc(0.3, "crude", e).estimate for e in (0.01, 0.002, 0.001)]
    z = [(b - a) / math.hypot(_sigma(a), _sigma(b)) for a, b in zip(ps, ps[1:])]
    ok = all(zi > 3 for zi in z)
    acceptance(4, ok, "H=0.3 crude eps=0.01/0.002/0.001: " + " < ".join(f"{p:.5f}" for p in ps)
               + f", gaps {z[0]:.1f} and {z[1]:.1f} pooled sigma (> 3)")
    assert ok


FAMILIES = [
    KernelSpec.fbm(0.3),
    KernelSpec.fbm(0.5),
    KernelSpec.fbm(0.7),
    KernelSpec.cheridito(0.3, 1.0, 0.7),
    KernelSpec.cheridito(0.7, 0.5, 1.2),
    KernelSpec.mfold_ibm(1),
    KernelSpec.mfold_ibm(2),
    KernelSpec.mfold_ibm(3),
    KernelSpec.integrated_fbm(0.3),
    KernelSpec.integrated_fbm(0.7),
]


def test_criterion_05_recursion_vs_schur(acceptance):
    rng = np.random.default_rng(5)
    worst = 0.0
    for spec in FAMILIES:
        for _ in range(20):
            n = int(rng.integers(1, 5))
            times = np.sort(rng.uniform(0.1, 2.0, n))
            while np.any(np.diff(times) < 0.05):
                times = np.sort(rng.uniform(0.1, 2.0, n))
            obs = Observations(tuple(times), tuple(rng.normal(size=n)))
            grid = rng.uniform(0.01, 2.0, int(rng.integers(2, 11)))
            ck = ConditionedKernel(spec, obs)
            worst = max(worst,
                        np.max(np.abs(ck.cov_matrix(grid) - cond_cov_matrix(spec, obs, grid))),
                        np.max(np.abs(ck.mean(grid) - cond_mean(spec, obs, grid))))
    ok = worst < 1e-9
    acceptance(5, ok, f"{len(FAMILIES)} families x 20 instances: max |recursion - Schur| = {worst:.2e} < 1e-9")
    assert ok


def test_criterion_06_integrated_bm_bridge_diagonal(acceptance):
    ba = BridgeAsymptotics(KernelSpec.integrated_fbm(0.5), Observations((1.0,), (0.0,)))
    t = np.linspace(0, 1, 50)
    err = float(np.max(np.abs(ba.bar_k_Y_diag(t) - t**2 * (1 - t) ** 2 / 3)))
    ok = err < 1e-12
    acceptance(6, ok, f"integrated BM k_Y(t,t) vs t^2(1-t)^2/3 at 50 points: max err {err:.2e} < 1e-12")
    assert ok


def test_criterion_07_closed_form_rates(acceptance):
    rng = np.random.default_rng(7)
    worst = 0.0
    for spec in (KernelSpec.fbm(0.5), KernelSpec.integrated_fbm(0.5)):
        ba = step_asymptotics(spec)
        for _ in range(200):
            a = rng.uniform(-2, 2)
            x, y = a - rng.uniform(0.01, 3, 2)
            ref = closed_g(spec, a, x, y)
            worst = max(worst, abs(rate_upper(ExitProblem(ba, x, y, upper=a)) / ref - 1))
    ok = worst < 1e-6
    acceptance(7, ok, f"minimizer vs closed forms, 2 x 200 triples: max rel err {worst:.2e} < 1e-6")
    assert ok


def test_criterion_08_quadratic_form_identity(acceptance):
    rng = np.random.default_rng(8)
    worst = 0.0
    for i in range(20):
        H = (0.3, 0.5, 0.7)[i % 3]
        spec = KernelSpec.fbm(H)
        n = int(rng.integers(1, 4))
        times = np.sort(rng.uniform(0.2, 2.0, n))
        obs = Observations(tuple(times), tuple(rng.normal(size=n)))
        ba = BridgeAsymptotics(spec, obs)
        g = np.concatenate([[0.0], np.sort(rng.uniform(0.02, 0.98, int(rng.integers(6, 15)))), [1.0]])
        y = rng.normal()
        h = spanned_path(ba, g, y, rng)
        scale = GridRate.from_kernel(ba.bar_k_n, g).rate(h - ba.x_n)
        worst = max(worst, appendix_a_identity_check(spec, obs, y, g, h=h) / scale)
    ok = worst < 1e-8
    acceptance(8, ok, f"20 fBm instances (H in 0.3/0.5/0.7): max relative residual {worst:.2e} < 1e-8")
    assert ok


def test_criterion_09_refined_mfold_oracle(acceptance):
    spec, obs = KernelSpec.mfold_ibm(2), Observations((0.5, 1.0), (0.1, 0.3))
    ts = np.linspace(0.1, 0.9, 5)
    T, S = ts[:, None], ts[None, :]
    lim = BridgeAsymptotics(spec, obs).bar_k_Y(T, S)
    printed = BridgeAsymptotics(spec, obs, quadratic_coefficient="b2").bar_k_Y(T, S)
    epss = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)
    mats = [finite_eps_bridge_cov_matrix(spec, obs, e, ts) for e in epss]
    errs = [float(np.max(np.abs(M / lim - 1))) for M in mats]
    alt = float(np.max(np.abs(mats[-1] / printed - 1)))
    ok = errs[-1] < 0.05 and all(b < a for a, b in zip(errs, errs[1:])) and alt > 0.05
    acceptance(9, ok, "m=2 oracle rel err over eps 1e-1..1e-3: " + ", ".join(f"{e:.2e}" for e in errs)
               + f"; b^2 coefficient variant err {alt:.2f} (rejected)")
    assert ok


def _max_residual(fn, eps):
    return max(float(np.max(np.abs(v))) for v in fn(eps))


def test_criterion_10_expansion_residuals(acceptance):
    obs = Observations((0.5, 1.0), (0.0, 0.0))
    u = np.linspace(0, 1, 6)
    U, V = np.meshgrid(u, u)
    Ts = (0.3, 0.6, 0.9)
    ratios, notes, ok = {}, [], True

    def kappa_res(ec):
        return lambda e: [ec.kappa_exact(U, V, e) - ec.kappa_expansion(U, V, e)]

    def integral_res(ec):
        return lambda e: [ec.kappa_integral_exact(u, T, e) - ec.kappa_integral_expansion(u, T, e) for T in Ts]

    cases = [("mfold-kernel", m, KernelSpec.mfold_ibm(m), kappa_res) for m in (2, 3)]
    cases += [("mfold-integral", m, KernelSpec.mfold_ibm(m), integral_res) for m in (2, 3, 4)]
    cases += [("ifbm-kernel", H, KernelSpec.integrated_fbm(H), kappa_res) for H in (0.3, 0.7)]
    cases += [("ifbm-integral", H, KernelSpec.integrated_fbm(H), integral_res) for H in (0.3, 0.7)]
    for name, par, spec, make in cases:
        ec = expansion_coeffs(spec, obs)
        fn = make(ec)
        r1, r2 = _max_residual(fn, 1e-2), _max_residual(fn, 5e-3)
        scale = _max_residual(lambda e: [ec.kappa_exact(U, V, e)], 1e-2)
        if r1 < 1e-13 * scale:
            # integral of a polynomial of degree m-1 in the shifted time: exact at order eps^2
            notes.append(f"{name}({par}) exact ({r1:.0e})")
            continue
        ratio = r1 / r2
        ratios[f"{name}({par})"] = ratio
        ok &= 6 <= ratio <= 10
    # the truncations without the eps^2 terms only reach O(eps^2)
    lead = []
    for H in (0.3, 0.7):
        ec = expansion_coeffs(KernelSpec.integrated_fbm(H), obs)
        c2 = H * (2 * H - 1) / 2 * ec.T_n ** (2 * H - 2) * (U**2 + V**2)
        fn = lambda e: [ec.kappa_exact(U, V, e) - ec.kappa_expansion(U, V, e) + c2 * e**2]
        lead.append(_max_residual(fn, 1e-2) / _max_residual(fn, 5e-3))
    acceptance(10, ok, "halving ratios " + ", ".join(f"{k}={v:.2f}" for k, v in ratios.items())
               + " in [6,10]; " + "; ".join(notes)
               + "; without eps^2 terms: " + ", ".join(f"{r:.2f}" for r in lead))
    assert ok
