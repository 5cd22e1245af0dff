import numpy as np
import pytest

from pinnedgp.asymptotics import BridgeAsymptotics
from pinnedgp.conditioning import Observations
from pinnedgp.errors import OutOfSpaceError, ParameterError
from pinnedgp.kernels import KernelSpec, fbm_cov
from pinnedgp.rkhs_fd import GridRate, appendix_a_identity_check, rate_quadratic, spanned_path


def bridge_gram(grid):
    g = np.asarray(grid)
    return np.minimum(g[:, None], g[None, :]) - g[:, None] * g[None, :]


def test_zero_path():
    gr = GridRate([0.0, 0.5, 1.0], bridge_gram([0.0, 0.5, 1.0]))
    assert rate_quadratic(gr, np.zeros(3)) == 0.0


def test_single_interior_dof():
    gr = GridRate([0.0, 0.5, 1.0], bridge_gram([0.0, 0.5, 1.0]))
    for c in (0.3, -1.2, 2.0):
        assert rate_quadratic(gr, np.array([0.0, c, 0.0])) == pytest.approx(2 * c**2, rel=1e-12)


def test_out_of_space():
    gr = GridRate([0.0, 0.5, 1.0], bridge_gram([0.0, 0.5, 1.0]))
    with pytest.raises(OutOfSpaceError):
        rate_quadratic(gr, np.array([0.0, 1.0, 0.5]))
    with pytest.raises(ParameterError):
        rate_quadratic(gr, np.zeros(4))


@pytest.mark.parametrize("H", [0.3, 0.5, 0.7])
def test_reproducing_identity(H):
    rng = np.random.default_rng(int(10 * H))
    g = np.linspace(0.1, 1.0, 10)
    K = fbm_cov(H, g[:, None], g[None, :])
    gr = GridRate(g, K)
    assert gr.pinv_residual() < 1e-8
    for _ in range(10):
        lam = rng.normal(size=g.size)
        assert rate_quadratic(gr, K @ lam) == pytest.approx(0.5 * lam @ K @ lam, rel=1e-10)


def test_identity_at_the_mean_path():
    spec, obs = KernelSpec.fbm(0.7), Observations((1.0,), (0.2,))
    ba = BridgeAsymptotics(spec, obs)
    g = np.linspace(0, 1, 11)
    y = 0.9
    m = 0.2 + ba.bar_beta(g) * (y - 0.2)
    assert appendix_a_identity_check(spec, obs, y, g, h=m) < 1e-10


def test_identity_constant_path():
    spec, obs = KernelSpec.fbm(0.3), Observations((1.0,), (0.4,))
    g = np.linspace(0, 1, 9)
    assert appendix_a_identity_check(spec, obs, 0.4, g, h=np.full(g.size, 0.4)) < 1e-12


@pytest.mark.parametrize("spec", [KernelSpec.fbm(0.5), KernelSpec.fbm(0.3), KernelSpec.cheridito(0.7, 1.0, 1.0),
                                  KernelSpec.integrated_fbm(0.4)], ids=lambda s: s.describe())
def test_identity_random_spanned_paths(spec):
    rng = np.random.default_rng(3)
    obs = Observations((1.0,), (0.1,))
    for _ in range(5):
        g = np.concatenate([[0.0], np.sort(rng.uniform(0.05, 0.95, int(rng.integers(6, 15)))), [1.0]])
        y = rng.normal()
        ba = BridgeAsymptotics(spec, obs)
        h = spanned_path(ba, g, y, rng)
        assert h[0] == pytest.approx(ba.x_n) and h[-1] == pytest.approx(y)
        rate = GridRate.from_kernel(ba.bar_k_n, g).rate(h - ba.x_n)
        assert appendix_a_identity_check(spec, obs, y, g, h=h) < 1e-8 * (1 + rate)


def test_grid_must_contain_endpoints():
    with pytest.raises(ParameterError):
        appendix_a_identity_check(KernelSpec.fbm(0.5), Observations((1.0,), (0.0,)), 0.5, [0.1, 0.5, 1.0])
