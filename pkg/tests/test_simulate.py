import numpy as np
import pytest

from pinnedgp.conditioning import Observations, cond_cov_matrix
from pinnedgp.errors import DegenerateConditioningError, ParameterError
from pinnedgp.kernels import KernelSpec
from pinnedgp.simulate import PathSampler, SequentialState, path_rng, sequential_step


def test_path_rng_is_stable_and_distinct():
    a = path_rng(5, 3).standard_normal(4)
    np.testing.assert_array_equal(a, path_rng(5, 3).standard_normal(4))
    assert not np.allclose(a, path_rng(5, 4).standard_normal(4))
    assert not np.allclose(a, path_rng(6, 3).standard_normal(4))


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_marginal_variance(H):
    grid = np.linspace(0.1, 1.0, 10)
    s = PathSampler(KernelSpec.fbm(H), grid, seed=1)
    X = s.sample_paths(range(20000))
    # relative standard error of a variance estimate is sqrt(2/N) ~ 1%
    np.testing.assert_allclose(X.var(axis=0), grid ** (2 * H), rtol=0.05)
    assert np.all(np.abs(X.mean(axis=0)) < 5 * np.sqrt(grid ** (2 * H) / 20000))


def test_brownian_two_point_covariance():
    s = PathSampler(KernelSpec.fbm(0.5), [0.3, 0.7], seed=2)
    X = s.sample_paths(range(40000))
    c = np.cov(X.T)
    np.testing.assert_allclose(c, [[0.3, 0.3], [0.3, 0.7]], atol=0.02)


def test_sampling_is_deterministic():
    grid = np.linspace(0.05, 1, 20)
    a = PathSampler(KernelSpec.integrated_fbm(0.4), grid, seed=9).sample_paths([0, 7, 3])
    b = PathSampler(KernelSpec.integrated_fbm(0.4), grid, seed=9).sample_paths([0, 7, 3])
    np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(a[1], PathSampler(KernelSpec.integrated_fbm(0.4), grid, seed=9).sample_path(7),
                               rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("spec", [KernelSpec.fbm(0.3), KernelSpec.fbm(0.7), KernelSpec.mfold_ibm(2),
                                  KernelSpec.cheridito(0.3, 1.0, 1.0)], ids=lambda s: s.describe())
def test_factor_residual(spec):
    s = PathSampler(spec, np.linspace(0.01, 1, 100))
    assert s.factor_residual() < 1e-10


def test_pinned_sampler_uses_conditional_law():
    obs = Observations((1.0,), (0.5,))
    s = PathSampler(KernelSpec.fbm(0.5), [1.5, 2.0], obs=obs)
    np.testing.assert_allclose(s.mean, [0.5, 0.5])
    np.testing.assert_allclose(s.cov, [[0.5, 0.5], [0.5, 1.0]], atol=1e-14)
    with pytest.raises(ParameterError):
        PathSampler(KernelSpec.fbm(0.5), [0.5, 2.0], obs=obs)
    with pytest.raises(ParameterError):
        PathSampler(KernelSpec.fbm(0.5), [0.5, 0.4])


def test_sequential_brownian_step_variance():
    st = SequentialState.from_observations(KernelSpec.fbm(0.5), Observations((0.4,), (0.3,)))
    mean, var, _ = st.conditional(0.41)
    assert mean == pytest.approx(0.3, abs=1e-14)
    assert var == pytest.approx(0.01, rel=1e-10)


def test_sequential_fbm_one_pin():
    st = SequentialState.from_observations(KernelSpec.fbm(0.7), Observations((1.0,), (0.4,)))
    mean, var, _ = st.conditional(2.0)
    assert mean == pytest.approx(2**0.4 * 0.4, rel=1e-12)
    assert var == pytest.approx(2**1.4 - 2**0.8, rel=1e-12)
    x = sequential_step(st, 2.0, 1.5)
    assert x == pytest.approx(mean + np.sqrt(var) * 1.5, rel=1e-12)
    assert st.times == [1.0, 2.0]


@pytest.mark.parametrize("spec", [KernelSpec.fbm(0.3), KernelSpec.fbm(0.7), KernelSpec.integrated_fbm(0.6)],
                         ids=lambda s: s.describe())
def test_sequential_matches_joint_draw_for_draw(spec):
    # both routes apply the lower Cholesky factor of the same matrix
    grid = np.array([0.2, 0.4, 0.5, 0.8, 1.0])
    joint = PathSampler(spec, grid, seed=4)
    for pid in range(20):
        z = path_rng(4, pid).standard_normal(grid.size)
        st = SequentialState(spec)
        seq = [sequential_step(st, t, zi) for t, zi in zip(grid, z)]
        np.testing.assert_allclose(seq, joint.transform(z), atol=1e-12)


def test_sequential_matches_joint_in_law():
    spec, obs = KernelSpec.fbm(0.7), Observations((0.5,), (0.2,))
    grid = np.array([0.6, 0.7, 0.8, 0.9, 1.0])
    rng = np.random.default_rng(0)
    N = 20000
    X = np.empty((N, grid.size))
    for i in range(N):
        st = SequentialState.from_observations(spec, obs)
        X[i] = [sequential_step(st, t, z) for t, z in zip(grid, rng.standard_normal(grid.size))]
    K = cond_cov_matrix(spec, obs, grid)
    np.testing.assert_allclose(np.cov(X.T), K, atol=6 * np.sqrt(2 / N) * K.max())
    np.testing.assert_allclose(X.mean(axis=0), PathSampler(spec, grid, obs=obs).mean, atol=0.02)


def test_degenerate_step_is_clamped():
    st = SequentialState.from_observations(KernelSpec.fbm(0.5), Observations((1.0,), (0.3,)))
    st.times[-1] = 1.0 - 1e-15  # the next point sits on top of the pin
    with pytest.warns(RuntimeWarning):
        x = sequential_step(st, 1.0, 2.0)
    mean, _, _ = st.conditional(1.0)
    assert x == pytest.approx(mean)
    assert len(st.times) == 1


def test_push_rejects_degenerate_and_unordered():
    st = SequentialState.from_observations(KernelSpec.fbm(0.5), Observations((1.0,), (0.0,)))
    with pytest.raises(ParameterError):
        st.push(0.5, 0.0)
    st.times[-1] = 1.0 - 1e-15
    with pytest.raises(DegenerateConditioningError):
        st.push(1.0, 0.0)
