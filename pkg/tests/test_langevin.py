import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pspin import (HardConstraint, IntegratorConfig, McConfig, MixtureSpec, ModelParams,
                   SoftConstraint, integrate_soft, run_mc, sample_disorder, simulate)
from pspin.langevin import (ResourceGuardError, _rng, grad_hamiltonian, hamiltonian,
                            initial_condition, observables)

MIX = MixtureSpec([0.3, 0.7, 1.3])


def soft_params(beta, h, mix=MIX, L=100.0, alpha=0.0):
    return ModelParams(beta, h, mix, SoftConstraint(L=L, r=1.0, alpha=alpha, h=h), alpha=alpha)


@given(st.integers(2, 12), st.integers(0, 2 ** 32))
@settings(max_examples=25, deadline=None)
def test_gradient_matches_finite_differences(N, seed):
    J = sample_disorder(N, MIX, seed)
    x = np.random.default_rng(seed).standard_normal(N)
    G = grad_hamiltonian(J, x)
    e = 1e-6
    fd = np.array([(hamiltonian(J, x - e * u) - hamiltonian(J, x + e * u)) / (2 * e)
                   for u in np.eye(N)])
    assert np.max(np.abs(G - fd)) <= 1e-6 * (1 + np.max(np.abs(G)))
    batch = grad_hamiltonian(J, np.stack([x, 2 * x], axis=1))
    np.testing.assert_allclose(batch[:, 0], G, rtol=1e-12, atol=1e-12)


def test_couplings_are_symmetric():
    J = sample_disorder(7, MIX, 3)
    np.testing.assert_array_equal(J.J[2], J.J[2].T)
    T = J.J[3]
    for perm in [(1, 0, 2), (0, 2, 1), (2, 1, 0), (1, 2, 0)]:
        np.testing.assert_array_equal(T, T.transpose(perm))


def test_hamiltonian_covariance():
    # E[H(x) H(y)] = N nu(x.y / N)
    N, n = 5, 4000
    g = np.random.default_rng(11)
    x, y = g.standard_normal(N), g.standard_normal(N)
    hx = np.array([hamiltonian(sample_disorder(N, MIX, s), x) for s in range(n)])
    hy = np.array([hamiltonian(sample_disorder(N, MIX, s), y) for s in range(n)])
    for a, b in ((hx, hx), (hx, hy)):
        prod = a * b
        se = prod.std(ddof=1) / np.sqrt(n)
        assert abs(prod.mean() - N * MIX.nu(x @ (y if b is hy else x) / N)) <= 5 * se


def test_disorder_is_reproducible_and_indexed():
    a = sample_disorder(6, MIX, 5, index=0)
    b = sample_disorder(6, MIX, 5, index=0)
    c = sample_disorder(6, MIX, 5, index=1)
    for p in (1, 2, 3):
        np.testing.assert_array_equal(a.J[p], b.J[p])
        assert not np.array_equal(a.J[p], c.J[p])


def test_resource_guards():
    with pytest.raises(ResourceGuardError):
        sample_disorder(10, MixtureSpec.pure(4), 0)
    with pytest.raises(ResourceGuardError):
        sample_disorder(3000, MixtureSpec.pure(2), 0)
    with pytest.raises(ResourceGuardError):
        sample_disorder(100, MixtureSpec.pure(3), 0, max_bytes=1000)


@given(st.integers(2, 200), st.floats(0.5, 4.0), st.floats(0.0, 0.95), st.integers(0, 2 ** 32))
def test_initial_condition_geometry(N, r, alpha, seed):
    x = initial_condition(N, r, alpha, _rng(seed, 1, 0))
    assert x @ x == pytest.approx(r * N, rel=1e-12)
    if alpha > 0:
        assert x.mean() == pytest.approx(alpha * np.sqrt(r), rel=1e-12, abs=1e-12)


def test_mc_config_validation():
    with pytest.raises(ValueError):
        McConfig(N=10, dt_sde=0.01, t_max=1.0, n_noise=1)
    with pytest.raises(ValueError):
        McConfig(N=10, dt_sde=0.01, t_max=1.0, record_times=(0.005,))
    with pytest.raises(ValueError):
        McConfig(N=10, dt_sde=0.01, t_max=1.0, seed=-1)


def test_hard_constraint_is_rejected():
    p = ModelParams(0.1, 0.0, MIX, HardConstraint())
    mc = McConfig(N=10, dt_sde=0.01, t_max=0.1, n_disorder=2)
    with pytest.raises(ValueError, match="SDE requires soft constraint"):
        run_mc(p, mc)


def test_simulation_is_deterministic():
    p = soft_params(0.3, 0.2, alpha=0.5)
    mc = McConfig(N=20, dt_sde=1e-3, t_max=0.5, n_disorder=2, record_times=(0.0, 0.25, 0.5), seed=9)
    a, b = run_mc(p, mc), run_mc(p, mc)
    for name in a.estimate:
        np.testing.assert_array_equal(a.estimate[name], b.estimate[name])
    c = run_mc(p, McConfig(N=20, dt_sde=1e-3, t_max=0.5, n_disorder=2,
                           record_times=(0.0, 0.25, 0.5), seed=10))
    assert not np.array_equal(a.estimate["C"], c.estimate["C"])


def test_observable_identities():
    p = soft_params(0.3, 0.2, alpha=0.5)
    mc = McConfig(N=30, dt_sde=1e-3, t_max=0.5, n_disorder=3, n_noise=3,
                  record_times=(0.0, 0.5), seed=1)
    J = sample_disorder(30, MIX, 1)
    tr = simulate(p, J, mc)
    stats = observables([tr, simulate(p, sample_disorder(30, MIX, 1, 1), mc, disorder=1)], mc)
    # shared initial condition: every copy starts at the same point
    x0 = tr.X[0]
    assert np.all(x0 == x0[:, :1, :1])
    assert stats.value("C", 0.0, 0.0)[0] == pytest.approx(1.0, rel=1e-12)
    assert stats.value("Q", 0.0, 0.0)[0] == pytest.approx(1.0, rel=1e-12)
    assert stats.value("M", 0.0, 0.0)[0] == pytest.approx(0.5, rel=1e-12)
    assert stats.value("chi", 0.5, 0.0)[0] == 0.0
    k = stats.pairs.index((1, 0))
    assert stats.estimate["COV"][k] == pytest.approx(stats.estimate["C"][k] - stats.estimate["L"][k])


def test_free_dynamics_matches_soft_integrator():
    h = 0.2
    p = soft_params(0.0, h, mix=MixtureSpec.pure(2), L=100.0, alpha=0.3)
    mc = McConfig(N=400, dt_sde=1e-3, t_max=1.0, n_disorder=8, n_noise=2,
                  record_times=(0.0, 0.5, 1.0), seed=4)
    stats = run_mc(p, mc)
    b = integrate_soft(p, IntegratorConfig(5e-3, 1.0))
    for s, t in ((0.5, 0.0), (1.0, 0.5), (1.0, 1.0)):
        i, j = int(round(s / b.dt)), int(round(t / b.dt))
        for name, ref in (("C", b.C[i, j]), ("Q", b.Q[i, j]), ("L", b.Q[i, j])):
            est, se = stats.value(name, s, t)
            assert abs(est - ref) <= 4 * se + 2e-3, (name, s, t, est, ref, se)
    est, se = stats.value("M", 1.0, 1.0)
    assert abs(est - b.M[-1]) <= 4 * se + 2e-3


def _spread_of_c(N, n_disorder=80):
    p = soft_params(0.3, 0.2, mix=MixtureSpec.pure(2), alpha=0.5)
    mc = McConfig(N=N, dt_sde=1e-3, t_max=0.5, n_disorder=n_disorder, n_noise=2,
                  record_times=(0.0, 0.5), seed=3)
    vals = []
    for d in range(n_disorder):
        tr = simulate(p, sample_disorder(N, p.mixture, mc.seed, index=d), mc, disorder=d)
        X = tr.X.reshape(2, N, -1)
        vals.append(np.einsum("nb,nb->b", X[1], X[0]).mean() / N)
    return float(np.std(vals, ddof=1))


def test_self_averaging_trend():
    spread = [_spread_of_c(N) for N in (100, 200, 400)]
    assert spread[0] > spread[1] > spread[2], spread


def test_replica_overlap_estimator_positive_on_diagonal():
    p = soft_params(0.3, 0.2, mix=MixtureSpec.pure(2), alpha=0.0)
    mc = McConfig(N=60, dt_sde=1e-3, t_max=0.5, n_disorder=6, n_noise=2,
                  record_times=(0.0, 0.25, 0.5), seed=8)
    stats = run_mc(p, mc)
    for i in range(3):
        k = stats.pairs.index((i, i))
        assert stats.estimate["L"][k] >= -2 * stats.stderr["L"][k]


def test_sde_step_refinement():
    # weak error of Euler-Maruyama: halving dt_sde moves estimates by much less than the SE
    p = soft_params(0.3, 0.2, mix=MixtureSpec.pure(2), L=100.0, alpha=0.5)
    est = {}
    for dt in (1e-3, 5e-4):
        mc = McConfig(N=200, dt_sde=dt, t_max=0.5, n_disorder=6, n_noise=2,
                      record_times=(0.0, 0.5), seed=12)
        est[dt] = run_mc(p, mc)
    for name in ("C", "Q", "M"):
        a, sa = est[1e-3].value(name, 0.5, 0.0 if name != "M" else 0.5)
        b, sb = est[5e-4].value(name, 0.5, 0.0 if name != "M" else 0.5)
        assert abs(a - b) <= 3 * np.hypot(sa, sb)


def test_correlation_estimator_symmetric():
    p = soft_params(0.2, 0.1, mix=MixtureSpec.pure(2))
    mc = McConfig(N=40, dt_sde=1e-3, t_max=0.2, n_disorder=2, record_times=(0.0, 0.1, 0.2), seed=2)
    stats = run_mc(p, mc)
    assert stats.value("C", 0.2, 0.1) == stats.value("C", 0.1, 0.2)
