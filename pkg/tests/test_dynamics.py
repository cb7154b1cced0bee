import numpy as np
import pytest
from hypothesis import given, strategies as st

from loggas.core import PotentialModel, Scaling
from loggas.dynamics import (DbmPath, DtParams, HessianKernel, build_hessian_kernel,
                             check_regularity_point, evaluate_good_sets, integrate_dbm,
                             integrate_tangent_flow)
from loggas.errors import ContractError, IntegrationError
from loggas.experiments import global_micro_gas
from loggas.samplers import (ChainParams, LogGasMeasure, local_gaussian_gas,
                             sample_gaussian_beta_tridiagonal, sample_log_gas_mcmc)


def test_ou_stationary_variance(rng):
    # N=1, beta=2: Phi = x^2 / 2, D = 1, so x is OU with stationary variance 1
    mu = LogGasMeasure.global_gas(PotentialModel.quadratic(), 1, 2.0)
    p = integrate_dbm(np.zeros((4000, 1)), mu, 12.0, rng, DtParams(dt_max=0.01, store_every=12.0))
    x = p.states[:, -1, 0]
    var, se = x.var(), x.var() * np.sqrt(2 / x.size)
    expected = 1 - np.exp(-12.0)
    assert abs(var - expected) < 3 * se


def test_drift_only_keeps_symmetry(rng):
    mu = LogGasMeasure.global_gas(PotentialModel.quadratic(), 3, 1.0)
    p = integrate_dbm(np.array([-1.0, 0.0, 1.0]), mu, 2.0, rng, DtParams(store_every=0.5), noise=False)
    x = p.states[-1]
    assert x[1] == pytest.approx(0.0, abs=1e-14)
    assert x[0] == pytest.approx(-x[2], abs=1e-14)


def test_ordering_and_domain_preserved(rng):
    mu, alpha = local_gaussian_gas(6, 120, beta=1.0)
    X = np.broadcast_to(alpha, (50, alpha.size)).copy()
    p = integrate_dbm(X, mu, 1.0, rng, DtParams(store_every=0.25))
    assert p.diagnostics["ordering_violations"] == 0
    assert np.all(p.gaps > 0)
    a, b = mu.domain
    assert np.all((p.states > a) & (p.states < b))


def test_global_micro_paths_ordered(rng):
    N = 40
    mu = global_micro_gas(PotentialModel.quadratic(), N, 1.0)
    X = sample_gaussian_beta_tridiagonal(N, 1.0, rng, size=20) * N
    p = integrate_dbm(X, mu, 0.2, rng, DtParams(store_every=0.1))
    assert p.diagnostics["ordering_violations"] == 0
    assert np.all(np.diff(p.states, axis=-1) > 0)


def test_beta_below_one_rejected(rng):
    mu = LogGasMeasure.global_gas(PotentialModel.quadratic(), 3, 0.5)
    with pytest.raises(ContractError):
        integrate_dbm(np.array([-1.0, 0.0, 1.0]), mu, 1.0, rng)


def test_gap_collapse_raises_after_refinement(rng):
    mu = global_micro_gas(PotentialModel.quadratic(), 3, 1.0)
    x0 = np.array([-1.0, 0.0, 1e-13])     # already below the floor
    with pytest.raises(IntegrationError) as info:
        integrate_dbm(x0, mu, 0.1, rng, DtParams(max_halvings=3))
    assert "min_gap" in info.value.diagnostics


def test_same_seed_same_path():
    mu, alpha = local_gaussian_gas(4, 80, beta=2.0)
    a = integrate_dbm(alpha, mu, 0.5, np.random.default_rng(3)).states
    b = integrate_dbm(alpha, mu, 0.5, np.random.default_rng(3)).states
    assert np.array_equal(a, b)


def test_stationarity_of_gap_mean(rng):
    mu, _ = local_gaussian_gas(8, 160, beta=2.0)
    x0 = sample_log_gas_mcmc(mu, ChainParams(burn_in=3000, n_samples=1, thin=1, chains=400), rng).samples
    p = integrate_dbm(x0, mu, 1.0, rng, DtParams(store_every=1.0))
    g0 = p.gaps[:, 0, 8]
    g1 = p.gaps[:, -1, 8]
    se = np.hypot(g0.std(), g1.std()) / np.sqrt(g0.size)
    assert abs(g0.mean() - g1.mean()) < 3 * se


def _path(states, beta=1.0):
    states = np.asarray(states, float)
    return DbmPath(np.arange(states.shape[0], dtype=float), states, beta, 1, Scaling.MICRO)


def test_kernel_entries():
    k = build_hessian_kernel(_path([[0.0, 1.0, 3.0]], beta=2.0))
    assert k.B[0, 0, 1] == 2.0
    assert k.B[0, 0, 2] == pytest.approx(2 / 9)
    assert np.all(k.W == 0)
    x = np.arange(7.0)
    k = build_hessian_kernel(_path([x, x]))
    i = np.arange(7)
    d = (i[:, None] - i[None, :]).astype(float)
    want = np.where(d == 0, 0.0, 1 / np.where(d == 0, 1, d) ** 2)
    assert np.allclose(k.B[1], want)


@given(st.integers(0, 1000))
def test_kernel_symmetric_and_positive(seed):
    r = np.random.default_rng(seed)
    x = np.cumsum(r.uniform(0.1, 2.0, (3, 6)), axis=1)
    k = build_hessian_kernel(_path(x, beta=1.5))
    assert np.array_equal(k.B, np.swapaxes(k.B, 1, 2))
    off = ~np.eye(6, dtype=bool)
    assert np.all(k.B[:, off] > 0)


def test_local_kernel_weights_positive(rng):
    mu, alpha = local_gaussian_gas(5, 100, beta=1.0)
    p = integrate_dbm(alpha, mu, 0.2, rng, DtParams(store_every=0.1))
    k = build_hessian_kernel(p)
    assert np.all(k.W > 0)


def test_good_sets_frozen_path():
    K = 4
    alpha = np.arange(-K, K + 1, dtype=float)
    p = _path(np.tile(alpha, (11, 1)))
    rep = evaluate_good_sets(p, 5.0, 0, 0.3, 0.5, alpha, -K - 1.0, K + 1.0)
    assert rep.in_G and rep.rigidity_sup == 0.0
    # unit gaps: the averaged quantity is (2M+1)/M * |s - sigma| / (1 + |s - sigma|) < 3
    assert max(rep.Q_values.values()) < 3.0


def test_good_sets_detect_small_gap():
    K = 4
    alpha = np.arange(-K, K + 1, dtype=float)
    x = alpha.copy()
    x[K + 1] = x[K] + 1.0 / K
    p = _path(np.tile(x, (21, 1)))
    rep = evaluate_good_sets(p, 10.0, 0, 0.3, 0.2, alpha, -K - 1.0, K + 1.0)
    assert not rep.in_Q_tilde


def test_regularity_point():
    K = 16
    zero = HessianKernel.constant(np.zeros((2 * K + 1,) * 2), np.zeros(2 * K + 1))
    assert check_regularity_point(zero, 0, 1.0) == 0.0
    val = check_regularity_point(HessianKernel.inverse_square(K), 0, 1.0)
    assert 0 < val <= 10 * np.log(K)


def test_convexity_floor_along_path(rng):
    K = 8
    mu, _ = local_gaussian_gas(K, 160, beta=1.0)
    x0 = sample_log_gas_mcmc(mu, ChainParams(burn_in=2000, n_samples=1, thin=1, chains=5), rng).samples
    p = integrate_dbm(x0, mu, 1.0, rng, DtParams(store_every=0.5))
    lam = min(mu.min_hessian_eigenvalue(p.states[q, t]) for q in range(5) for t in range(3))
    assert lam * K > 0.1


def test_tangent_flow_shapes(rng):
    mu, alpha = local_gaussian_gas(3, 60, beta=2.0)
    n = alpha.size
    xT, w, integral, _ = integrate_tangent_flow(alpha, np.eye(n)[0], mu, 0.5, rng,
                                                lambda x, g, w: np.sum(w, axis=-1))
    assert xT.shape == (1, n) and w.shape == (1, n) and integral.shape == (1,)
    X = np.broadcast_to(alpha, (4, n)).copy()
    xT, w, Q, _ = integrate_tangent_flow(X, np.broadcast_to(np.eye(n), (4, n, n)).copy(), mu, 0.5,
                                         rng, lambda x, g, w: w)
    assert w.shape == (4, n, n) and Q.shape == (4, n, n)
