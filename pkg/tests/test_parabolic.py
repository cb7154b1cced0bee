import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from loggas.core import PotentialModel
from loggas.dynamics import DtParams, HessianKernel
from loggas.errors import ContractError, DomainError, IntegrationError
from loggas.experiments import random_floor_kernel
from loggas.parabolic import (Observable, build_cutoffs, check_nash_decay, correlation_via_representation,
                              de_giorgi_energy, delta, dense_expm_oracle, finite_speed_profile,
                              holder_oscillation, kernel_floor, nash_bound, propagate,
                              psi_cutoff, representation_sides, split_kernel)
from loggas.samplers import ChainParams, LogGasMeasure, sample_log_gas_mcmc


def test_zero_kernel_is_stationary(rng):
    K = 5
    ker = HessianKernel.constant(np.zeros((11, 11)), np.zeros(11))
    v0 = rng.standard_normal(11)
    sol = propagate(ker, v0, 0.0, 3.0)
    np.testing.assert_allclose(sol.values[-1], v0, rtol=0, atol=1e-14)
    assert sol.K == K


def test_constant_kernel_matches_dense_expm(rng):
    ker = random_floor_kernel(rng, 8)
    v0 = delta(8, 2)
    sol = propagate(ker, v0, 0.0, 2.5)
    ref = dense_expm_oracle(ker, v0, 2.5)
    assert np.max(np.abs(sol.values[-1] - ref)) / np.max(np.abs(ref)) < 1e-6
    assert sol.source == 2


def test_implicit_euler_converges_to_expm(rng):
    ker = random_floor_kernel(rng, 6)
    v0 = delta(6, 0)
    ref = dense_expm_oracle(ker, v0, 1.0)
    errs = [np.max(np.abs(propagate(ker, v0, 0.0, 1.0, method="implicit_euler", max_dt=h).values[-1] - ref))
            for h in (0.05, 0.025)]
    assert errs[1] < errs[0] < 0.05
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.2)


def test_diagonal_decay():
    c = 0.7
    ker = HessianKernel.constant(np.zeros((7, 7)), np.full(7, c))
    v0 = np.arange(7.0) - 3
    sol = propagate(ker, v0, 0.0, 2.0, store=[0.0, 1.0, 2.0])
    for t, row in zip(sol.times, sol.values):
        np.testing.assert_allclose(row, np.exp(-c * t) * v0, rtol=1e-13)


def test_piecewise_kernel_respects_breakpoints(rng):
    a, b = random_floor_kernel(rng, 4), random_floor_kernel(rng, 4)
    ker = HessianKernel(np.array([0.0, 1.0]), np.stack([a.B[0], b.B[0]]), np.stack([a.W[0], b.W[0]]))
    v0 = rng.standard_normal(9)
    got = propagate(ker, v0, 0.0, 2.0).values[-1]
    ref = dense_expm_oracle(b, dense_expm_oracle(a, v0, 1.0), 1.0)
    np.testing.assert_allclose(got, ref, rtol=1e-9, atol=1e-12)


def test_propagate_contracts():
    ker = HessianKernel.constant(np.zeros((3, 3)), np.zeros(3))
    with pytest.raises(ContractError):
        propagate(ker, np.zeros(4), 0.0, 1.0)
    with pytest.raises(ContractError):
        propagate(ker, np.zeros(3), 1.0, 0.0)
    B = np.zeros((3, 3))
    B[0, 1] = B[1, 0] = 1e13
    with pytest.raises(IntegrationError):
        propagate(HessianKernel.constant(B, np.zeros(3)), np.ones(3), 0.0, 1.0)
    with pytest.raises(DomainError):
        delta(3, 4)


@settings(max_examples=25)
@given(seed=st.integers(0, 2 ** 32 - 1), p=st.floats(1.0, 2.0), t=st.floats(0.01, 10.0))
def test_lp_contraction_and_positivity(seed, p, t):
    rng = np.random.default_rng(seed)
    ker = random_floor_kernel(rng, 6)
    v0 = rng.standard_normal(13)
    sol = propagate(ker, v0, 0.0, t)
    assert np.linalg.norm(sol.values[-1], p) <= np.linalg.norm(v0, p) * (1 + 1e-6)
    pos = propagate(ker, np.abs(v0), 0.0, t).values[-1]
    assert np.all(pos >= -1e-12)


def test_nash_bound_values():
    assert nash_bound(4.0, 1.0, 1.0, 1.0, np.inf) == pytest.approx(0.25)
    assert nash_bound(4.0, 1.0, 3.0, 2.0, 2.0) == pytest.approx(3.0)


def test_nash_decay_on_floor_kernel(rng):
    K = 16
    ker = random_floor_kernel(rng, K)
    b = kernel_floor(ker.B[0], ker.W[0])
    assert b >= 1.0 - 1e-12
    sol = propagate(ker, delta(K, 0), 0.0, K / 2, store=np.linspace(0, K / 2, 9))
    rep = check_nash_decay(sol, ker)
    assert rep.satisfied and not rep.precondition_unmet
    assert np.all(rep.attained[1:] <= rep.bound[1:])


def test_nash_precondition_unmet(rng):
    ker = random_floor_kernel(rng, 8)
    sol = propagate(ker, delta(8, 0), 0.0, 4.0, store=[0.0, 2.0, 4.0])
    rep = check_nash_decay(sol, ker, b_floor=100.0)
    assert rep.precondition_unmet and not rep.satisfied


def test_finite_speed_at_time_zero(rng):
    ker = random_floor_kernel(rng, 8)
    rep = finite_speed_profile(ker, 3, 2, 0.0, theta=1.0, rho1=0.0)
    assert rep.profile[3 + 8] == 1.0
    assert np.count_nonzero(rep.profile) == 1
    assert rep.envelope_constant == 0.0


def test_short_range_tail_is_exponential():
    K = 32
    ker = HessianKernel.inverse_square(K)
    S, R = split_kernel(ker, 2)
    assert np.all(R.W == 0)
    np.testing.assert_allclose(S.B + R.B, ker.B)
    rep = finite_speed_profile(ker, 0, 2, 2.0)
    assert rep.tail_slope < 0
    assert np.isfinite(rep.short_range_constant)


def test_holder_oscillation():
    K = 10
    ker = HessianKernel.constant(np.zeros((21, 21)), np.zeros(21))
    const = propagate(ker, np.full(21, 2.0), 0.0, 4.0, store=[0.0, 4.0])
    assert holder_oscillation(const, 0, 4.0, 1 / 3) == 0.0
    v = np.random.default_rng(1).standard_normal(21)
    sol = propagate(ker, v, 0.0, 4.0, store=[0.0, 4.0])
    osc = holder_oscillation(sol, 0, 4.0, 0.0)
    assert 0 < osc <= 2 * np.max(np.abs(v))
    assert holder_oscillation(sol, 0, 4.0, 0.0, window="box") >= osc
    with pytest.raises(DomainError):
        holder_oscillation(sol, 8, 4.0, 0.0)
    with pytest.raises(DomainError):
        holder_oscillation(sol, 0, 4.0, 0.5)


def test_cutoff_values():
    M, Z, ell = 5.0, 3, 2.0
    i = np.arange(-60, 61)
    psi = psi_cutoff(i, M, Z, ell)
    assert np.all(psi[np.abs(i - Z) <= M] == 0)
    assert psi_cutoff([Z + 20], M, Z, ell)[0] == pytest.approx(ell)
    fam = build_cutoffs(M, Z, ell, 0.05, i)
    assert np.all(fam.F[np.abs(i - Z) <= 8 * M] == -ell)
    with pytest.raises(DomainError):
        build_cutoffs(M, Z, ell, 0.2, i)


@settings(max_examples=60)
@given(M=st.floats(1.0, 50.0), Z=st.integers(-100, 100), ell=st.floats(0.01, 10.0),
       lam=st.floats(1e-3, 0.099))
def test_cutoff_ordering(M, Z, ell, lam):
    i = np.arange(Z - int(12 * M) - 2, Z + int(12 * M) + 3)
    fam = build_cutoffs(M, Z, ell, lam, i)
    top = ell + fam.psi_tilde
    tol = 1e-12 * (1 + np.abs(top))
    assert np.all(fam.phi0 <= fam.phi1 + tol)
    assert np.all(fam.phi1 <= fam.phi2 + tol)
    assert np.all(fam.phi2 <= top + tol)
    far = np.abs(i - Z) >= 9 * M
    np.testing.assert_allclose(fam.phi0[far], top[far])
    np.testing.assert_allclose(fam.phi2[far], top[far])


def test_de_giorgi_energy_hand_values():
    K, M, ell = 10, 2.0, 1.0
    ker = HessianKernel.constant(np.zeros((21, 21)), np.full(21, 0.5))
    fam = build_cutoffs(M, 0, ell, 0.05, np.arange(-K, K + 1))
    psi = psi_cutoff(np.arange(-K, K + 1), M, 0, ell)
    low = propagate(ker, psi - 0.1, 0.0, 0.0, store=[0.0])
    zero = de_giorgi_energy(low, fam, ker, 0.0, ell)
    assert zero.total == 0.0
    c = 0.3
    v = psi.copy()
    core = np.abs(np.arange(-K, K + 1)) <= M
    v[core] += c
    flat = propagate(HessianKernel.constant(np.zeros((21, 21)), np.zeros(21)), v, 0.0, 1.0,
                     store=[0.0, 1.0])
    e = de_giorgi_energy(flat, fam, ker, -1.0, ell)
    count = core.sum()
    assert e.sup_term == pytest.approx(count * c ** 2 / (M * ell ** 2))
    assert e.dissipation == pytest.approx(0.5 * count * c ** 2 / (M * ell ** 2))
    assert e.total >= 0


def test_representation_identity_three_particles(rng):
    mu = LogGasMeasure.global_gas(PotentialModel.quadratic(), 3, 2.0)
    x0 = sample_log_gas_mcmc(mu, ChainParams(burn_in=500, n_samples=400, thin=10, chains=4), rng).samples
    hits = 0
    for _ in range(20):
        F = Observable.smooth(rng.standard_normal(3), 1.5)
        G = Observable.linear(rng.standard_normal(3))
        lhs, rhs, _ = representation_sides(mu, F, G, 0.5, x0, rng, DtParams(dt_max=2e-3))
        diff = lhs - rhs
        z = abs(diff.mean()) / (diff.std(ddof=1) / np.sqrt(diff.size))
        hits += z < 3
    assert hits >= 18


def test_representation_trivial_cases(rng):
    mu = LogGasMeasure.global_gas(PotentialModel.quadratic(), 3, 2.0)
    x0 = sample_log_gas_mcmc(mu, ChainParams(burn_in=200, n_samples=50, thin=5, chains=1), rng).samples
    est = correlation_via_representation(mu, Observable.constant(), Observable.linear(np.ones(3)), 50, rng, x0=x0)
    assert est.value == 0.0
    G = Observable.linear(np.ones(3))
    lhs, rhs, _ = representation_sides(mu, Observable.linear([1.0, 0, 0]), G, 0.0, x0, rng)
    np.testing.assert_allclose(lhs, 0.0, atol=1e-14)
    np.testing.assert_allclose(rhs, 0.0, atol=1e-14)
