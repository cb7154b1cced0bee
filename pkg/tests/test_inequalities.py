import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from loggas.errors import DomainError, PreconditionError
from loggas.inequalities import (LatticeFunction, LatticeKernel, dirichlet_form, fractional_sum,
                                 fuzz_gn_global, fuzz_gn_local, fuzz_interpolation, gn_global_check,
                                 gn_local_check, gn_ratio, interpolation_comparison,
                                 interpolation_integral, random_lattice_function)

values = st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=25).filter(
    lambda v: any(abs(x) > 1e-3 for x in v))


def test_delta_ratio():
    assert fractional_sum(LatticeFunction.delta(0), 1.0) == pytest.approx(2 * np.pi ** 2 / 3, rel=1e-14)
    assert gn_ratio(LatticeFunction.delta(0), 4, 1) == pytest.approx((2 * np.pi ** 2 / 3) ** -0.25, rel=1e-14)
    assert gn_ratio(LatticeFunction.delta(0), 4, 1) == pytest.approx(0.62438, abs=1e-5)


def test_ratio_domain():
    with pytest.raises(DomainError):
        gn_ratio(LatticeFunction(np.zeros(3)), 4, 1)
    with pytest.raises(DomainError):
        gn_ratio(LatticeFunction.delta(), 2, 1)
    with pytest.raises(DomainError):
        gn_ratio(LatticeFunction.delta(), 4, 0.4)


@given(v=values, c=st.floats(1e-3, 1e3), sign=st.sampled_from([-1.0, 1.0]), k=st.integers(-10 ** 6, 10 ** 6))
def test_ratio_invariance(v, c, sign, k):
    f = LatticeFunction(np.array(v), 7)
    r = gn_ratio(f, 4, 1)
    assert gn_ratio(f.scaled(sign * c), 4, 1) == pytest.approx(r, rel=1e-12)
    assert gn_ratio(f.shifted(k), 4, 1) == pytest.approx(r, rel=1e-12)


def _brute_dirichlet(f, kernel, R):
    lo, hi = f.support
    i = np.arange(lo - R, hi + R + 1)
    g = np.zeros(i.size)
    g[R:R + f.values.size] = f.values
    I, J = np.meshgrid(i, i, indexing="ij")
    off = I != J
    return float(np.sum(kernel.func(I[off], J[off]) * (g[:, None] - g[None, :])[off] ** 2))


@pytest.mark.parametrize("kernel", [LatticeKernel.inverse_square(1.5), LatticeKernel.modulated(1.0, 0.5)])
def test_dirichlet_form_against_truncated_sum(kernel):
    f = LatticeFunction(np.array([1.0, -2.0, 0.5, 3.0]), -2)
    exact = dirichlet_form(f, kernel)
    R = 1500
    brute = _brute_dirichlet(f, kernel, R)
    # the omitted pairs have one end in the support and the other beyond R
    tail = 2 * kernel.tail * np.sum(f.values ** 2) * 2 / R
    assert brute <= exact * (1 + 1e-12)
    assert exact - brute <= tail


def test_global_check_delta():
    rep = gn_global_check(LatticeFunction.delta(0), LatticeKernel.inverse_square(), 1, 1, 1)
    assert rep.lhs == 1.0
    assert rep.dirichlet_term == pytest.approx(2 * np.pi ** 2 / 3)
    assert rep.minimal_C <= 1
    assert not rep.precondition_unmet
    zero = gn_global_check(LatticeFunction(np.zeros(4)), LatticeKernel.inverse_square(), 1, 1, 1)
    assert zero.lhs == zero.rhs == zero.minimal_C == 0.0


def test_global_check_flags_floor():
    rep = gn_global_check(LatticeFunction.delta(0), LatticeKernel.inverse_square(0.5), 1, 1, 1)
    assert rep.precondition_unmet
    with pytest.raises(DomainError):
        gn_global_check(LatticeFunction.delta(0), LatticeKernel.inverse_square(), 1, 0.8, 0.5)


@settings(max_examples=30)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_larger_kernel_never_raises_constant(seed):
    f = random_lattice_function(np.random.default_rng(seed), 20)
    base = gn_global_check(f, LatticeKernel.inverse_square(), 1, 1, 1).minimal_C
    big = gn_global_check(f, LatticeKernel.modulated(1.0, 1.0), 1, 1, 1).minimal_C
    assert big <= base * (1 + 1e-12)


def test_local_check():
    k = LatticeKernel.inverse_square()
    g = gn_global_check(LatticeFunction.delta(0), k, 1, 1, 1)
    loc = gn_local_check(LatticeFunction.delta(0), k, 0, 10, 0.25, 1, 1, 1)
    assert loc.lhs == g.lhs and loc.sup_term == g.sup_term
    assert loc.boundary_term == pytest.approx(1 / 2.5)
    # the leak term falls off like 1/tau and the constant tends to the global one
    cs = [gn_local_check(LatticeFunction.delta(0), k, 0, 10, tau, 1, 1, 1) for tau in (1.0, 10.0, 100.0)]
    assert cs[2].boundary_term == pytest.approx(1e-3)
    assert cs[0].minimal_C < cs[1].minimal_C < cs[2].minimal_C
    inner = g.lhs / (loc.dirichlet_term + g.sup_term)
    assert cs[2].minimal_C == pytest.approx(inner, rel=1e-3)
    with pytest.raises(PreconditionError):
        gn_local_check(LatticeFunction(np.ones(5), 8), k, 0, 10, 0.25, 1, 1, 1)


def test_local_fuzz_finite():
    res = fuzz_gn_local(200, 3)
    assert np.isfinite(res.max) and res.max > 0


def _hat_fourier(s):
    # int int |phi(x)-phi(y)|^2/|x-y|^{1+s} = (A_s/2pi) int |xi|^s |phi^(xi)|^2 dxi,
    # A_s = 4 int_0^inf (1-cos u)/u^{1+s} du, phi^(xi) = sinc^2 for the unit hat
    A = 4 * (np.pi / 2 if s == 1 else -special.gamma(-s) * np.cos(np.pi * s / 2))
    X = 20.0
    g = lambda x: x ** s * (np.sin(x / 2) / (x / 2)) ** 4
    head = integrate.quad(g, 0, X, limit=500, epsabs=1e-13, epsrel=1e-12)[0]
    # sin^4(x/2) = (3 - 4 cos x + cos 2x)/8, so the tail is 2 x^{s-4}(3 - 4 cos x + cos 2x)
    tail = 6 * X ** (s - 3) / (3 - s)
    w = lambda x: 2 * x ** (s - 4)
    tail += -4 * integrate.quad(w, X, np.inf, weight="cos", wvar=1.0)[0]
    tail += integrate.quad(w, X, np.inf, weight="cos", wvar=2.0)[0]
    return A / (2 * np.pi) * 2 * (head + tail)


@pytest.mark.parametrize("s", [0.5, 1.0, 1.5])
def test_hat_interpolation_matches_fourier(s):
    got = interpolation_integral(LatticeFunction.delta(0), s)
    assert got == pytest.approx(_hat_fourier(s), rel=1e-6)


def test_interpolation_comparison():
    assert interpolation_comparison(LatticeFunction(np.zeros(3)), 3, 1) == 0.0
    assert 0 < interpolation_comparison(LatticeFunction.delta(0), 3, 1) < 5
    res = fuzz_interpolation(40, 5, 1.0)
    assert np.isfinite(res.max)


def test_fuzz_is_deterministic(tmp_path):
    a, b = fuzz_gn_global(50, 11), fuzz_gn_global(50, 11)
    assert a.rows == b.rows
    assert np.all(np.diff(a.running_max) >= 0)
    a.to_csv(tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "trial,seed,minimal_C" and len(lines) == 51
