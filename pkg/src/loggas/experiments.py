"""Experiment suites shared by the harness and the acceptance tests.

Each suite takes an explicit generator (or integer seed), runs one
finite-N experiment end to end and returns a JSON-ready dict.  The dict
always carries ``satisfied`` (the suite's own pass condition) and
``runtime`` in seconds; everything else is a reported metric.
"""

from __future__ import annotations

import time

import numpy as np
from scipy import stats

from .core import BoundaryData, ExternalPotential, PotentialModel, Scaling, check_regular_potential
from .dynamics import DtParams, HessianKernel, build_hessian_kernel, integrate_dbm
from .equilibrium import classical_locations, semicircle, semicircle_cdf, solve_equilibrium_density
from .inequalities import LatticeFunction, fuzz_gn_global, gn_ratio, random_lattice_function
from .parabolic import (Observable, boundary_distance, check_nash_decay, convexity_time, delta,
                        dense_expm_oracle, direct_covariance, effective_holder_exponent,
                        holder_oscillation, propagate, response_matrix)
from .samplers import (ChainParams, LogGasMeasure, OneBody, VarianceProfile, local_gaussian_gas,
                       sample_gaussian_beta_tridiagonal, sample_generalized_wigner,
                       sample_log_gas_mcmc)
from .statistics import gap_distribution, ks_distance, level_repulsion_exponent, universality_compare


def _clock():
    t0 = time.perf_counter()
    return lambda: time.perf_counter() - t0


def global_micro_gas(V: PotentialModel, N: int, beta: float) -> LogGasMeasure:
    """The global gas in microscopic units (positions N x, unit diffusion).

    Same Gibbs measure as ``LogGasMeasure.global_gas`` after rescaling, with
    the one-body term (beta N / 2) V(x / N).
    """
    s = beta / 2.0
    ob = OneBody(lambda x: s * N * V.value(x / N), lambda x: s * V.d1(x / N),
                 lambda x: s * V.d2(x / N) / N, s * V.inf_second_derivative / N)
    return LogGasMeasure(beta, N, ob, Scaling.MICRO, 1.0,
                         description={"kind": "global", "potential": V.name, "N": N, "beta": beta})


# ---------------------------------------------------------------- samplers

def semicircle_suite(rng, N: int = 200, draws: int = 100, beta: float = 2.0,
                     ks_max: float = 0.05, time_max: float = 30.0) -> dict:
    clock = _clock()
    X = sample_gaussian_beta_tridiagonal(N, beta, rng, size=draws)
    ks = float(stats.kstest(X.ravel(), semicircle_cdf).statistic)
    rt = clock()
    return {"suite": "semicircle", "N": N, "draws": draws, "beta": beta, "ks": ks,
            "runtime": rt, "satisfied": bool(ks < ks_max and rt < time_max)}


# ---------------------------------------------------------------- statistics

REPULSION_TARGETS = ((1.0, 1, 2.0, 0.3), (2.0, 1, 3.0, 0.3), (1.0, 2, 3.0, 0.4))


def repulsion_suite(rng, N: int = 100, draws: int = 100_000, k: int | None = None,
                    targets=REPULSION_TARGETS) -> dict:
    """Small-gap tail slopes at the bulk index k for each (beta, order) target."""
    clock = _clock()
    k = N // 2 if k is None else int(k)
    gaps, rows = {}, []
    for beta, order, want, tol in targets:
        if beta not in gaps:
            X = sample_gaussian_beta_tridiagonal(N, beta, rng, size=draws)
            gaps[beta] = gap_distribution(X, semicircle(), k, n=2, descriptor={"beta": beta})
        fit = level_repulsion_exponent(gaps[beta], order=order)
        rows.append({"beta": beta, "order": order, "slope": fit.slope, "target": want,
                     "tolerance": tol, "ci": list(fit.ci), "warnings": list(fit.warnings),
                     "satisfied": bool(abs(fit.slope - want) <= tol)})
    return {"suite": "repulsion", "N": N, "draws": draws, "k": k, "fits": rows,
            "runtime": clock(), "satisfied": all(r["satisfied"] for r in rows)}


def _bulk(N: int, half: int) -> range:
    return range(N // 2 - half, N // 2 + half + 1)


def wigner_universality_suite(rng, N: int = 200, draws: int = 2000, half: int = 20,
                              n_boot: int = 200, ks_max: float = 0.1, ci_max: float = 0.2) -> dict:
    """GOE (tridiagonal, beta=1) versus Bernoulli-entry real Wigner, pooled bulk gaps."""
    clock = _clock()
    ks_idx = _bulk(N, half)
    A = sample_gaussian_beta_tridiagonal(N, 1.0, rng, size=draws)
    prof = VarianceProfile.uniform(N)
    B = np.array([sample_generalized_wigner(prof, "bernoulli", "real", rng).positions
                  for _ in range(draws)])
    ga = gap_distribution(A, semicircle(), ks_idx, descriptor={"beta": 1.0})
    gb = gap_distribution(B, semicircle(), ks_idx, descriptor={"beta": 1.0})
    rep = universality_compare(ga, gb, n_boot=n_boot, rng=rng).to_json()
    return {"suite": "wigner_universality", "comparison": rep, "runtime": clock(),
            "satisfied": bool(rep["value"] < ks_max and rep["CI"][1] < ci_max)}


def quartic_universality_suite(rng, N: int = 100, chains: int = 20, burn_in: int = 4000,
                               n_samples: int = 250, thin: int = 20, gue_draws: int = 5000,
                               half: int = 20, n_boot: int = 200, ks_max: float = 0.1,
                               ci_max: float = 0.2) -> dict:
    """Quartic-potential beta=2 MALA samples versus GUE, pooled bulk gaps."""
    clock = _clock()
    ks_idx = _bulk(N, half)
    V = PotentialModel.quartic()
    mu = LogGasMeasure.global_gas(V, N, 2.0)
    ch = sample_log_gas_mcmc(mu, ChainParams(burn_in=burn_in, n_samples=n_samples, thin=thin,
                                             chains=chains), rng)
    gq = gap_distribution(ch.samples, solve_equilibrium_density(V), ks_idx, descriptor={"beta": 2.0})
    X = sample_gaussian_beta_tridiagonal(N, 2.0, rng, size=gue_draws)
    gg = gap_distribution(X, semicircle(), ks_idx, descriptor={"beta": 2.0})
    rep = universality_compare(gq, gg, n_boot=n_boot, rng=rng).to_json()
    return {"suite": "quartic_universality", "comparison": rep,
            "acceptance_rate": ch.acceptance_rate, "runtime": clock(),
            "satisfied": bool(rep["value"] < ks_max and rep["CI"][1] < ci_max)}


def index_independence_suite(rng, N: int = 200, draws: int = 10_000, beta: float = 1.0,
                             ks_max: float = 0.05) -> dict:
    """KS distance between unfolded gaps at k = N/4 and k = N/2."""
    clock = _clock()
    X = sample_gaussian_beta_tridiagonal(N, beta, rng, size=draws)
    a = gap_distribution(X, semicircle(), N // 4).values(1)
    b = gap_distribution(X, semicircle(), N // 2).values(1)
    ks = ks_distance(a, b)
    return {"suite": "index_independence", "N": N, "draws": draws, "beta": beta, "ks": ks,
            "runtime": clock(), "satisfied": bool(ks < ks_max)}


# ---------------------------------------------------------------- dynamics

def equilibrium_paths(rng, K: int, N: int, beta: float, paths: int, T: float,
                      burn_in: int = 2000, dt_max: float = 1e-2, store_every: float = 0.25):
    """Local Gaussian gas started from MALA equilibrium and run by DBM for time T."""
    mu, _ = local_gaussian_gas(K, N, beta=beta)
    ch = sample_log_gas_mcmc(mu, ChainParams(burn_in=burn_in, n_samples=1, thin=1, chains=paths), rng)
    path = integrate_dbm(ch.samples, mu, T, rng, dt=DtParams(dt_max=dt_max, store_every=store_every))
    return mu, path


def nash_decay_suite(rng, K: int = 64, N: int | None = None, beta: float = 2.0, paths: int = 100,
                     T: float = 8.0, store_every: float = 0.25, tolerance: float = 0.05,
                     burn_in: int = 2000) -> dict:
    """Delta initial data at the window centre along equilibrium DBM paths.

    The kernel floor b is certified per path as a running minimum over the
    slices in use; a violation is any stored time where the sup norm exceeds
    (s b)^{-1} ||v(0)||_1 times (1 + tolerance).
    """
    clock = _clock()
    N = 8 * K if N is None else int(N)
    _, P = equilibrium_paths(rng, K, N, beta, paths, T, burn_in, store_every=store_every)
    violations, floors, unmet = 0, [], 0
    for p in range(paths):
        kern = build_hessian_kernel(P.path(p))
        sol = propagate(kern, delta(K, 0), 0.0, T, store=P.times)
        r = check_nash_decay(sol, kern, tolerance=tolerance)
        violations += r.violations
        unmet += int(r.precondition_unmet)
        floors.append(float(np.min(r.b_floor)))
    return {"suite": "decay", "K": K, "N": N, "beta": beta, "paths": paths, "T": T,
            "violations": int(violations), "precondition_unmet": int(unmet),
            "floor_min": float(np.min(floors)), "floor_median": float(np.median(floors)),
            "dbm": P.diagnostics, "runtime": clock(),
            "satisfied": bool(violations == 0 and unmet == 0)}


def ordering_suite(rng, N: int = 100, beta: float = 1.0, paths: int = 1000, T: float = 1.0,
                   batch: int = 250, store_every: float = 0.5) -> dict:
    """DBM from tridiagonal samples in microscopic units; counts order violations.

    Violations are counted on every accepted step by the integrator.
    """
    clock = _clock()
    mu = global_micro_gas(PotentialModel.quadratic(), N, beta)
    agg = {"accepted_steps": 0, "rejected_steps": 0, "floor_rejections": 0,
           "ordering_violations": 0, "min_gap": np.inf}
    done = 0
    while done < paths:
        m = min(batch, paths - done)
        X = sample_gaussian_beta_tridiagonal(N, beta, rng, size=m) * N
        d = integrate_dbm(X, mu, T, rng, dt=DtParams(store_every=store_every)).diagnostics
        for key in ("accepted_steps", "rejected_steps", "floor_rejections", "ordering_violations"):
            agg[key] += int(d[key])
        agg["min_gap"] = min(agg["min_gap"], float(d["min_gap"]))
        done += m
    return {"suite": "ordering", "N": N, "beta": beta, "paths": paths, "T": T, **agg,
            "runtime": clock(), "satisfied": agg["ordering_violations"] == 0}


# ---------------------------------------------------------------- parabolic

def random_floor_kernel(rng, K: int) -> HessianKernel:
    """Constant kernel with B_jk in [1, 3]/(j-k)^2 and W_j in [1, 2]/d_j."""
    n = 2 * K + 1
    i = np.arange(n)
    d2 = (i[:, None] - i[None, :]).astype(float) ** 2
    B = rng.uniform(1.0, 3.0, (n, n)) / np.where(d2 == 0, 1.0, d2)
    B = 0.5 * (B + B.T)
    np.fill_diagonal(B, 0.0)
    W = rng.uniform(1.0, 2.0, n) / boundary_distance(K)
    return HessianKernel.constant(B, W)


def propagator_suite(rng, K: int = 64, kernels: int = 50, t: float = 5.0,
                     rel_max: float = 1e-6) -> dict:
    clock = _clock()
    errs = []
    for _ in range(kernels):
        kern = random_floor_kernel(rng, K)
        v0 = delta(K, int(rng.integers(-K, K + 1)))
        got = propagate(kern, v0, 0.0, t).values[-1]
        ref = dense_expm_oracle(kern, v0, t)
        errs.append(float(np.max(np.abs(got - ref)) / np.max(np.abs(ref))))
    return {"suite": "propagator", "K": K, "kernels": kernels, "t": t,
            "max_relative_error": max(errs), "runtime": clock(),
            "satisfied": bool(max(errs) < rel_max)}


def holder_suite(K: int = 256, ratio: float = 2.0, alpha: float = 1 / 3, Z: int = 0) -> dict:
    """sigma times the box oscillation of the propagated delta for B = 1/(i-j)^2.

    sigma runs over the geometric grid K^0.3 ratio^m up to K^0.7.  The
    suite asks for a strictly decreasing sequence and a positive effective
    exponent from the log-log regression.
    """
    clock = _clock()
    m = int(np.floor(np.log(K ** 0.4) / np.log(ratio) + 1e-9))
    sigmas = K ** 0.3 * ratio ** np.arange(m + 1)
    kern = HessianKernel.inverse_square(K)
    sol = propagate(kern, delta(K, Z), 0.0, float(sigmas[-1]), store=np.concatenate([[0.0], sigmas]))
    osc = np.array([holder_oscillation(sol, Z, s, alpha, window="box") for s in sigmas])
    scaled = sigmas * osc
    q, slope, err = effective_holder_exponent(sigmas, osc, alpha)
    decreasing = bool(np.all(np.diff(scaled) < 0))
    return {"suite": "holder", "K": K, "alpha": alpha, "sigmas": sigmas.tolist(),
            "scaled_oscillation": scaled.tolist(), "q": q, "slope": slope, "slope_stderr": err,
            "decreasing": decreasing, "runtime": clock(), "satisfied": bool(decreasing and q > 0)}


def representation_suite(rng, K: int = 5, N: int = 200, beta: float = 2.0, pairs: int = 20,
                         paths: int = 500, chains: int = 8, n_samples: int = 5000, thin: int = 5,
                         horizon_factor: float = 6.0, z_max: float = 3.0, need: int = 18,
                         dt_max: float = 0.02) -> dict:
    """Representation estimates of <c.x; d.x> against direct MALA covariances.

    One tangent flow with W(0) = I gives the response matrix Q_p per path;
    for each random pair (c, d) the estimate is the path mean of c^T Q_p d.
    The horizon is horizon_factor * tau * log(2K+1), with tau the inverse of
    the smallest Hessian eigenvalue seen on the starting samples.  The
    slowest tangent mode decays like exp(-S / (2 tau)), so the omitted tail
    is of relative size (2K+1)^{-horizon_factor/2}.
    """
    clock = _clock()
    mu, _ = local_gaussian_gas(K, N, beta=beta)
    S = sample_log_gas_mcmc(mu, ChainParams(burn_in=2000, n_samples=n_samples, thin=thin,
                                            chains=chains), rng).samples
    x0 = S[rng.choice(S.shape[0], paths, replace=False)]
    tau = convexity_time(mu, x0, 50)
    T = horizon_factor * tau * np.log(mu.n)
    Q, diag = response_matrix(mu, x0, T, rng, DtParams(dt_max=dt_max))
    rows = []
    for _ in range(pairs):
        c, d = rng.standard_normal(mu.n), rng.standard_normal(mu.n)
        est = np.einsum("i,pij,j->p", c, Q, d)
        cov, se = direct_covariance(Observable.linear(c), Observable.linear(d), S)
        se_est = float(np.std(est, ddof=1) / np.sqrt(paths))
        z = float((est.mean() - cov) / np.hypot(se_est, se))
        rows.append({"estimate": float(est.mean()), "estimate_se": se_est, "direct": cov,
                     "direct_se": se, "z": z, "match": bool(abs(z) < z_max)})
    matches = sum(r["match"] for r in rows)
    return {"suite": "representation", "K": K, "beta": beta, "paths": paths, "tau": tau,
            "horizon": float(T), "pairs": rows, "matches": int(matches), "flow": diag,
            "runtime": clock(), "satisfied": bool(matches >= need)}


# ---------------------------------------------------------------- inequalities

def gn_suite(seed: int, trials: int = 10_000, invariance_trials: int = 200,
             p: float = 4.0, s: float = 1.0, growth_max: float = 1.5) -> dict:
    """Invariance of the GN ratio and the fuzzed minimal constant of the global check."""
    clock = _clock()
    rng = np.random.default_rng(seed)
    scale_err = shift_err = 0.0
    for _ in range(invariance_trials):
        f = random_lattice_function(rng)
        r = gn_ratio(f, p, s)
        lam = float(np.exp(rng.uniform(-5, 5))) * rng.choice([-1.0, 1.0])
        scale_err = max(scale_err, abs(gn_ratio(f.scaled(lam), p, s) - r) / r)
        shift_err = max(shift_err, abs(gn_ratio(f.shifted(int(rng.integers(-10**6, 10**6))), p, s) - r) / r)
    res = fuzz_gn_global(trials, seed)
    eps = 8 * np.finfo(float).eps
    return {"suite": "gn", "trials": trials, "scale_invariance_error": scale_err,
            "translation_invariance_error": shift_err, "running_max": res.max,
            "growth_ratio": res.growth_ratio(), "delta_ratio": gn_ratio(LatticeFunction.delta(0), p, s),
            "runtime": clock(),
            "satisfied": bool(scale_err <= eps and shift_err <= eps and res.growth_ratio() <= growth_max)}


# ---------------------------------------------------------------- regularity

def regularity_suite(K: int = 32, N: int = 4096, xi: float = 0.3, L: int | None = None,
                     factor: float = 10.0, C: float = 10.0) -> dict:
    """Boundary at exact semicircle quantiles, then a factor * K^xi / N perturbation.

    The perturbation keeps the innermost point above J and pushes all the
    others outward by factor * K^xi / N, opening a hole next to the window.
    """
    clock = _clock()
    L = N // 2 if L is None else int(L)
    sc = semicircle()
    g = classical_locations(sc, N)
    idx = np.arange(1, N + 1)
    below, above = g[idx < L - K], g[idx > L + K]
    V = PotentialModel.quadratic()
    bd = BoundaryData(below, above)
    rho = float(sc.density(bd.midpoint))
    base = check_regular_potential(ExternalPotential(V, bd, N), rho, xi, K, N, C=C)
    h = factor * K ** xi / N
    moved = np.concatenate([above[:1], above[1:] + h])
    pert = check_regular_potential(ExternalPotential(V, BoundaryData(below, moved), N), rho, xi, K, N, C=C)

    def rep(r):
        return {"interval_length_ok": r.interval_length_ok, "derivative_profile_ok": r.derivative_profile_ok,
                "convexity_ok": r.convexity_ok, "interval_residual": r.interval_residual,
                "derivative_residual": r.derivative_residual, "convexity_margin": r.convexity_margin}

    return {"suite": "regularity", "K": K, "N": N, "xi": xi, "C": C, "factor": factor,
            "exact": rep(base), "perturbed": rep(pert), "runtime": clock(),
            "exact_regular": base.regular, "perturbation_detected": not pert.derivative_profile_ok,
            "satisfied": bool(base.regular and not pert.derivative_profile_ok)}


SUITES = {
    "semicircle": semicircle_suite,
    "repulsion": repulsion_suite,
    "wigner_universality": wigner_universality_suite,
    "quartic_universality": quartic_universality_suite,
    "index_independence": index_independence_suite,
    "decay": nash_decay_suite,
    "ordering": ordering_suite,
    "propagator": propagator_suite,
    "holder": holder_suite,
    "representation": representation_suite,
    "gn": gn_suite,
    "regularity": regularity_suite,
}
SEEDED_BY_INT = ("gn",)
DETERMINISTIC = ("holder", "regularity")
