"""The parabolic system dv/dt = -A(t) v and the estimates built on it.

A(t) acts on vectors indexed by the window -K..K as

    (A v)_j = -sum_k B_jk (v_k - v_j) + W_j v_j,

with B >= 0 symmetric and W >= 0, so exp(-tA) is a symmetric sub-Markov
matrix: it preserves signs and contracts every l^p norm.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, linalg, stats

from .dynamics import (DtParams, HessianKernel, check_regularity_point, integrate_tangent_flow,
                       operator_matrix)
from .errors import ContractError, DomainError, IntegrationError, PreconditionError
from .samplers import ChainParams, LogGasMeasure, sample_log_gas_mcmc

log = logging.getLogger(__name__)

SINGULAR_THRESHOLD = 1e12


@dataclass
class PropagatorSolution:
    times: np.ndarray
    values: np.ndarray          # (T, n)
    source: int | None = None   # local index of a delta initial condition
    K: int = 0

    @property
    def initial(self) -> np.ndarray:
        return self.values[0]

    def norm(self, p: float) -> np.ndarray:
        return np.linalg.norm(self.values, ord=p, axis=1)

    def at(self, s: float, tol: float = 1e-9) -> np.ndarray:
        """Values at a stored time s (relative tolerance ``tol``)."""
        k = int(np.argmin(np.abs(self.times - s)))
        if abs(self.times[k] - s) > tol * max(1.0, abs(s)):
            raise DomainError(f"time {s} is not a stored time of the solution")
        return self.values[k]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "index", "value"])
            for t, row in zip(self.times, self.values):
                for j, v in zip(range(-self.K, -self.K + row.size), row):
                    w.writerow(["%.17g" % t, j, "%.17g" % v])


def delta(K: int, b: int) -> np.ndarray:
    """Unit vector at local index b of the window -K..K."""
    if abs(b) > K:
        raise DomainError(f"source {b} outside -{K}..{K}")
    v = np.zeros(2 * K + 1)
    v[b + K] = 1.0
    return v


def propagate(kernel: HessianKernel, initial, t0: float, t1: float,
              store=None, method: str = "expm", max_dt: float = 0.05,
              dt_params: DtParams | None = None) -> PropagatorSolution:
    """Solve dv/dt = -A(t) v on [t0, t1] for a piecewise-constant kernel.

    ``method="expm"`` applies exp(-tau A) on every interval where the
    kernel is constant (exact for such kernels, via an eigendecomposition
    of the symmetric operator).  ``method="implicit_euler"`` takes backward
    Euler sub-steps of size at most ``max_dt``.  Values are stored at
    ``store`` (default: t0, every kernel breakpoint inside and t1).
    If ``dt_params`` is given its ``dt_max`` replaces ``max_dt``.
    """
    if dt_params is not None:
        max_dt = dt_params.dt_max
    v = np.array(initial, dtype=float)
    if v.shape != (kernel.n,):
        raise ContractError(f"initial vector must have length {kernel.n}")
    if not np.all(np.isfinite(v)):
        raise ContractError("initial vector must be finite")
    if t1 < t0:
        raise ContractError("t1 must not precede t0")
    if kernel.times.size > 1 and t0 < kernel.times[0]:
        raise ContractError("kernel is not defined at t0")
    inner = kernel.times[(kernel.times > t0) & (kernel.times < t1)]
    store = np.unique(np.concatenate([[t0], inner, [t1]])) if store is None else np.unique(
        np.clip(np.asarray(store, float), t0, t1))
    knots = np.unique(np.concatenate([[t0, t1], inner, store]))
    cache: dict = {}
    out = {t0: v.copy()}
    for a, b in zip(knots[:-1], knots[1:]):
        k = kernel.index_at(a)
        if k not in cache:
            B, W = kernel.B[k], kernel.W[k]
            if np.max(B) > SINGULAR_THRESHOLD:
                raise IntegrationError("kernel exceeds the singularity threshold",
                                       {"time": float(kernel.times[k]), "max_B": float(np.max(B))})
            cache[k] = operator_matrix(B, W)
        A = cache[k]
        tau = b - a
        if method == "expm":
            key = ("eig", k)
            if key not in cache:
                cache[key] = linalg.eigh(A)
            lam, Q = cache[key]
            v = Q @ (np.exp(-tau * lam) * (Q.T @ v))
        elif method == "implicit_euler":
            m = max(1, int(np.ceil(tau / max_dt)))
            key = ("lu", k, tau / m)
            if key not in cache:
                cache[key] = linalg.lu_factor(np.eye(A.shape[0]) + (tau / m) * A)
            for _ in range(m):
                v = linalg.lu_solve(cache[key], v)
        else:
            raise DomainError(f"unknown method {method!r}")
        out[b] = v.copy()
    times = np.array(sorted(t for t in out if np.any(np.isclose(t, store, rtol=0, atol=1e-14))))
    values = np.array([out[t] for t in times])
    src = None
    nz = np.flatnonzero(values[0])
    if nz.size == 1 and values[0][nz[0]] == 1.0:
        src = int(nz[0]) - kernel.K
    return PropagatorSolution(times, values, src, kernel.K)


def dense_expm_oracle(kernel: HessianKernel, initial, t: float) -> np.ndarray:
    """exp(-t A) v for a time-constant kernel, by scipy's Pade expm."""
    A = operator_matrix(kernel.B[0], kernel.W[0])
    return linalg.expm(-t * A) @ np.asarray(initial, float)


# ---------------------------------------------------------------- Nash decay

def boundary_distance(K: int) -> np.ndarray:
    """d_j = ||j| - K| + 1 for j = -K..K."""
    j = np.arange(-K, K + 1)
    return np.abs(np.abs(j) - K) + 1.0


def kernel_floor(B: np.ndarray, W: np.ndarray) -> float:
    """Largest b with B_jk >= b/(j-k)^2 and W_j >= b/d_j for this slice."""
    n = W.size
    K = (n - 1) // 2
    i = np.arange(n)
    dist2 = (i[:, None] - i[None, :]) ** 2.0
    off = ~np.eye(n, dtype=bool)
    bB = np.min(B[off] * dist2[off]) if n > 1 else np.inf
    bW = np.min(W * boundary_distance(K))
    return float(min(bB, bW))


@dataclass
class NashDecayReport:
    times: np.ndarray
    bound: np.ndarray
    attained: np.ndarray
    b_floor: np.ndarray
    satisfied: bool
    precondition_unmet: bool
    violations: int
    p: float
    q: float
    tolerance: float

    def to_json(self) -> dict:
        return {"p": self.p, "q": self.q, "satisfied": self.satisfied,
                "precondition_unmet": self.precondition_unmet, "violations": self.violations,
                "tolerance": self.tolerance, "min_b_floor": float(np.min(self.b_floor)),
                "max_ratio": float(np.max(self.attained[1:] / self.bound[1:])) if self.times.size > 1 else 0.0}


def nash_bound(s, b, norm0, p, q):
    """(s b)^{-(1/p - 1/q)} ||u(0)||_p."""
    e = (1.0 / p) - (0.0 if np.isinf(q) else 1.0 / q)
    with np.errstate(divide="ignore"):
        return np.power(np.asarray(s, float) * b, -e) * norm0


def check_nash_decay(solution: PropagatorSolution, kernel: HessianKernel,
                     b_floor: float | None = None, p: float = 1.0, q: float = np.inf,
                     tolerance: float = 0.05) -> NashDecayReport:
    """Compare ||u(s)||_q with (s b)^{-(1/p-1/q)} ||u(0)||_p at stored times.

    The floors B_jk >= b/(j-k)^2 and W_j >= b/d_j are certified by scanning
    every kernel slice in use up to time s.  With ``b_floor=None`` the bound
    at time s uses the running certified floor on [t0, s]; otherwise the
    given b is used and ``precondition_unmet`` is set if the scan finds a
    smaller floor.
    """
    t0 = solution.times[0]
    s = solution.times - t0
    slices = np.array([kernel.index_at(t) for t in solution.times])
    per_slice = {k: kernel_floor(kernel.B[k], kernel.W[k]) for k in np.unique(slices)}
    # the slice in force on [t_i, t_{i+1}) is the one at t_i; running minimum
    cert = np.minimum.accumulate([per_slice[k] for k in slices])
    cert_before = np.concatenate([[cert[0]], cert[:-1]])
    running = np.minimum(cert, cert_before)
    unmet = False
    if b_floor is None:
        b = running
    else:
        unmet = bool(np.min(running) < b_floor * (1 - 1e-12))
        b = np.full_like(running, b_floor)
    norm0 = np.linalg.norm(solution.values[0], ord=p)
    bound = nash_bound(s, b, norm0, p, q)
    attained = solution.norm(q)
    ok = attained[1:] <= bound[1:] * (1 + tolerance)
    if np.any(b <= 0):
        unmet = True
    return NashDecayReport(solution.times, bound, attained, b, bool(np.all(ok)) and not unmet,
                           unmet, int(np.sum(~ok)), p, q, tolerance)


# ---------------------------------------------------------------- finite speed

@dataclass
class FiniteSpeedReport:
    s: float
    source: int
    profile: np.ndarray
    short_range_profile: np.ndarray
    envelope_constant: float
    short_range_constant: float
    theta: float
    rho1: float
    tail_slope: float
    envelope_respected_from: int
    details: dict = field(default_factory=dict)


def regularity_exponent(kernel: HessianKernel, s: float, Z: int = 0) -> float:
    """Attained exponent rho_1 with (1/(1+s)) int_0^s (1/M) sum B <= K^rho_1."""
    K = kernel.K
    n = kernel.n
    z = Z + K
    t = np.concatenate([kernel.times[kernel.times < s], [s]]) if kernel.times.size > 1 else np.array([0.0, s])
    vals = []
    for tt in t:
        B = kernel.slice(tt)[0]
        c = np.zeros((n + 1, n + 1))
        c[1:, 1:] = B.cumsum(0).cumsum(1)
        sums = []
        for M in range(1, K + 1):
            a, b = max(z - M, 0), min(z + M, n - 1) + 1
            sums.append((c[b, b] - c[a, b] - c[b, a] + c[a, a]) / M)
        vals.append(max(sums))
    vals = np.array(vals)
    integral = integrate.trapezoid(vals, t) if t.size > 1 else 0.0
    q = max(integral / (1 + s), 1e-300)
    return float(np.log(q) / np.log(K))


def split_kernel(kernel: HessianKernel, ell: int) -> tuple[HessianKernel, HessianKernel]:
    """Short-range part S (|j-k| <= ell, with W) and long-range part R."""
    n = kernel.n
    i = np.arange(n)
    near = np.abs(i[:, None] - i[None, :]) <= ell
    S = HessianKernel(kernel.times, kernel.B * near, kernel.W, kernel.beta)
    R = HessianKernel(kernel.times, kernel.B * ~near, np.zeros_like(kernel.W), kernel.beta)
    return S, R


def finite_speed_profile(kernel: HessianKernel, b: int, ell: int, s: float,
                         theta: float | None = None, rho1: float | None = None,
                         min_distance: int | None = None) -> FiniteSpeedReport:
    """Propagate a delta at b with the full and the short-range operator.

    Reports the fitted constant C of |v_p(s)| <= C sqrt(s+1)/|p-b| over
    |p-b| >= ``min_distance`` and the constant of the short-range bound
    r_j(s) <= C exp(-|j-b|/theta) with theta = ell K^{(rho_1+1)/2} sqrt(s+1)
    unless given.  ``tail_slope`` is a log-linear fit of log r_j against
    |j-b| beyond ell.
    """
    K = kernel.K
    t0 = kernel.times[0]
    if rho1 is None:
        rho1 = regularity_exponent(kernel, s)
    if theta is None:
        theta = ell * K ** ((rho1 + 1) / 2) * np.sqrt(s + 1)
    v0 = delta(K, b)
    full = propagate(kernel, v0, t0, t0 + s, store=[t0, t0 + s]).values[-1]
    S, _ = split_kernel(kernel, ell)
    short = propagate(S, v0, t0, t0 + s, store=[t0, t0 + s]).values[-1]
    dist = np.abs(np.arange(-K, K + 1) - b)
    md = max(1, int(min_distance if min_distance is not None else 1))
    far = dist >= md
    env = np.max(np.abs(full[far]) * dist[far] / np.sqrt(s + 1)) if np.any(far) else 0.0
    cshort = float(np.max(np.abs(short) * np.exp(dist / theta)))
    tail = (dist > ell) & (np.abs(short) > 1e-280)
    slope = np.nan
    if np.sum(tail) >= 3:
        slope = float(stats.linregress(dist[tail], np.log(np.abs(short[tail]))).slope)
    return FiniteSpeedReport(s, b, full, short, float(env), cshort, float(theta), float(rho1),
                             slope, md, {"ell": ell, "K": K})


# ---------------------------------------------------------------- Hoelder

def holder_oscillation(solution: PropagatorSolution, Z: int, sigma: float, alpha: float,
                       window: str = "sum", t_offset: float | None = None) -> float:
    """Oscillation of v(sigma) over pairs near Z.

    ``window="sum"``: pairs with |j-Z| + |j'-Z| <= sigma^{1-alpha};
    ``window="box"``: pairs with |j-Z|, |j'-Z| <= sigma^{1-alpha}.
    sigma is measured from the first stored time unless ``t_offset`` is set.
    """
    if not 0 <= alpha <= 1 / 3 + 1e-12:
        raise DomainError("alpha must lie in [0, 1/3]")
    K = solution.K
    t0 = solution.times[0] if t_offset is None else t_offset
    v = solution.at(t0 + sigma)
    w = int(np.floor(sigma ** (1 - alpha) + 1e-9))
    if abs(Z) + w > K:
        raise DomainError(f"window of half-width {w} around {Z} exceeds -{K}..{K}")
    z = Z + K
    M = np.array([v[z - r:z + r + 1].max() for r in range(w + 1)])
    m = np.array([v[z - r:z + r + 1].min() for r in range(w + 1)])
    if window == "box":
        return float(M[w] - m[w])
    if window == "sum":
        return float(np.max(M - m[::-1]))
    raise DomainError("window must be 'sum' or 'box'")


def effective_holder_exponent(sigmas, oscillations, alpha: float, power: float = 1.0):
    """Fit log(sigma^power osc) = c - (q alpha / 2) log sigma.

    Returns (q, slope, stderr of slope).  ``power=1`` matches the delta
    initial data normalization sigma^{-1-q alpha/2}.
    """
    x = np.log(np.asarray(sigmas, float))
    y = np.log(np.asarray(sigmas, float) ** power * np.asarray(oscillations, float))
    fit = stats.linregress(x, y)
    return float(-2 * fit.slope / alpha), float(fit.slope), float(fit.stderr)


# ---------------------------------------------------------------- representation

@dataclass
class Observable:
    """Smooth observable with value and gradient, both vectorized over rows."""

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    name: str = ""

    @classmethod
    def linear(cls, c, name: str = "") -> "Observable":
        c = np.asarray(c, float)
        return cls(lambda x: x @ c, lambda x: np.broadcast_to(c, x.shape).copy(), name)

    @classmethod
    def constant(cls, value: float = 1.0) -> "Observable":
        return cls(lambda x: np.full(x.shape[0], value), lambda x: np.zeros_like(x), "constant")

    @classmethod
    def smooth(cls, c, a: float, name: str = "") -> "Observable":
        """sin(a c.x) / a: bounded gradient c cos(a c.x)."""
        c = np.asarray(c, float)
        return cls(lambda x: np.sin(a * (x @ c)) / a,
                   lambda x: np.cos(a * (x @ c))[:, None] * c[None, :], name)


@dataclass
class CorrelationEstimate:
    value: float
    stderr: float
    n_paths: int
    horizon: float
    tau: float
    details: dict = field(default_factory=dict)


def convexity_time(measure: LogGasMeasure, samples: np.ndarray, n_check: int = 20) -> float:
    """tau = 1 / min smallest Hessian eigenvalue over a subset of samples."""
    idx = np.linspace(0, samples.shape[0] - 1, min(n_check, samples.shape[0])).astype(int)
    lam = min(measure.min_hessian_eigenvalue(samples[i]) for i in idx)
    if not lam > 0:
        raise PreconditionError(f"Hessian is not positive definite (min eigenvalue {lam:.3g})")
    return 1.0 / lam


def representation_sides(measure: LogGasMeasure, F: Observable, G: Observable, T: float,
                         x0: np.ndarray, rng: np.random.Generator, dt: DtParams | None = None):
    """Both sides of E[F G] - E[F(x_0) G(x_T)] = (1/2) int_0^T E[w(S) . grad G(x(S))] dS.

    x0 are samples of the measure; w(0) = grad F(x0) evolves by
    dw/dS = -(D/2) Hess Phi(x(S)) w along the path.  Returns per-path
    arrays (lhs terms, rhs terms).
    """
    x0 = np.atleast_2d(x0)
    D = measure.diffusion
    w0 = F.gradient(x0)

    def integrand(x, g, w):
        return 0.5 * D * np.sum(w * G.gradient(x), axis=1)

    xT, _, integral, diag = integrate_tangent_flow(x0, w0, measure, T, rng, integrand,
                                                   dt or DtParams(dt_max=0.01))
    f0 = F.value(x0)
    lhs = f0 * G.value(x0) - f0 * G.value(xT)
    return lhs, integral, diag


def correlation_via_representation(measure: LogGasMeasure, F: Observable, G: Observable,
                                   n_paths: int, rng: np.random.Generator,
                                   T_max: float | None = None, A: float = 6.0,
                                   x0: np.ndarray | None = None,
                                   chain: ChainParams | None = None,
                                   dt: DtParams | None = None) -> CorrelationEstimate:
    """Estimate <F; G> by the random-walk representation.

    Samples x0 from the measure by MALA unless given, verifies strict
    convexity (tau = 1/min eig Hess Phi), then integrates
    (1/2) int_0^{T_max} E[w . grad G] with T_max = A tau log(2K+1) by default.
    The omitted tail is bounded by |(1/2) E[w . grad G]| at T_max times
    2 tau / D (exponential decay at rate D / (2 tau)), reported in details.
    """
    if x0 is None:
        chain = chain or ChainParams(burn_in=2000, n_samples=n_paths, thin=20, chains=1)
        x0 = sample_log_gas_mcmc(measure, chain, rng).samples[:n_paths]
    tau = convexity_time(measure, x0)
    if T_max is None:
        T_max = A * tau * np.log(max(measure.n, 2))
    D = measure.diffusion
    w0 = F.gradient(x0)
    if not np.any(w0):
        return CorrelationEstimate(0.0, 0.0, x0.shape[0], T_max, tau, {"zero_gradient": True})

    def integrand(x, g, w):
        return 0.5 * D * np.sum(w * G.gradient(x), axis=1)

    xT, wT, integral, diag = integrate_tangent_flow(x0, w0, measure, T_max, rng, integrand,
                                                    dt or DtParams(dt_max=0.01))
    end = integrand(xT, None, wT)
    tail = float(abs(np.mean(end)) * 2 * tau / D)
    return CorrelationEstimate(float(np.mean(integral)), float(np.std(integral, ddof=1) / np.sqrt(integral.size)),
                               int(integral.size), float(T_max), float(tau),
                               {"tail_bound": tail, **diag})


def response_matrix(measure: LogGasMeasure, x0: np.ndarray, T: float, rng: np.random.Generator,
                    dt: DtParams | None = None):
    """Per-path Q_p = (D/2) int_0^T W_p(S) dS for the tangent flow W(0) = I.

    Row b of W_p(S) is the propagated vector started from e_b, so for linear
    observables F = c.x, G = d.x the path average of c^T Q_p d estimates
    E[F G] - E[F(x_0) G(x_T)], which tends to <F; G> as T grows.
    Returns (Q of shape (P, n, n), diagnostics).
    """
    x0 = np.atleast_2d(x0)
    P, n = x0.shape
    D = measure.diffusion
    eye = np.broadcast_to(np.eye(n), (P, n, n)).copy()
    _, _, Q, diag = integrate_tangent_flow(x0, eye, measure, T, rng, lambda x, g, w: 0.5 * D * w,
                                           dt or DtParams(dt_max=0.02))
    return Q, diag


def direct_covariance(F: Observable, G: Observable, samples: np.ndarray, n_batches: int = 20):
    """Sample covariance with a batch-means standard error."""
    f, g = F.value(samples), G.value(samples)
    cov = float(np.mean((f - f.mean()) * (g - g.mean())))
    parts = np.array_split(np.arange(f.size), n_batches)
    bm = np.array([np.mean((f[p] - f[p].mean()) * (g[p] - g[p].mean())) for p in parts])
    return cov, float(np.std(bm, ddof=1) / np.sqrt(n_batches))


# ---------------------------------------------------------------- cutoffs

@dataclass
class CutoffFamily:
    indices: np.ndarray
    psi: np.ndarray
    psi_tilde: np.ndarray
    F: np.ndarray
    phi0: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray
    M: float
    Z: int
    ell: float
    lam: float


def psi_cutoff(indices, M: float, Z: int, ell: float) -> np.ndarray:
    """psi_i = ell (|(i-Z)/M|^{1/2} - 1)_+."""
    r = np.abs((np.asarray(indices, float) - Z) / M)
    return ell * np.clip(np.sqrt(r) - 1.0, 0.0, None)


def build_cutoffs(M: float, Z: int, ell: float, lam: float, indices) -> CutoffFamily:
    """Cutoffs psi, psi~, F and the ordered family phi^(0) <= phi^(1) <= phi^(2)."""
    if not 0 < lam < 0.1:
        raise DomainError("lambda must lie in (0, 1/10)")
    if M < 1:
        raise DomainError("M must be at least 1")
    i = np.asarray(indices)
    r = np.abs((i - Z) / M)
    psi = psi_cutoff(i, M, Z, ell)
    inner = np.clip(r - lam ** -4, 0.0, None) ** 0.25
    psi_t = ell * np.clip(inner - 1.0, 0.0, None)
    F = ell * np.maximum(-1.0, np.minimum(0.0, r ** 2 - 81.0))
    base = ell + psi_t
    return CutoffFamily(i, psi, psi_t, F, base + F, base + lam * F, base + lam ** 2 * F,
                        M, Z, ell, lam)


@dataclass
class DeGiorgiEnergy:
    sup_term: float
    dissipation: float

    @property
    def total(self) -> float:
        return self.sup_term + self.dissipation


def de_giorgi_energy(solution: PropagatorSolution, cutoffs: CutoffFamily, kernel: HessianKernel,
                     T_k: float, ell_k: float, t_end: float | None = None) -> DeGiorgiEnergy:
    """U_k = sup_{[T_k,0]} (1/(M l^2)) sum (v - psi^l)_+^2 + (1/(M l^2)) int a[(v-psi^l)_+] ds.

    Time 0 is ``t_end`` (default: the last stored time); the integral uses
    the trapezoid rule on stored times in [t_end + T_k, t_end].  M and Z
    are taken from ``cutoffs``; psi is rescaled to level ``ell_k``.
    """
    t_end = solution.times[-1] if t_end is None else t_end
    t_start = t_end + T_k
    if t_start < solution.times[0] - 1e-12:
        raise ContractError("solution does not cover [T_k, 0]")
    sel = (solution.times >= t_start - 1e-12) & (solution.times <= t_end + 1e-12)
    ts = solution.times[sel]
    M = cutoffs.M
    psi = psi_cutoff(np.arange(-solution.K, solution.K + 1), M, cutoffs.Z, ell_k)
    u = np.clip(solution.values[sel] - psi[None, :], 0.0, None)
    norm = 1.0 / (M * ell_k ** 2)
    sup_term = norm * float(np.max(np.sum(u ** 2, axis=1)))
    forms = np.array([kernel.quadratic_form(t, row) for t, row in zip(ts, u)])
    diss = norm * float(integrate.trapezoid(forms, ts)) if ts.size > 1 else 0.0
    return DeGiorgiEnergy(sup_term, diss)
