"""Samplers for beta-ensembles, generalized Wigner matrices and local log-gases.

Every log-gas measure is handled through its negative log density

    Phi(x) = sum_i U(x_i) - beta * sum_{i<j} log|x_j - x_i|

where U is the one-body term.  The global measure exp(-N beta H) in
macroscopic units has U = (N beta / 2) V, the local measure exp(-beta H_y)
in microscopic units has U = (beta / 2) V_y, and the interpolating measure
replaces V_y by (1 - r) V_y + r V~_y~.  The reversible Langevin dynamics for
exp(-Phi) with noise variance ``diffusion`` per unit time is

    dx = sqrt(diffusion) dB - (diffusion / 2) grad Phi dt,

which is Dyson Brownian motion with diffusion 1/N (global, macroscopic) or 1
(local, microscopic).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numba
import numpy as np
from scipy.linalg import eigvalsh, lapack

from .core import (BoundaryData, ExternalPotential, ParticleConfiguration, PotentialModel,
                   Scaling, equidistant_alpha)
from .errors import ConstructionError, DomainError, IntegrationError

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- tridiagonal

def sample_gaussian_beta_tridiagonal(N: int, beta: float, rng: np.random.Generator,
                                     size: int | None = None):
    """Eigenvalues of the Gaussian beta-ensemble via its tridiagonal model.

    Diagonal N(0, 2), off-diagonal chi_{beta (N-k)}, all divided by
    sqrt(2) gives density ~ |Delta|^beta exp(-sum l^2 / 2); a further factor
    sqrt(2 / (N beta)) yields exp(-N beta sum l^2 / 4), whose empirical
    density tends to the semicircle on [-2, 2].

    Returns a ParticleConfiguration, or an array of shape (size, N) sorted
    row-wise when ``size`` is given.
    """
    if N < 1 or beta <= 0:
        raise DomainError("need N >= 1 and beta > 0")
    m = 1 if size is None else int(size)
    c = np.sqrt(2.0 / (N * beta)) / np.sqrt(2.0)
    df = beta * np.arange(N - 1, 0, -1)
    d = rng.normal(0.0, np.sqrt(2.0), (m, N)) * c
    e = np.sqrt(rng.chisquare(df, (m, N - 1))) * c
    out = np.empty((m, N))
    for r in range(m):
        if N == 1:
            out[r] = d[r]
            continue
        w, info = lapack.dsterf(d[r], e[r])
        if info != 0:
            raise IntegrationError("tridiagonal eigenvalue iteration failed", {"info": int(info)})
        out[r] = w
    if size is None:
        return ParticleConfiguration(out[0], 1, Scaling.MACRO)
    return out


# ---------------------------------------------------------------- Wigner

@dataclass(frozen=True)
class VarianceProfile:
    """Symmetric N x N variance matrix with unit column sums and 1/N bounds."""

    sigma_squared: np.ndarray
    c_inf: float = 1.0
    c_sup: float = 1.0

    def __post_init__(self):
        s = np.asarray(self.sigma_squared, dtype=float)
        N = s.shape[0]
        if s.ndim != 2 or s.shape != (N, N) or not np.allclose(s, s.T, atol=0, rtol=0):
            raise ConstructionError("variance profile must be a symmetric square matrix")
        if np.max(np.abs(s.sum(0) - 1.0)) > 1e-12:
            raise ConstructionError("variance profile columns must sum to 1")
        tol = 1e-12 / N
        if np.min(s) < self.c_inf / N - tol or np.max(s) > self.c_sup / N + tol:
            raise ConstructionError(
                f"variance profile violates {self.c_inf}/N <= sigma^2 <= {self.c_sup}/N")
        object.__setattr__(self, "sigma_squared", s)

    @property
    def N(self) -> int:
        return self.sigma_squared.shape[0]

    @classmethod
    def uniform(cls, N: int) -> "VarianceProfile":
        return cls(np.full((N, N), 1.0 / N), 1.0, 1.0)

    @classmethod
    def banded(cls, N: int, amplitude: float = 0.5) -> "VarianceProfile":
        """(1 + a cos(2 pi (i-j)/N)) / N; column sums stay exactly 1."""
        i = np.arange(N)
        s = (1.0 + amplitude * np.cos(2 * np.pi * (i[:, None] - i[None, :]) / N)) / N
        s = s / s.sum(0)[None, :]
        s = 0.5 * (s + s.T)
        return cls(s, max(0.0, 1 - amplitude) * 0.999, (1 + amplitude) * 1.001)


ENTRY_LAWS = ("gaussian", "bernoulli", "uniform")


def _entries(law: str, shape, rng):
    if law == "gaussian":
        return rng.standard_normal(shape)
    if law == "bernoulli":
        return rng.choice(np.array([-1.0, 1.0]), size=shape)
    if law == "uniform":
        return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), shape)
    raise DomainError(f"unknown entry law {law!r}; choose from {ENTRY_LAWS}")


def sample_generalized_wigner(profile: VarianceProfile, entry_law: str, symmetry: str,
                              rng: np.random.Generator) -> ParticleConfiguration:
    """Eigenvalues of H with independent entries h_ij = sigma_ij xi_ij, E|xi|^2 = 1."""
    N = profile.N
    sig = np.sqrt(profile.sigma_squared)
    if symmetry == "real":
        X = _entries(entry_law, (N, N), rng)
    elif symmetry == "complex":
        X = (_entries(entry_law, (N, N), rng) + 1j * _entries(entry_law, (N, N), rng)) / np.sqrt(2)
        X[np.diag_indices(N)] = _entries(entry_law, N, rng)
    else:
        raise DomainError("symmetry must be 'real' or 'complex'")
    U = np.triu(X, 1)
    H = sig * (U + U.conj().T + np.diag(np.real(np.diag(X))))
    return ParticleConfiguration(eigvalsh(H), 1, Scaling.MACRO)


# ---------------------------------------------------------------- log_eps

def regularized_log(x, epsilon: float):
    """C^2 concave extension of log below epsilon.

    Returns (value, second derivative).  For x < eps the function is the
    second-order Taylor polynomial of log at eps.
    """
    x = np.asarray(x, dtype=float)
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    u = (x - epsilon) / epsilon
    small = x < epsilon
    xs = np.where(small, epsilon, x)
    val = np.where(small, np.log(epsilon) + u - 0.5 * u * u, np.log(xs))
    d2 = np.where(small, -1.0 / epsilon ** 2, -1.0 / xs ** 2)
    return val, d2


def _log_eps_all(x, eps):
    """Value, first and second derivative of log_eps (eps=None means plain log)."""
    if eps is None:
        return np.log(x), 1.0 / x, -1.0 / (x * x)
    small = x < eps
    xs = np.where(small, eps, x)
    u = (x - eps) / eps
    return (np.where(small, np.log(eps) + u - 0.5 * u * u, np.log(xs)),
            np.where(small, (1.0 - u) / eps, 1.0 / xs),
            np.where(small, -1.0 / eps ** 2, -1.0 / (xs * xs)))


# ---------------------------------------------------------------- measures

@dataclass(frozen=True)
class OneBody:
    """One-body term U with vectorized first and second derivatives."""

    value: Callable
    d1: Callable
    d2: Callable
    inf_d2: float = 0.0


@dataclass(frozen=True)
class LogGasMeasure:
    """Gibbs measure exp(-Phi) of a log-gas (see module docstring).

    ``externals`` keeps the frozen points whose logarithmic field is part of
    U, with their weights, so the regularized measure can also regularize
    those terms.
    """

    beta: float
    n: int
    one_body: OneBody
    scaling: Scaling
    diffusion: float
    domain: tuple[float, float] | None = None
    lo: int = 1
    epsilon: float | None = None
    interpolation_r: float = 0.0
    smooth: tuple = field(default=(), repr=False)
    externals: tuple = field(default=(), repr=False)
    description: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.beta > 0:
            raise ConstructionError("beta must be positive")
        if not 0.0 <= self.interpolation_r <= 1.0:
            raise ConstructionError("interpolation_r must lie in [0, 1]")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ConstructionError("epsilon must be positive")

    # -- constructors
    @classmethod
    def global_gas(cls, V: PotentialModel, N: int, beta: float) -> "LogGasMeasure":
        """exp(-N beta H) on the ordered cone, macroscopic units."""
        s = N * beta / 2.0
        ob = OneBody(lambda x: s * V.value(x), lambda x: s * V.d1(x), lambda x: s * V.d2(x),
                     s * V.inf_second_derivative)
        return cls(beta, N, ob, Scaling.MACRO, 1.0 / N,
                   description={"kind": "global", "potential": V.name, "N": N, "beta": beta})

    @classmethod
    def local_gas(cls, V: PotentialModel, boundary: BoundaryData, N: int, beta: float,
                  lo: int = 1, far_field: bool = True) -> "LogGasMeasure":
        """exp(-beta H_y) in microscopic units on J, boundary given microscopically."""
        if boundary.scaling is not Scaling.MICRO:
            raise ConstructionError("local measures use microscopic boundary data")
        return cls._local([(1.0, V, boundary)], N, beta, lo, far_field, 0.0)

    @classmethod
    def interpolating(cls, V: PotentialModel, boundary: BoundaryData,
                      V_tilde: PotentialModel, boundary_tilde: BoundaryData, N: int,
                      beta: float, r: float, lo: int = 1, far_field: bool = True):
        """exp(-beta H^r) with one-body term (1-r) V_y + r V~_y~ (shared J)."""
        J1, J2 = boundary.J, boundary_tilde.J
        if not 0.0 <= r <= 1.0:
            raise ConstructionError("interpolation_r must lie in [0, 1]")
        if abs(J1[0] - J2[0]) > 1e-12 * (1 + abs(J1[0])) or abs(J1[1] - J2[1]) > 1e-12 * (1 + abs(J1[1])):
            raise ConstructionError("interpolated boundary data must share the interval J")
        parts = [(1.0 - r, V, boundary), (r, V_tilde, boundary_tilde)]
        return cls._local(parts, N, beta, lo, far_field, r)

    @classmethod
    def _local(cls, parts, N, beta, lo, far_field, r):
        exts = tuple((w, ExternalPotential(V, b, N, far_field=far_field))
                     for w, V, b in parts if w > 0)
        h = 0.5 * beta

        def val(x):
            return h * sum(w * e.value(x) for w, e in exts)

        def d1(x):
            return h * sum(w * e.d1(x) for w, e in exts)

        def d2(x):
            return h * sum(w * e.d2(x) for w, e in exts)

        inf2 = h * sum(w * e.inf_second_derivative for w, e in exts)
        J = parts[0][2].J
        desc = {"kind": "local", "N": N, "beta": beta, "r": r, "J": list(J)}
        return cls(beta, 0, OneBody(val, d1, d2, inf2), Scaling.MICRO, 1.0, J, lo, None, r,
                   exts, tuple((w, e.boundary.points) for w, e in exts), desc)

    def with_particles(self, n: int, lo: int | None = None) -> "LogGasMeasure":
        return _replace(self, n=int(n), lo=self.lo if lo is None else int(lo))

    def regularized(self, epsilon: float) -> "LogGasMeasure":
        """omega^eps: logarithms replaced by log_eps, domain constraint dropped.

        Pair terms use log_eps(x_j - x_i) for i < j and external terms
        log_eps(x - y) below and log_eps(y - x) above, with eps multiplied
        by |J| when the measure lives on a configuration interval.
        """
        if self.domain is None:
            eps = epsilon
            return _replace(self, epsilon=eps)
        a = self.domain[1] - self.domain[0]
        eps = epsilon * a
        h = 0.5 * self.beta

        def ext_terms(x, k):
            tot = 0.0
            for (w, e) in self.smooth:
                tot = tot + w * e._v(x, k)
                below, above = e.boundary.below, e.boundary.above
                d_b = x[..., None] - below
                d_a = above - x[..., None]
                vb = _log_eps_all(d_b, eps)
                va = _log_eps_all(d_a, eps)
                sign = (1.0, -1.0, 1.0)[k]
                tot = tot - w * e.weight * (vb[k].sum(-1) + sign * va[k].sum(-1))
            return h * tot

        ob = OneBody(lambda x: ext_terms(np.asarray(x, float), 0),
                     lambda x: ext_terms(np.asarray(x, float), 1),
                     lambda x: ext_terms(np.asarray(x, float), 2),
                     self.one_body.inf_d2)
        return _replace(self, one_body=ob, epsilon=eps, domain=None,
                        description={**self.description, "epsilon": eps})

    # -- density
    def energy(self, x):
        """Phi(x) for x of shape (..., n); +inf outside the admissible set."""
        x = np.asarray(x, dtype=float)
        U = self.one_body.value(x).sum(-1)
        pair = self._pair(x, 0)
        bad = self._inadmissible(x)
        return np.where(bad, np.inf, U - self.beta * pair)

    def grad(self, x, gaps=None):
        """grad Phi; ``gaps`` (if given) supplies x_{i+1} - x_i at full precision."""
        x = np.asarray(x, dtype=float)
        if self.epsilon is None:
            x2 = np.ascontiguousarray(x.reshape(-1, x.shape[-1]))
            g2 = np.diff(x2, axis=1) if gaps is None else np.ascontiguousarray(
                np.asarray(gaps, float).reshape(x2.shape[0], x.shape[-1] - 1))
            pair = _inverse_difference_sums(x2, g2).reshape(x.shape)
        else:
            pair = self._pair_grad(_differences(x, gaps))
        return self.one_body.d1(x) - self.beta * pair

    def hessian_vector(self, x, w, gaps=None):
        """Hess Phi(x) w for batches x, w of shape (P, n)."""
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        if self.epsilon is None:
            x2 = np.ascontiguousarray(x.reshape(-1, x.shape[-1]))
            g2 = np.diff(x2, axis=1) if gaps is None else np.ascontiguousarray(
                np.asarray(gaps, float).reshape(x2.shape[0], x.shape[-1] - 1))
            pair = _inverse_square_action(x2, g2, np.ascontiguousarray(w.reshape(x2.shape)))
            pair = pair.reshape(x.shape)
        else:
            d = _differences(x, gaps)
            n = x.shape[-1]
            upper = np.triu(np.ones((n, n), dtype=bool), 1)
            B = -_log_eps_all(np.where(upper, d, -d), self.epsilon)[2]
            B = np.where(np.eye(n, dtype=bool), 0.0, B)
            pair = (B * (w[..., :, None] - w[..., None, :])).sum(-1)
        return self.one_body.d2(x) * w + self.beta * pair

    def hessian(self, x):
        """Dense Hessian of Phi at a single configuration x of shape (n,)."""
        x = np.asarray(x, dtype=float)
        d = _ordered_diff(x)
        np.fill_diagonal(d, 1.0)
        if self.epsilon is None:
            B = self.beta / d ** 2
        else:
            B = -self.beta * _log_eps_all(d, self.epsilon)[2]
        np.fill_diagonal(B, 0.0)
        H = -B
        H[np.diag_indices_from(H)] = B.sum(1) + self.one_body.d2(x)
        return H

    def _pair(self, x, k):
        if self.epsilon is None:
            x2 = np.ascontiguousarray(x.reshape(-1, x.shape[-1]))
            return _log_difference_sum(x2).reshape(x.shape[:-1])
        d = x[..., None, :] - x[..., :, None]        # d[..., i, j] = x_j - x_i
        iu = np.triu_indices(x.shape[-1], 1)
        return _log_eps_all(d[..., iu[0], iu[1]], self.epsilon)[0].sum(-1)

    def _pair_grad(self, d):
        """d/dx_i of sum_{i<j} l(x_j - x_i) from the difference matrix d."""
        n = d.shape[-1]
        eye = np.eye(n, dtype=bool)
        if self.epsilon is None:
            with np.errstate(divide="ignore"):
                inv = np.where(eye, 0.0, 1.0 / np.where(eye | (d == 0), np.inf, d))
            return -inv.sum(-1)
        upper = np.triu(np.ones((n, n), dtype=bool), 1)
        dd = np.where(upper, d, -d)
        l1 = np.where(eye, 0.0, _log_eps_all(dd, self.epsilon)[1])
        return -(np.where(upper, l1, -l1)).sum(-1)

    def _inadmissible(self, x):
        if self.epsilon is not None:
            return np.zeros(x.shape[:-1], dtype=bool)
        bad = np.any(np.diff(x, axis=-1) <= 0, axis=-1)
        if self.domain is not None:
            bad |= (x[..., 0] <= self.domain[0]) | (x[..., -1] >= self.domain[1])
        return bad

    def min_hessian_eigenvalue(self, x) -> float:
        return float(np.linalg.eigvalsh(self.hessian(x))[0])


@numba.njit(cache=True)
def _log_difference_sum(x):
    """out[p] = sum_{i<j} log|x_j - x_i| (-inf on coincident points)."""
    P, n = x.shape
    out = np.zeros(P)
    for p in range(P):
        acc = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                acc += np.log(abs(x[p, j] - x[p, i]))
        out[p] = acc
    return out


@numba.njit(cache=True)
def _inverse_difference_sums(x, g):
    """out[p, i] = sum_{j != i} 1 / (x_i - x_j), near neighbours taken from gaps g."""
    P, n = x.shape
    out = np.zeros((P, n))
    for p in range(P):
        for i in range(n - 1):
            for j in range(i + 1, n):
                if j == i + 1:
                    d = g[p, i]
                elif j == i + 2:
                    d = g[p, i] + g[p, i + 1]
                else:
                    d = x[p, j] - x[p, i]
                v = 1.0 / d
                out[p, i] -= v
                out[p, j] += v
    return out


@numba.njit(cache=True)
def _inverse_square_action(x, g, w):
    """out[p, j] = sum_{k != j} (w_j - w_k) / (x_j - x_k)^2, near neighbours from gaps."""
    P, n = x.shape
    out = np.zeros((P, n))
    for p in range(P):
        for i in range(n - 1):
            for j in range(i + 1, n):
                if j == i + 1:
                    d = g[p, i]
                elif j == i + 2:
                    d = g[p, i] + g[p, i + 1]
                else:
                    d = x[p, j] - x[p, i]
                v = (w[p, i] - w[p, j]) / (d * d)
                out[p, i] += v
                out[p, j] -= v
    return out


def _differences(x, gaps=None):
    """d[..., i, j] = x_j - x_i; the first two off-diagonals come from ``gaps``.

    Building near-diagonal differences from the gaps keeps tiny gaps at full
    relative precision even when positions are large.
    """
    if gaps is None:
        return x[..., None, :] - x[..., :, None]
    g = np.asarray(gaps, dtype=float)
    n = x.shape[-1]
    c = np.concatenate([np.zeros(g.shape[:-1] + (1,)), np.cumsum(g, axis=-1)], axis=-1)
    d = c[..., None, :] - c[..., :, None]
    i = np.arange(n - 1)
    d[..., i, i + 1] = g
    d[..., i + 1, i] = -g
    if n > 2:
        g2 = g[..., :-1] + g[..., 1:]
        d[..., i[:-1], i[:-1] + 2] = g2
        d[..., i[:-1] + 2, i[:-1]] = -g2
    return d


def _ordered_diff(x):
    """dd[..., i, j] = x_max(i,j) - x_min(i,j) with max/min taken in index order."""
    d = x[..., None, :] - x[..., :, None]
    n = x.shape[-1]
    return np.where(np.triu(np.ones((n, n), dtype=bool), 1), d, -d)


def _replace(m: LogGasMeasure, **kw) -> LogGasMeasure:
    import dataclasses
    return dataclasses.replace(m, **kw)


def local_gaussian_gas(K: int, N: int, beta: float = 1.0, L: int | None = None,
                       far_field: bool = True, potential: PotentialModel | None = None):
    """Local measure for the window L-K..L+K with boundary at classical locations.

    Uses the Gaussian potential (semicircle) unless ``potential`` and its
    matching density are supplied.  Returns (measure, alpha) in microscopic
    units; alpha are the equidistant reference points on J.
    """
    from .equilibrium import classical_locations, semicircle, solve_equilibrium_density

    V = potential or PotentialModel.quadratic()
    dens = semicircle() if potential is None else solve_equilibrium_density(V)
    L = N // 2 if L is None else int(L)
    if not (1 <= L - K - 1 and L + K + 1 <= N):
        raise DomainError("window does not fit inside 1..N with boundary on both sides")
    g = classical_locations(dens, N)[:-1] * N  # drop the right edge point gamma_N
    idx = np.arange(1, N)
    below, above = g[idx < L - K], g[idx > L + K]
    bd = BoundaryData(below, above, Scaling.MICRO)
    mu = LogGasMeasure.local_gas(V, bd, N, beta, lo=L - K, far_field=far_field)
    mu = mu.with_particles(2 * K + 1)
    return mu, equidistant_alpha(bd.J, K, L)


# ---------------------------------------------------------------- MCMC

@dataclass
class ChainParams:
    step: float | None = None       # MALA step size h; None means auto-tuned
    burn_in: int = 2000
    n_samples: int = 1000
    thin: int = 10
    chains: int = 1
    target_acceptance: float = 0.574
    adapt: bool = True


@dataclass
class ChainResult:
    samples: np.ndarray          # (n_samples * chains, n)
    acceptance_rate: float
    step: float
    lo: int
    scaling: Scaling
    diagnostics: dict = field(default_factory=dict)

    def configurations(self) -> Iterator[ParticleConfiguration]:
        for row in self.samples:
            yield ParticleConfiguration(np.sort(row), self.lo, self.scaling)


def default_initial_state(measure: LogGasMeasure) -> np.ndarray:
    """Equidistant points in J for local measures, semicircle quantiles otherwise."""
    n = measure.n
    if measure.domain is not None:
        a, b = measure.domain
        return a + (b - a) * np.arange(1, n + 1) / (n + 1)
    from .equilibrium import semicircle
    sc = semicircle()
    x = np.array([sc.quantile((j - 0.5) / n) for j in range(1, n + 1)])
    return x if measure.scaling is Scaling.MACRO else x * n


def sample_log_gas_mcmc(measure: LogGasMeasure, params: ChainParams, rng: np.random.Generator,
                        initial: np.ndarray | None = None) -> ChainResult:
    """Metropolis-adjusted Langevin chains targeting exp(-Phi).

    Proposal x' = x - (h/2) grad Phi(x) + sqrt(h) xi.  Proposals leaving J
    or breaking the order have zero density and are rejected.  During
    burn-in the step size h is adapted towards ``target_acceptance`` with a
    Robbins-Monro rule on log h, and then frozen.
    """
    n, C = measure.n, params.chains
    if n < 1:
        raise DomainError("measure has no particles; use with_particles")
    x0 = default_initial_state(measure) if initial is None else np.asarray(initial, float)
    x = np.broadcast_to(x0, (C, n)).copy()
    if np.any(np.isinf(measure.energy(x))):
        raise DomainError("initial state is outside the support of the measure")
    if params.step is not None:
        h = float(params.step)
    else:
        gap = np.min(np.diff(x0)) if n > 1 else 1.0
        h = (0.1 * gap) ** 2
    logh = np.log(h)
    phi, g = measure.energy(x), measure.grad(x)

    def step(x, phi, g, h):
        prop = x - 0.5 * h * g + np.sqrt(h) * rng.standard_normal(x.shape)
        phi_p = measure.energy(prop)
        ok = np.isfinite(phi_p)
        g_p = np.where(ok[:, None], measure.grad(np.where(ok[:, None], prop, x)), g)
        fwd = np.sum((prop - x + 0.5 * h * g) ** 2, -1)
        bwd = np.sum((x - prop + 0.5 * h * g_p) ** 2, -1)
        with np.errstate(invalid="ignore"):
            log_a = -(phi_p - phi) - (bwd - fwd) / (2 * h)
        acc = ok & (np.log(rng.uniform(size=C)) < log_a)
        x = np.where(acc[:, None], prop, x)
        phi = np.where(acc, phi_p, phi)
        g = np.where(acc[:, None], g_p, g)
        return x, phi, g, acc

    for it in range(params.burn_in):
        x, phi, g, acc = step(x, phi, g, np.exp(logh))
        if params.adapt and params.step is None:
            logh += (acc.mean() - params.target_acceptance) * 2.0 / np.sqrt(it + 10)
    h = float(np.exp(logh))
    out = np.empty((params.n_samples, C, n))
    n_acc = 0
    for s in range(params.n_samples):
        for _ in range(params.thin):
            x, phi, g, acc = step(x, phi, g, h)
            n_acc += acc.sum()
        out[s] = x
    rate = n_acc / (params.n_samples * params.thin * C)
    if rate < 0.01:
        log.warning("MALA acceptance rate %.4f is below 1%% after tuning", rate)
    log.info("MALA acceptance rate %.3f with step %.3g", rate, h)
    samples = out.transpose(1, 0, 2).reshape(-1, n)
    return ChainResult(np.sort(samples, axis=-1), float(rate), h, measure.lo, measure.scaling,
                       {"acceptance_rate": float(rate), "step": h, "chains": C,
                        "unsorted_inversions": int(np.sum(np.diff(samples, axis=-1) < 0))})
