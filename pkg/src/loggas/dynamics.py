"""Dyson Brownian motion, Hessian kernels, good sets and regular points.

The flow for a measure exp(-Phi) (see :mod:`loggas.samplers`) is

    dx = sqrt(D) dB - (D / 2) grad Phi(x) dt,

integrated by Euler-Maruyama with per-path adaptive steps.  A path whose
smallest gap g satisfies g < gap_factor * sqrt(D dt) has its step halved;
a step that breaks the ordering, leaves J or pushes a gap below the floor
``min_gap`` is rejected and retried with fresh noise at half the step.
Refinement that runs out of halvings is an integration failure.

For beta = 1 a gap near zero behaves like a two-dimensional Bessel process
(log-gap is a martingale), so unbounded dives are real; without the floor
the deepest of many paths would underflow double precision.  The state is
stored as (x_1, gaps) so that gaps near the floor keep full precision.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .core import ParticleConfiguration, Scaling
from .errors import ContractError, DomainError, IntegrationError, SingularityError
from .samplers import LogGasMeasure, _differences

log = logging.getLogger(__name__)


@dataclass
class DtParams:
    dt_max: float = 1e-2
    gap_factor: float = 10.0
    store_every: float = 0.1
    max_halvings: int = 60
    min_gap: float = 1e-12     # collapse floor in the units of the measure


@dataclass
class DbmPath:
    """States of one or more paths on a common grid of stored times.

    ``states`` has shape (T, n) for one path or (P, T, n) for a batch;
    ``gaps`` holds the matching x_{i+1} - x_i at full precision.
    """

    times: np.ndarray
    states: np.ndarray
    beta: float
    lo: int
    scaling: Scaling
    measure: LogGasMeasure | None = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict)
    gaps: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ContractError("stored times must be increasing")
        if self.gaps is None:
            self.gaps = np.diff(self.states, axis=-1)

    @property
    def batched(self) -> bool:
        return self.states.ndim == 3

    def path(self, p: int) -> "DbmPath":
        if not self.batched:
            return self
        return DbmPath(self.times, self.states[p], self.beta, self.lo, self.scaling, self.measure,
                       self.diagnostics, self.gaps[p])

    def configuration(self, k: int) -> ParticleConfiguration:
        return ParticleConfiguration(self.states[k], self.lo, self.scaling)

    def to_csv(self, path) -> None:
        st = self.states if not self.batched else self.states[0]
        n = st.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "index", "position"])
            for t, row in zip(self.times, st):
                for i in range(n):
                    w.writerow(["%.17g" % t, self.lo + i, "%.17g" % row[i]])


def _prepare(initial, measure):
    if measure.beta < 1:
        raise ContractError("the flow preserves ordering only for beta >= 1")
    if isinstance(initial, ParticleConfiguration):
        if initial.scaling is not measure.scaling:
            raise ContractError("initial configuration and measure use different scalings")
        x0 = initial.positions
    else:
        x0 = np.asarray(initial, dtype=float)
    single = x0.ndim == 1
    x0 = np.atleast_2d(x0)
    if x0.shape[1] != measure.n:
        raise ContractError(f"measure has {measure.n} particles, initial state has {x0.shape[1]}")
    dom = measure.domain
    if (measure.epsilon is None and np.any(np.diff(x0, axis=1) <= 0)) or (
            dom is not None and not (np.all(x0 > dom[0]) and np.all(x0 < dom[1]))):
        raise DomainError("initial state must be strictly increasing and inside J")
    return x0, single


def _positions(x1, g):
    return x1[:, None] + np.concatenate([np.zeros((x1.size, 1)), np.cumsum(g, axis=1)], axis=1)


def _expand(h, ndim):
    return h.reshape((-1,) + (1,) * (ndim - 1))


def _run(x0, measure, T, rng, dt, noise, store, tangent=None, integrand=None):
    """Core Euler-Maruyama loop shared by the path integrator and the tangent flow.

    With ``tangent`` (P, n) or (P, m, n) the vectors w are carried along each
    accepted step by the exact derivative of the Euler map,
    w <- w - (D h / 2) Hess Phi(x) w, and ``integrand(x, gaps, w)`` (an array
    with leading dimension P) is integrated in time by the trapezoid rule.
    """
    P, n = x0.shape
    ordered = measure.epsilon is None
    dom = measure.domain
    D = measure.diffusion
    x1 = x0[:, 0].copy()
    g = np.diff(x0, axis=1)
    out = np.empty((len(store), P, n))
    out_g = np.empty((len(store), P, n - 1))
    out[0], out_g[0] = x0, g
    w = None if tangent is None else np.array(tangent, dtype=float)
    f_prev = None if integrand is None else np.array(integrand(x0, g, w), dtype=float)
    acc_int = np.zeros(P) if integrand is None else np.zeros_like(f_prev)
    t = np.zeros(P)
    halv = np.zeros(P, dtype=int)     # extra halvings after a rejection
    nxt = np.ones(P, dtype=int)       # index of next stored time per path
    n_acc = n_rej = n_viol = n_floor = 0
    min_seen = np.inf
    while np.any(nxt < len(store)):
        act = np.flatnonzero(nxt < len(store))
        ga = g[act]
        xa = _positions(x1[act], ga)
        gmin = np.min(np.abs(ga), axis=1) if n > 1 else np.full(act.size, np.inf)
        if dom is not None:
            gmin = np.minimum(gmin, np.minimum(xa[:, 0] - dom[0], dom[1] - xa[:, -1]))
        if ordered:
            min_seen = min(min_seen, float(gmin.min()))
        h = np.full(act.size, dt.dt_max)
        if noise and ordered:
            # largest dt_max 2^-m with gap >= gap_factor sqrt(D h)
            lim = (gmin / dt.gap_factor) ** 2 / D
            with np.errstate(divide="ignore"):
                m = np.ceil(np.log2(np.maximum(h / lim, 1.0))).astype(int)
            h = h * 0.5 ** m
        if np.any(halv[act] > dt.max_halvings):
            raise IntegrationError("gap collapse: step refinement exhausted",
                                   {"min_gap": float(gmin.min()), "time": float(t[act].min()),
                                    "floor_rejections": n_floor})
        h = np.minimum(h * 0.5 ** halv[act], store[nxt[act]] - t[act])
        inc = -0.5 * D * measure.grad(xa, ga) * h[:, None]
        if noise:
            inc += np.sqrt(D * h)[:, None] * rng.standard_normal(xa.shape)
        x1p = x1[act] + inc[:, 0]
        gp = ga + np.diff(inc, axis=1)
        bad = np.zeros(act.size, dtype=bool)
        if ordered:
            bad |= np.any(gp <= 0, axis=1)
            low = ~bad & (np.min(gp, axis=1) < dt.min_gap) if n > 1 else np.zeros_like(bad)
            n_floor += int(low.sum())
            bad |= low
        if dom is not None:
            xp = _positions(x1p, gp)
            bad |= (xp[:, 0] <= dom[0]) | (xp[:, -1] >= dom[1])
            if ordered:
                edge = ~bad & (np.minimum(xp[:, 0] - dom[0], dom[1] - xp[:, -1]) < dt.min_gap)
                n_floor += int(edge.sum())
                bad |= edge
        n_rej += int(bad.sum())
        halv[act[bad]] += 1
        ok = ~bad
        good = act[ok]
        if w is not None:
            wa = w[good]
            if wa.ndim == 2:
                hw = measure.hessian_vector(xa[ok], wa, ga[ok])
            else:
                m = wa.shape[1]
                hw = measure.hessian_vector(np.repeat(xa[ok], m, axis=0), wa.reshape(-1, n),
                                            np.repeat(ga[ok], m, axis=0)).reshape(wa.shape)
            w[good] = wa - 0.5 * D * _expand(h[ok], wa.ndim) * hw
        x1[good], g[good] = x1p[ok], gp[ok]
        if integrand is not None and good.size:
            wg = None if w is None else w[good]
            f_new = np.asarray(integrand(_positions(x1[good], g[good]), g[good], wg), dtype=float)
            acc_int[good] += 0.5 * _expand(h[ok], f_new.ndim) * (f_prev[good] + f_new)
            f_prev[good] = f_new
        if ordered:
            n_viol += int(np.sum(g[good] <= 0))
        n_acc += int(ok.sum())
        t[good] += h[ok]
        halv[good] = 0
        hit = good[np.abs(t[good] - store[nxt[good]]) <= 1e-12 * max(T, 1.0)]
        if hit.size:
            xs = _positions(x1[hit], g[hit])
            for k, p in enumerate(hit):
                t[p] = store[nxt[p]]
                out[nxt[p], p], out_g[nxt[p], p] = xs[k], g[p]
                nxt[p] += 1
    diag = {"accepted_steps": n_acc, "rejected_steps": n_rej, "ordering_violations": n_viol,
            "floor_rejections": n_floor, "min_gap": min_seen, "paths": P}
    if n_rej:
        log.info("DBM: %d rejected steps (ordering or domain) retried with fresh noise", n_rej)
    return out, out_g, diag, acc_int, w


def integrate_dbm(initial, measure: LogGasMeasure, T: float, rng: np.random.Generator,
                  dt: DtParams | None = None, noise: bool = True) -> DbmPath:
    """Integrate the gradient flow of ``measure`` with Brownian noise up to time T.

    ``initial`` is a ParticleConfiguration, an array (n,) or a batch (P, n).
    The state is carried as (x_1, gaps) so that near-collisions keep full
    relative precision.  Returns a DbmPath stored every ``dt.store_every``
    (the final time T is always stored).  Diagnostics record accepted steps,
    rejections and an independent audit of ordering at accepted steps.
    """
    dt = dt or DtParams()
    x0, single = _prepare(initial, measure)
    store = np.unique(np.append(np.arange(0.0, T, dt.store_every), T))
    out, out_g, diag, _, _ = _run(x0, measure, T, rng, dt, noise, store)
    if single:
        states, gaps = out[:, 0], out_g[:, 0]
    else:
        states, gaps = out.transpose(1, 0, 2), out_g.transpose(1, 0, 2)
    return DbmPath(store, states, measure.beta, measure.lo, measure.scaling, measure, diag, gaps)


def integrate_tangent_flow(initial, tangent, measure: LogGasMeasure, T: float,
                           rng: np.random.Generator, integrand, dt: DtParams | None = None):
    """Run the flow with a co-evolving tangent vector and a path integral.

    ``tangent`` is (n,), (P, n) or (P, m, n) for m vectors per path.
    Returns (final states, final tangents, int_0^T integrand dt per path,
    diagnostics).
    """
    dt = dt or DtParams()
    x0, _ = _prepare(initial, measure)
    store = np.array([0.0, T]) if T > 0 else np.array([0.0])
    tangent = np.asarray(tangent, dtype=float)
    if tangent.ndim == 1:
        tangent = np.broadcast_to(tangent, x0.shape)
    out, _, diag, integral, w = _run(x0, measure, T, rng, dt, True, store, tangent, integrand)
    return out[-1], w, integral, diag


# ---------------------------------------------------------------- kernel

@dataclass
class HessianKernel:
    """Piecewise-constant couplings B (T, n, n) and weights W (T, n).

    Row k of B and W applies on [times[k], times[k+1]).  Local index j runs
    over -K..K when ``n`` is odd and the window is centered (``center``).
    """

    times: np.ndarray
    B: np.ndarray
    W: np.ndarray
    beta: float = 1.0

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.B = np.asarray(self.B, float)
        self.W = np.asarray(self.W, float)
        if self.B.ndim == 2:
            self.B = self.B[None]
        if self.W.ndim == 1:
            self.W = self.W[None]
        if self.B.shape[0] != self.times.size or self.W.shape[0] != self.times.size:
            raise ContractError("kernel arrays must have one slice per stored time")

    @property
    def n(self) -> int:
        return self.W.shape[1]

    @property
    def K(self) -> int:
        return (self.n - 1) // 2

    @property
    def local_index(self) -> np.ndarray:
        return np.arange(self.n) - self.K

    @classmethod
    def constant(cls, B, W) -> "HessianKernel":
        """Time-independent kernel (a single slice valid for all s >= 0)."""
        return cls(np.array([0.0]), np.asarray(B, float)[None], np.asarray(W, float)[None])

    @classmethod
    def inverse_square(cls, K: int, beta: float = 1.0, boundary: bool = True) -> "HessianKernel":
        """B_ij = beta/(i-j)^2 on -K..K; W from the same kernel continued outside."""
        i = np.arange(-K, K + 1)
        d = i[:, None] - i[None, :]
        with np.errstate(divide="ignore"):
            B = np.where(d == 0, 0.0, beta / np.where(d == 0, 1, d) ** 2)
        W = beta * outside_inverse_square_sum(K) if boundary else np.zeros(i.size)
        return cls.constant(B, W)

    def index_at(self, s: float) -> int:
        return int(np.clip(np.searchsorted(self.times, s, side="right") - 1, 0, self.times.size - 1))

    def slice(self, s: float) -> tuple[np.ndarray, np.ndarray]:
        k = self.index_at(s)
        return self.B[k], self.W[k]

    def operator(self, s: float) -> np.ndarray:
        """Matrix of A(s): (A v)_j = -sum_k B_jk (v_k - v_j) + W_j v_j."""
        B, W = self.slice(s)
        return operator_matrix(B, W)

    def quadratic_form(self, s: float, u, v=None) -> float:
        """a(s)[u, v] = (1/2) sum B_jk (u_k-u_j)(v_k-v_j) + sum W_j u_j v_j."""
        B, W = self.slice(s)
        u = np.asarray(u, float)
        v = u if v is None else np.asarray(v, float)
        du = u[None, :] - u[:, None]
        dv = v[None, :] - v[:, None]
        return float(0.5 * np.sum(B * du * dv) + np.sum(W * u * v))


def operator_matrix(B, W) -> np.ndarray:
    A = -np.array(B, dtype=float)
    A[np.diag_indices_from(A)] = B.sum(1) - np.diag(B) + W
    return A


def outside_inverse_square_sum(K: int) -> np.ndarray:
    """sum over |k| >= K+1 of 1/(j-k)^2 for j = -K..K (Hurwitz zeta tails)."""
    from scipy.special import zeta
    j = np.arange(-K, K + 1)
    return zeta(2.0, K + 1 - j) + zeta(2.0, K + 1 + j)


def build_hessian_kernel(path: DbmPath, measure: LogGasMeasure | None = None) -> HessianKernel:
    """Kernel of A(t) = Hess Phi(x(t)) along a microscopic path.

    B_jk = beta/(x_j - x_k)^2 and W_j = U''(x_j), where U is the one-body
    term of the measure; for a local measure this is
    (beta/2)[(1-r) V_y'' + r V~_y~''], the external-point and V'' part.
    """
    measure = measure or path.measure
    if path.scaling is not Scaling.MICRO:
        raise ContractError("the Hessian kernel is built from microscopic paths")
    st = path.states if not path.batched else path.states[0]
    gp = path.gaps if not path.batched else path.gaps[0]
    d = _differences(st, gp)
    n = st.shape[1]
    eye = np.eye(n, dtype=bool)
    if np.any((d == 0) & ~eye):
        raise SingularityError("coincident positions make the kernel singular")
    with np.errstate(divide="ignore"):
        B = np.where(eye, 0.0, path.beta / np.where(eye, 1.0, d) ** 2)
    if measure is None:
        W = np.zeros_like(st)
    else:
        W = measure.one_body.d2(st)
    return HessianKernel(path.times, B, W, path.beta)


# ---------------------------------------------------------------- good sets

def dyadic_times(K: int, C: float = 1.0) -> np.ndarray:
    """Xi = {-K 2^-m (1 + 2^-k): 0 <= k, m <= C log K}, sorted."""
    top = int(np.floor(C * np.log(K)))
    vals = {-K * 2.0 ** -m * (1 + 2.0 ** -k) for m in range(top + 1) for k in range(top + 1)}
    return np.array(sorted(vals))


def _cumulative_trapezoid(f, t):
    return cumulative_trapezoid(f, t, axis=0, initial=0.0) if t.size > 1 else np.zeros_like(f)


def _sup_averaged(S, times, sigma):
    """sup over stored s of |S(sigma) - S(s)| / (1 + |s - sigma|), rows of S are times."""
    Ss = np.array([np.interp(sigma, times, S[:, m]) for m in range(S.shape[1])])
    w = 1.0 + np.abs(times - sigma)
    return float(np.max(np.abs(Ss[None, :] - S) / w[:, None]))


@dataclass
class GoodSetReport:
    in_G: bool
    rigidity_sup: float
    Q_values: dict
    in_Q_hat: dict
    in_Q_tilde: bool
    threshold: float
    skipped_times: int = 0

    def to_json(self) -> dict:
        return {"in_G": self.in_G, "rigidity_sup": self.rigidity_sup,
                "Q_values": {f"{s:.6g},{z}": v for (s, z), v in sorted(self.Q_values.items())},
                "in_Q_hat": {f"{s:.6g}": v for s, v in sorted(self.in_Q_hat.items())},
                "in_Q_tilde": self.in_Q_tilde, "threshold": self.threshold,
                "skipped_times": self.skipped_times}


def gap_averages(path: DbmPath, y_below: float, y_above: float) -> np.ndarray:
    """Time integrals of (1/M) sum_{|i-Z|<=M} |x_i - x_{i+1}|^-2 ingredients.

    Returns G with G[k, i] = int_0^{t_k} |x_i - x_{i+1}|^{-2} for local
    i = -K-1..K, where x_{-K-1} = y_{-K-1} and x_{K+1} = y_{K+1}.
    """
    st = path.states if not path.batched else path.states[0]
    T = st.shape[0]
    ext = np.hstack([np.full((T, 1), y_below), st, np.full((T, 1), y_above)])
    g = 1.0 / np.diff(ext, axis=1) ** 2
    return _cumulative_trapezoid(g, path.times)


def q_value(G: np.ndarray, times: np.ndarray, sigma: float, Z: int, K: int) -> float:
    """The averaged gap quantity of Q_{sigma,Z} from the cumulative array G."""
    # column c of G is gap (i, i+1) with i = c - K - 1
    csum = np.concatenate([np.zeros((G.shape[0], 1)), np.cumsum(G, axis=1)], axis=1)
    Ms = np.arange(1, K + 1)
    cols = []
    for M in Ms:
        lo = max(Z - M, -K - 1) + K + 1
        hi = min(Z + M, K) + K + 1
        cols.append((csum[:, hi + 1] - csum[:, lo]) / M)
    return _sup_averaged(np.stack(cols, axis=1), times, sigma)


def evaluate_good_sets(path: DbmPath, sigma: float, Z: int, xi_prime: float, rho: float,
                       alpha: np.ndarray, y_below: float, y_above: float,
                       C_xi: float = 1.0) -> GoodSetReport:
    """Rigidity set G and the gap-average sets Q_hat, Q_tilde along a path.

    ``alpha`` are the equidistant reference points of the window and
    ``y_below``/``y_above`` the external points adjacent to it (the
    convention x_{+-(K+1)} = y_{+-(K+1)}).  Times of sigma + Xi outside the
    stored range are skipped and counted.
    """
    st = path.states if not path.batched else path.states[0]
    n = st.shape[1]
    K = (n - 1) // 2
    thr = float(K) ** rho
    sup_dev = float(np.max(np.abs(st - alpha[None, :])))
    G = gap_averages(path, y_below, y_above)
    Qv, qhat = {}, {}
    skipped = 0
    for s in np.concatenate([[sigma], sigma + dyadic_times(K, C_xi)]):
        if not path.times[0] <= s <= path.times[-1]:
            skipped += 1
            continue
        vals = {}
        for z in (Z, -K, K):
            vals[z] = q_value(G, path.times, s, z, K)
            Qv[(float(s), z)] = vals[z]
        qhat[float(s)] = bool(max(vals.values()) <= thr)
    return GoodSetReport(sup_dev <= float(K) ** xi_prime, sup_dev, Qv, qhat,
                         bool(all(qhat.values())), thr, skipped)


def check_regularity_point(kernel: HessianKernel, Z: int, sigma: float,
                           K: int | None = None) -> float:
    """sup_s sup_{1<=M<=K} |int_s^sigma (1/M) sum_{|i-Z|,|j-Z|<=M} B_ij du| / (1+|s-sigma|).

    Integrals use the trapezoid rule on the stored grid; for a kernel with a
    single time slice the integrand is constant and the integral exact.
    """
    K = kernel.K if K is None else K
    n = kernel.n
    z = Z + kernel.K

    def block_sums(Bs):
        c = np.zeros((Bs.shape[0], n + 1, n + 1))
        c[:, 1:, 1:] = Bs.cumsum(1).cumsum(2)
        out = []
        for M in range(1, K + 1):
            a, b = max(z - M, 0), min(z + M, n - 1) + 1
            out.append((c[:, b, b] - c[:, a, b] - c[:, b, a] + c[:, a, a]) / M)
        return np.stack(out, axis=1)

    if kernel.times.size == 1:
        # constant in time: |s - sigma| c_M / (1 + |s - sigma|) has supremum max_M c_M
        return float(np.max(np.abs(block_sums(kernel.B[:1]))))
    S = _cumulative_trapezoid(block_sums(kernel.B), kernel.times)
    return _sup_averaged(S, kernel.times, sigma)


def strongly_regular(kernel: HessianKernel, Z: int, sigma: float, rho: float,
                     C_xi: float = 1.0) -> bool:
    """Regular at (Z, sigma + tau) for every tau in Xi within the kernel's range."""
    K = kernel.K
    thr = float(K) ** rho
    for s in np.concatenate([[sigma], sigma + dyadic_times(K, C_xi)]):
        if kernel.times.size > 1 and not kernel.times[0] <= s <= kernel.times[-1]:
            continue
        if check_regularity_point(kernel, Z, s) > thr:
            return False
    return True
