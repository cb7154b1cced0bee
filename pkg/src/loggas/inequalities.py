"""Discrete Gagliardo-Nirenberg type inequalities on Z and their local forms.

Lattice functions have finite support.  Sums over the infinite lattice are
split into a finite part and exterior tails; for inverse power kernels the
tails are Hurwitz zeta values, so no truncation error enters.  General
kernels are summed out to ``TRUNCATION`` times the support diameter and the
remainder is bounded by their declared inverse-square tail coefficient.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special
from scipy.special import zeta

from .errors import DomainError, IntegrationError, PreconditionError

TRUNCATION = 1000


@dataclass(frozen=True)
class LatticeFunction:
    """f: Z -> R with f_i = values[i - offset] and zero elsewhere."""

    values: np.ndarray
    offset: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise DomainError("values must be a nonempty vector")
        if not np.all(np.isfinite(v)):
            raise DomainError("values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def indices(self) -> np.ndarray:
        return self.offset + np.arange(self.values.size)

    @property
    def support(self) -> tuple[int, int]:
        """Smallest index window [lo, hi] holding every nonzero value."""
        nz = np.flatnonzero(self.values)
        if nz.size == 0:
            return (self.offset, self.offset - 1)
        return (self.offset + int(nz[0]), self.offset + int(nz[-1]))

    def trimmed(self) -> "LatticeFunction":
        lo, hi = self.support
        if hi < lo:
            return LatticeFunction(np.zeros(1), self.offset)
        return LatticeFunction(self.values[lo - self.offset:hi - self.offset + 1], lo)

    def norm(self, p: float) -> float:
        return float(np.linalg.norm(self.values, ord=p))

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def scaled(self, c: float) -> "LatticeFunction":
        return LatticeFunction(c * self.values, self.offset)

    def shifted(self, k: int) -> "LatticeFunction":
        return LatticeFunction(self.values, self.offset + int(k))

    @classmethod
    def delta(cls, i: int = 0) -> "LatticeFunction":
        return cls(np.ones(1), i)


# ---------------------------------------------------------------- kernels

def _inverse_power_tails(m: int, exponent: float) -> np.ndarray:
    """For i = 0..m-1: sum over j < 0 and j >= m of 1/|i-j|^exponent."""
    i = np.arange(m)
    return zeta(exponent, i + 1) + zeta(exponent, m - i)


@dataclass
class LatticeKernel:
    """Symmetric nonnegative couplings B_ij on Z.

    ``func(i, j)`` evaluates B on integer arrays (i != j).  ``tail`` is a
    coefficient c with B_ij <= c/|i-j|^2 for |i-j| > R, used to bound sums
    beyond the truncation radius R; ``exact_power`` marks B = c/|i-j|^power
    exactly, in which case exterior sums are Hurwitz zeta values.
    """

    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    tail: float
    exact_power: float | None = None
    name: str = ""

    @classmethod
    def inverse_square(cls, c: float = 1.0) -> "LatticeKernel":
        return cls(lambda i, j: c / (np.asarray(i) - np.asarray(j)) ** 2.0, c, 2.0, f"{c}/(i-j)^2")

    @classmethod
    def modulated(cls, c: float = 1.0, amplitude: float = 1.0, freq: float = 0.37) -> "LatticeKernel":
        """B_ij = c (1 + amplitude cos^2(freq (i+j))) / (i-j)^2, symmetric and >= c/(i-j)^2."""
        def f(i, j):
            i, j = np.asarray(i, float), np.asarray(j, float)
            return c * (1 + amplitude * np.cos(freq * (i + j)) ** 2) / (i - j) ** 2
        return cls(f, c * (1 + amplitude), None, f"modulated({c},{amplitude})")

    @classmethod
    def from_matrix(cls, B: np.ndarray, lo: int, outside: float = 1.0) -> "LatticeKernel":
        """B on the window lo..lo+n-1 and outside/(i-j)^2 elsewhere."""
        B = np.asarray(B, float)
        n = B.shape[0]

        def f(i, j):
            i, j = np.broadcast_arrays(np.asarray(i), np.asarray(j))
            out = outside / (i - j).astype(float) ** 2
            inside = (i >= lo) & (i < lo + n) & (j >= lo) & (j < lo + n)
            out[inside] = B[i[inside] - lo, j[inside] - lo]
            return out
        return cls(f, max(outside, 0.0), None, "matrix")

    def matrix(self, lo: int, hi: int) -> np.ndarray:
        i = np.arange(lo, hi + 1)
        I, J = np.meshgrid(i, i, indexing="ij")
        off = I != J
        M = np.zeros(I.shape)
        M[off] = self.func(I[off], J[off])
        return M

    def exterior_sums(self, lo: int, hi: int) -> np.ndarray:
        """sum over j outside [lo, hi] of B_ij for i in [lo, hi]."""
        m = hi - lo + 1
        if self.exact_power is not None:
            c = float(self.func(np.array([0]), np.array([1]))[0])
            return c * _inverse_power_tails(m, self.exact_power)
        R = TRUNCATION * max(m, 1)
        i = np.arange(lo, hi + 1)
        out = np.zeros(m)
        k = np.arange(1, R + 1)
        for a, ii in enumerate(i):
            left = lo - k
            right = hi + k
            out[a] = self.func(np.full(R, ii), left).sum() + self.func(np.full(R, ii), right).sum()
            # beyond R on each side: bounded by tail * zeta(2, distance)
            out[a] += self.tail * (zeta(2.0, ii - lo + R + 1) + zeta(2.0, hi - ii + R + 1))
        return out


def dirichlet_form(f: LatticeFunction, kernel: LatticeKernel) -> float:
    """sum_{i != j in Z} B_ij |f_i - f_j|^2 (ordered pairs)."""
    g = f.trimmed()
    if g.is_zero():
        return 0.0
    lo, hi = g.support
    v = g.values
    B = kernel.matrix(lo, hi)
    inner = float(np.sum(B * (v[:, None] - v[None, :]) ** 2))
    outer = 2.0 * float(np.sum(kernel.exterior_sums(lo, hi) * v * v))
    return inner + outer


def fractional_sum(f: LatticeFunction, s: float) -> float:
    """sum_{i != j in Z} |f_i - f_j|^2 / |i-j|^{1+s}."""
    g = f.trimmed()
    if g.is_zero():
        return 0.0
    v = g.values
    m = v.size
    i = np.arange(m)
    d = np.abs(i[:, None] - i[None, :]).astype(float)
    with np.errstate(divide="ignore"):
        w = np.where(d > 0, d ** -(1.0 + s), 0.0)
    inner = float(np.sum(w * (v[:, None] - v[None, :]) ** 2))
    outer = 2.0 * float(np.sum(_inverse_power_tails(m, 1.0 + s) * v * v))
    return inner + outer


def _check_ps(p: float, s: float) -> None:
    if not 2 < p < np.inf:
        raise DomainError("p must lie in (2, inf)")
    if not 1 - 2 / p < s < 2:
        raise DomainError("s must lie in (1 - 2/p, 2)")


def gn_ratio(f: LatticeFunction, p: float, s: float) -> float:
    """||f||_p / (||f||_2^{1-e} [sum |f_i-f_j|^2/|i-j|^{1+s}]^{e/2}), e = (p-2)/(sp)."""
    _check_ps(p, s)
    if f.is_zero():
        raise DomainError("the ratio is undefined for the zero function")
    e = (p - 2) / (s * p)
    return f.norm(p) / (f.norm(2) ** (1 - e) * fractional_sum(f, s) ** (e / 2))


# ---------------------------------------------------------------- GN checks

@dataclass
class GNReport:
    lhs: float
    dirichlet_term: float
    sup_term: float
    boundary_term: float
    minimal_C: float
    precondition_unmet: bool
    floor_b: float
    floor_r: float
    details: dict = field(default_factory=dict)

    @property
    def rhs(self) -> float:
        return self.dirichlet_term + self.sup_term + self.boundary_term


def kernel_floors(kernel: LatticeKernel, lo: int, hi: int, a: float) -> tuple[float, float]:
    """Largest b, r with B_ij >= b/|i-j|^2 on [lo, hi] and >= r/|i-j|^2 for |i-j| >= 1/a."""
    B = kernel.matrix(lo, hi)
    i = np.arange(lo, hi + 1)
    d = np.abs(i[:, None] - i[None, :]).astype(float)
    off = d > 0
    scaled = B * d * d
    b = float(np.min(scaled[off])) if np.any(off) else np.inf
    far = d >= 1.0 / a
    r = float(np.min(scaled[far & off])) if np.any(far & off) else np.inf
    return b, r


def _floor_window(kernel, lo, hi, a):
    # floors are scanned on the support widened by the longer of its length and 1/a
    w = int(max(hi - lo + 1, np.ceil(1.0 / a))) + 1
    return kernel_floors(kernel, lo - w, hi + w, a)


def _validate(a, b, r):
    if not (a > 0 and 0 < b <= r <= 1):
        raise DomainError("need a > 0 and 0 < b <= r <= 1")


def gn_global_check(f: LatticeFunction, kernel: LatticeKernel, a: float, b: float,
                    r: float) -> GNReport:
    """||f||_4^4 against (C/r)||f||_2^2 sum B|f_i-f_j|^2 + (C/(a b^3))||f||_inf^4.

    The right-hand terms are reported with C = 1; ``minimal_C`` is the
    smallest C for which the inequality holds for this f.  Floors are
    scanned on a window around the support.
    """
    _validate(a, b, r)
    if f.is_zero():
        return GNReport(0.0, 0.0, 0.0, 0.0, 0.0, False, np.inf, np.inf)
    lo, hi = f.trimmed().support
    fb, fr = _floor_window(kernel, lo, hi, a)
    unmet = fb < b * (1 - 1e-12) or fr < r * (1 - 1e-12)
    lhs = f.norm(4) ** 4
    t1 = f.norm(2) ** 2 * dirichlet_form(f, kernel) / r
    t2 = f.norm(np.inf) ** 4 / (a * b ** 3)
    return GNReport(lhs, t1, t2, 0.0, lhs / (t1 + t2), unmet, fb, fr)


def gn_local_check(f: LatticeFunction, kernel: LatticeKernel, Z: int, L: int, tau: float,
                   a: float, b: float, r: float) -> GNReport:
    """Local form on I = [Z-L, Z+L] with the extra (1/(L tau))||f||_2^2 term.

    f must be supported in I; floors are scanned on
    [Z-(1+tau)L, Z+(1+tau)L].  The Dirichlet sum runs over pairs in I only.
    """
    _validate(a, b, r)
    if tau <= 0 or L < 1:
        raise DomainError("need tau > 0 and L >= 1")
    g = f.trimmed()
    if f.is_zero():
        return GNReport(0.0, 0.0, 0.0, 0.0, 0.0, False, np.inf, np.inf)
    lo, hi = g.support
    if lo < Z - L or hi > Z + L:
        raise PreconditionError(f"support [{lo}, {hi}] leaks outside [{Z - L}, {Z + L}]")
    R = int(np.floor((1 + tau) * L))
    fb, fr = kernel_floors(kernel, Z - R, Z + R, a)
    unmet = fb < b * (1 - 1e-12) or fr < r * (1 - 1e-12)
    v = np.zeros(2 * L + 1)
    v[lo - (Z - L):hi - (Z - L) + 1] = g.values
    B = kernel.matrix(Z - L, Z + L)
    form = float(np.sum(B * (v[:, None] - v[None, :]) ** 2))
    n2 = f.norm(2) ** 2
    t1 = n2 * form / r
    t3 = n2 * n2 / (L * tau)
    t2 = f.norm(np.inf) ** 4 / (a * b ** 3)
    lhs = f.norm(4) ** 4
    return GNReport(lhs, t1, t2, t3, lhs / (t1 + t2 + t3), unmet, fb, fr, {"L": L, "tau": tau})


# ---------------------------------------------------------------- interpolation

def _diagonal_cell(s: float) -> float:
    """int_0^1 int_0^1 |x-y|^{1-s} dx dy."""
    return 2.0 / ((2.0 - s) * (3.0 - s))


@functools.lru_cache(maxsize=64)
def _adjacent_moments(s: float) -> tuple[float, float]:
    """int_0^1 int_0^1 u^p y^q / (u+y)^{1+s} for (p, q) = (2, 0) and (1, 1).

    In polar-like coordinates u = t c, y = t (1 - c) the t-integral is
    explicit on the triangle u + y <= 1; the corner pieces are smooth.
    """
    def moment(p, q):
        # triangle u + y <= 1: int_0^1 t^{p+q+1-1-s} dt * int_0^1 c^p (1-c)^q dc
        tri = (1.0 / (p + q + 1 - s)) * special.beta(p + 1, q + 1)
        rest, err = integrate.dblquad(lambda y, u: u ** p * y ** q / (u + y) ** (1 + s),
                                      0.0, 1.0, lambda u: 1.0 - u, lambda u: 1.0,
                                      epsabs=1e-14, epsrel=1e-12)
        if not np.isfinite(rest) or err > 1e-9:
            raise IntegrationError("adjacent-cell moment did not converge", {"s": s, "err": err})
        return tri + rest

    return moment(2, 0), moment(1, 1)


def interpolation_integral(f: LatticeFunction, s: float, nodes: int = 12,
                           epsrel: float = 1e-8) -> float:
    """int int |phi(x)-phi(y)|^2 / |x-y|^{1+s} for the linear interpolation phi of f.

    Diagonal cells are exact; adjacent cells reduce to moments of
    1/(u+y)^{1+s} (singular at the shared corner) computed once per s;
    separated cells use
    tensor Gauss-Legendre, checked against a finer rule; the exterior of
    the support of phi is integrated in closed form in the inner variable.
    """
    g = f.trimmed()
    if g.is_zero():
        return 0.0
    lo, _ = g.support
    v = np.concatenate([[0.0], g.values, [0.0]])   # phi on [lo-1, hi+1]
    m = v.size - 1                                 # number of unit cells
    slope = np.diff(v)
    total = _diagonal_cell(s) * float(np.sum(slope ** 2))

    # adjacent cells (j = i + 1), counted twice by symmetry.  With u = 1 - x
    # in cell k and y in cell k+1, phi(x) - phi(y) = -(slope_k u + slope_{k+1} y)
    # and the integral reduces to three constants of s.
    i20, i11 = _adjacent_moments(s)
    a_, b_ = slope[:-1], slope[1:]
    total += 2.0 * float(np.sum(a_ * a_ * i20 + 2 * a_ * b_ * i11 + b_ * b_ * i20))

    # separated cells |i - j| >= 2
    def far(nq):
        t, w = np.polynomial.legendre.leggauss(nq)
        t, w = 0.5 * (t + 1), 0.5 * w
        acc = 0.0
        for gap in range(2, m):
            k = np.arange(m - gap)
            X = v[k, None] + slope[k, None] * t[None, :]              # (cells, nq)
            Y = v[k + gap, None] + slope[k + gap, None] * t[None, :]
            diff2 = (X[:, :, None] - Y[:, None, :]) ** 2
            dist = gap + t[None, :] - t[:, None]                       # y - x
            acc += float(np.sum(w[:, None] * w[None, :] * diff2 / dist ** (1 + s)))
        return 2.0 * acc

    f1, f2 = far(nodes), far(nodes + 6)
    if abs(f1 - f2) > 1e-8 * max(abs(f2), 1e-12):
        raise IntegrationError("separated-cell quadrature did not converge", {"coarse": f1, "fine": f2})
    total += f2

    # exterior: phi(y) = 0 outside [A, B]; inner integral in closed form
    A, Bend = 0.0, float(m)

    def ext(x):
        k = min(int(np.floor(x)), m - 1)
        phi = v[k] + slope[k] * (x - k)
        return phi * phi * ((x - A) ** -s + (Bend - x) ** -s) / s

    ext_total = 0.0
    for k in range(m):
        val, err = integrate.quad(ext, k, k + 1, epsrel=epsrel, epsabs=1e-13, limit=200)
        ext_total += val
    total += 2.0 * ext_total
    return float(total)


def interpolation_comparison(f: LatticeFunction, p: float, s: float) -> float:
    """Ratio of the continuum double integral of the interpolation to the lattice sum.

    ``p`` only validates the admissible (p, s) range.  A function with zero
    lattice sum gives ratio 0.
    """
    _check_ps(p, s)
    den = fractional_sum(f, s)
    if den == 0:
        return 0.0
    return interpolation_integral(f, s) / den


# ---------------------------------------------------------------- fuzzing

FAMILIES = ("gaussian", "positive", "bump", "spike", "oscillating", "step")


def trial_seed(seed: int, trial: int) -> int:
    """Per-trial seed derived from (seed, trial); recorded in fuzz CSVs."""
    return int(np.random.SeedSequence([int(seed), int(trial)]).generate_state(1)[0])


def random_lattice_function(rng: np.random.Generator, max_support: int = 40) -> LatticeFunction:
    """A random finitely supported function from a mix of shape families."""
    m = int(rng.integers(1, max_support + 1))
    fam = FAMILIES[int(rng.integers(len(FAMILIES)))]
    x = np.arange(m)
    if fam == "gaussian":
        v = rng.standard_normal(m)
    elif fam == "positive":
        v = rng.exponential(size=m)
    elif fam == "bump":
        c, w = rng.uniform(0, m), rng.uniform(0.5, m)
        v = np.exp(-0.5 * ((x - c) / w) ** 2)
    elif fam == "spike":
        v = np.zeros(m)
        v[rng.integers(m)] = rng.choice([-1, 1]) * rng.uniform(0.5, 2)
        v += 1e-3 * rng.standard_normal(m)
    elif fam == "oscillating":
        v = np.cos(np.pi * x + rng.uniform(0, 1)) * rng.uniform(0.5, 2, m)
    else:
        v = np.where(x < rng.integers(m + 1), 1.0, -0.5)
    if not np.any(v):
        v[0] = 1.0
    return LatticeFunction(v * rng.uniform(0.1, 10), int(rng.integers(-1000, 1000)))


@dataclass
class FuzzResult:
    rows: list            # (trial, seed, minimal_C)
    running_max: np.ndarray

    @property
    def max(self) -> float:
        return float(self.running_max[-1]) if self.running_max.size else 0.0

    def growth_ratio(self) -> float:
        """max over the second half divided by max over the first half."""
        c = np.array([r[2] for r in self.rows])
        h = c.size // 2
        if h == 0:
            return 1.0
        return float(np.max(c[h:]) / np.max(c[:h]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["trial", "seed", "minimal_C"])
            for t, sd, c in self.rows:
                w.writerow([t, sd, "%.17g" % c])


def fuzz(check: Callable[[LatticeFunction], float], n_trials: int, seed: int,
         max_support: int = 40, generator=random_lattice_function) -> FuzzResult:
    """Evaluate ``check`` (returning a minimal constant) on random functions."""
    rows = []
    for t in range(n_trials):
        sd = trial_seed(seed, t)
        f = generator(np.random.default_rng(sd), max_support)
        rows.append((t, sd, float(check(f))))
    c = np.array([r[2] for r in rows])
    return FuzzResult(rows, np.maximum.accumulate(c) if c.size else c)


def fuzz_gn_global(n_trials: int, seed: int, kernel: LatticeKernel | None = None,
                   a: float = 1.0, b: float = 1.0, r: float = 1.0, max_support: int = 40) -> FuzzResult:
    kernel = kernel or LatticeKernel.inverse_square()
    return fuzz(lambda f: gn_global_check(f, kernel, a, b, r).minimal_C, n_trials, seed, max_support)


def fuzz_gn_local(n_trials: int, seed: int, L: int = 64, tau: float = 0.25,
                  kernel: LatticeKernel | None = None, a: float = 1.0, b: float = 1.0,
                  r: float = 1.0) -> FuzzResult:
    kernel = kernel or LatticeKernel.inverse_square()

    def gen(rng, max_support):
        f = random_lattice_function(rng, max_support)
        lo = int(rng.integers(-L, L - f.values.size + 2))
        return LatticeFunction(f.values, lo)

    return fuzz(lambda f: gn_local_check(f, kernel, 0, L, tau, a, b, r).minimal_C, n_trials, seed,
                min(2 * L + 1, 40), gen)


def fuzz_interpolation(n_trials: int, seed: int, s: float, p: float = 3.0,
                       max_support: int = 12) -> FuzzResult:
    return fuzz(lambda f: interpolation_comparison(f, p, s), n_trials, seed, max_support)
