"""Equilibrium densities, their CDFs and classical locations.

The equilibrium density of V (for the energy normalization used here) solves
the singular integral equation

    V'(x) / 2 = PV int rho(y) / (x - y) dy   on its support [A, B].

For a single interval, map x = c + r t with t in [-1, 1] and expand
g(t) = V'(c + r t) / 2 = sum_n g_n T_n(t) in Chebyshev polynomials.  The
airfoil identity PV int sqrt(1-s^2) U_{n-1}(s) / (t - s) ds = pi T_n(t) gives

    rho(x) = sqrt(1 - t^2) / pi * sum_{n>=1} g_n U_{n-1}(t),

subject to g_0 = 0 (no constant term on the right) and r g_1 = 2 (unit mass).
These two conditions fix the endpoints (c, r).
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy import integrate, optimize

from .core import PotentialModel
from .errors import DomainError, UnsupportedPotentialError


class DensityKind(str, enum.Enum):
    SEMICIRCLE = "semicircle"
    NUMERIC = "numeric"


def semicircle_density(x):
    """(1/2pi) sqrt((4 - x^2)_+)."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.clip(4.0 - x * x, 0.0, None)) / (2.0 * np.pi)


def semicircle_cdf(x):
    """Closed-form CDF 1/2 + x sqrt(4-x^2)/(4pi) + arcsin(x/2)/pi, clipped."""
    x = np.clip(np.asarray(x, dtype=float), -2.0, 2.0)
    return 0.5 + x * np.sqrt(4.0 - x * x) / (4.0 * np.pi) + np.arcsin(0.5 * x) / np.pi


@dataclass(frozen=True)
class EquilibriumDensity:
    """Single-interval density with square-root edges.

    ``coeffs`` are g_1, g_2, ... of the Chebyshev representation (see module
    docstring) on the support; for the semicircle kind they are (1/s,) on
    [-2/s, 2/s], with ``scale`` s.
    """

    support: tuple[float, float]
    kind: DensityKind
    coeffs: np.ndarray = field(repr=False)
    scale: float = 1.0

    @property
    def center(self) -> float:
        return 0.5 * (self.support[0] + self.support[1])

    @property
    def radius(self) -> float:
        return 0.5 * (self.support[1] - self.support[0])

    def _t(self, x):
        return (np.asarray(x, dtype=float) - self.center) / self.radius

    def density(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind is DensityKind.SEMICIRCLE:
            return self.scale * semicircle_density(self.scale * x)
        t = self._t(x)
        inside = np.abs(t) < 1
        tc = np.clip(t, -1, 1)
        h = np.zeros_like(tc)
        for n, g in enumerate(self.coeffs, start=1):
            h = h + g * _cheb_u(n - 1, tc)
        return np.where(inside, np.sqrt(1 - tc * tc) * h / np.pi, 0.0)

    __call__ = density

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind is DensityKind.SEMICIRCLE:
            return semicircle_cdf(self.scale * x)
        theta = np.arccos(np.clip(self._t(x), -1, 1))

        def F(m):
            # int_theta^pi cos(m u) du
            return np.pi - theta if m == 0 else -np.sin(m * theta) / m

        tot = np.zeros_like(theta)
        for n, g in enumerate(self.coeffs, start=1):
            tot = tot + g * 0.5 * (F(n - 1) - F(n + 1))
        return np.clip(self.radius * tot / np.pi, 0.0, 1.0)

    def quantile(self, q: float, tol: float = 1e-13) -> float:
        """Solve cdf(x) = q by bracketed root finding."""
        A, B = self.support
        if q <= 0:
            return A
        if q >= 1:
            return B
        return optimize.brentq(lambda x: float(self.cdf(x)) - q, A, B, xtol=tol, rtol=1e-15)

    def to_csv(self, path, n: int = 401) -> None:
        x = np.linspace(self.support[0], self.support[1], n)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "rho"])
            for xi, ri in zip(x, self.density(x)):
                w.writerow(["%.17g" % xi, "%.17g" % ri])


def _cheb_u(n: int, t):
    """Chebyshev polynomial of the second kind via the three-term recurrence."""
    u0, u1 = np.ones_like(t), 2 * t
    if n == 0:
        return u0
    for _ in range(n - 1):
        u0, u1 = u1, 2 * t * u1 - u0
    return u1


def semicircle(scale: float = 1.0) -> EquilibriumDensity:
    """Semicircle density s rho(s x) on [-2/s, 2/s], the minimizer for V = s^2 x^2/2."""
    s = float(scale)
    return EquilibriumDensity((-2.0 / s, 2.0 / s), DensityKind.SEMICIRCLE, np.array([1.0 / s]), s)


def quantile_gamma(density: EquilibriumDensity, j: int, N: int) -> float:
    """Classical location gamma_j: the j/N quantile, 1 <= j <= N."""
    if not 1 <= j <= N:
        raise DomainError(f"j={j} outside 1..{N}")
    return density.quantile(j / N)


def classical_locations(density: EquilibriumDensity, N: int) -> np.ndarray:
    """gamma_1 < ... < gamma_N (gamma_N is the right edge)."""
    return np.array([density.quantile(j / N) for j in range(1, N + 1)])


def _half_derivative_coeffs(V: PotentialModel, c: float, r: float, degree: int) -> np.ndarray:
    return cheb.chebinterpolate(lambda t: 0.5 * V.d1(c + r * t), degree)


def solve_equilibrium_density(V: PotentialModel, degree: int = 40,
                              guess: tuple[float, float] | None = None) -> EquilibriumDensity:
    """Single-interval equilibrium density of V.

    Newton iteration (scipy ``root``) on the endpoint conditions
    g_0(c, r) = 0 and r g_1(c, r) = 2, followed by a positivity check of the
    resulting density.  Raises UnsupportedPotentialError if the ansatz fails.
    """
    def resid(p):
        c, logr = p
        r = np.exp(logr)
        g = _half_derivative_coeffs(V, c, r, degree)
        return [g[0], r * g[1] - 2.0]

    starts = [guess] if guess is not None else []
    v2 = float(np.asarray(V.d2(np.array([0.0])))[0])
    if v2 > 0:
        starts.append((0.0, 2.0 / np.sqrt(v2)))
    starts += [(0.0, 2.0), (0.0, 1.0), (0.0, 4.0)]
    sol = None
    for c0, r0 in starts:
        res = optimize.root(resid, [c0, np.log(r0)], method="hybr", tol=1e-14)
        # hybr can report failure when started at the root; judge by the residual
        if np.max(np.abs(res.fun)) < 1e-11:
            sol = res.x
            break
    if sol is None:
        raise UnsupportedPotentialError("endpoint conditions have no solution")
    c, r = sol[0], float(np.exp(sol[1]))
    g = _half_derivative_coeffs(V, c, r, degree)
    dens = EquilibriumDensity((c - r, c + r), DensityKind.NUMERIC, np.array(g[1:]))
    t = np.cos(np.linspace(0, np.pi, 2001))
    h = sum(gn * _cheb_u(n - 1, t) for n, gn in enumerate(dens.coeffs, start=1))
    if np.min(h) <= 0:
        raise UnsupportedPotentialError(
            "density is not positive on its support; the potential is not single-interval regular")
    return dens


def euler_lagrange_residual(density: EquilibriumDensity, V: PotentialModel, x) -> np.ndarray:
    """|V'(x)/2 - PV int rho(y)/(x-y) dy| by adaptive Cauchy-weight quadrature.

    Independent of the Chebyshev construction: uses QUADPACK's principal
    value rule on the density itself.
    """
    A, B = density.support
    out = []
    for xi in np.atleast_1d(x):
        # quad with weight='cauchy' computes PV int f(y)/(y - xi) dy
        pv, _ = integrate.quad(lambda y: float(density.density(y)), A, B, weight="cauchy",
                               wvar=xi, limit=400, epsabs=1e-13, epsrel=1e-12)
        out.append(abs(0.5 * float(V.d1(np.array([xi]))[0]) + pv))
    return np.array(out)


def density_mass(density: EquilibriumDensity) -> float:
    """Total mass by Gauss-Chebyshev quadrature of the second kind."""
    n = 400
    k = np.arange(1, n + 1)
    t = np.cos(k * np.pi / (n + 1))
    w = np.pi / (n + 1) * np.sin(k * np.pi / (n + 1)) ** 2
    x = density.center + density.radius * t
    h = density.density(x) / np.sqrt(1 - t * t)
    return float(density.radius * np.sum(w * h))
