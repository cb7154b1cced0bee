"""Configurations, potentials, boundary data and reference locations.

Two unit conventions are used throughout.  Macroscopic positions live on the
scale of the equilibrium support (order one, typical spacing 1/N).
Microscopic positions are macroscopic ones multiplied by N, so the typical
spacing is order one.  Every configuration carries its scaling tag and the
functions below refuse to mix them silently.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np
from numpy.polynomial import chebyshev as cheb
from numpy.polynomial import polynomial as poly

from .errors import ConstructionError, ContractError, DomainError, SingularityError


class Scaling(str, enum.Enum):
    MACRO = "macroscopic"
    MICRO = "microscopic"


def _as_scaling(s) -> Scaling:
    return s if isinstance(s, Scaling) else Scaling(str(s))


@dataclass(frozen=True)
class ParticleConfiguration:
    """Strictly increasing positions labelled by the index window [lo, lo+n-1]."""

    positions: np.ndarray
    lo: int = 1
    scaling: Scaling = Scaling.MACRO

    def __post_init__(self):
        x = np.array(self.positions, dtype=np.float64).ravel()
        x.setflags(write=False)
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "scaling", _as_scaling(self.scaling))
        object.__setattr__(self, "lo", int(self.lo))
        if not np.all(np.isfinite(x)):
            raise ConstructionError("positions must be finite")
        if x.size > 1 and not np.all(np.diff(x) > 0):
            raise ConstructionError("positions must be strictly increasing")

    @property
    def hi(self) -> int:
        return self.lo + self.positions.size - 1

    @property
    def window(self) -> tuple[int, int]:
        return (self.lo, self.hi)

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def __len__(self):
        return self.positions.size

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "position", "scaling"])
            for i, x in zip(self.indices, self.positions):
                w.writerow([int(i), "%.17g" % x, self.scaling.value])

    @classmethod
    def from_csv(cls, path) -> "ParticleConfiguration":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ConstructionError(f"{path}: no rows")
        idx = [int(r["index"]) for r in rows]
        if idx != list(range(idx[0], idx[0] + len(idx))):
            raise ConstructionError(f"{path}: indices must be consecutive")
        scalings = {r["scaling"] for r in rows}
        if len(scalings) != 1:
            raise ConstructionError(f"{path}: mixed scaling tags")
        return cls(np.array([float(r["position"]) for r in rows]), idx[0], scalings.pop())


def micro_rescale(config: ParticleConfiguration, N: int) -> ParticleConfiguration:
    """Multiply positions by N and tag the result microscopic."""
    if config.scaling is not Scaling.MACRO:
        raise ContractError("configuration is already microscopic")
    return ParticleConfiguration(config.positions * N, config.lo, Scaling.MICRO)


def macro_rescale(config: ParticleConfiguration, N: int) -> ParticleConfiguration:
    """Inverse of :func:`micro_rescale`."""
    if config.scaling is not Scaling.MICRO:
        raise ContractError("configuration is already macroscopic")
    return ParticleConfiguration(config.positions / N, config.lo, Scaling.MACRO)


@dataclass(frozen=True)
class PotentialModel:
    """Evaluator triple (V, V', V'') with a lower bound on V''.

    The bound is spot-checked on a grid at construction; it is the caller's
    certificate and is used by convexity checks downstream.
    """

    value: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[np.ndarray], np.ndarray]
    d2: Callable[[np.ndarray], np.ndarray]
    inf_second_derivative: float
    name: str = "custom"
    check_grid: tuple = (-10.0, 10.0, 2001)

    def __post_init__(self):
        lo, hi, n = self.check_grid
        g = np.linspace(lo, hi, int(n))
        v2 = np.asarray(self.d2(g), dtype=float)
        if np.any(v2 < self.inf_second_derivative - 1e-12 * (1 + abs(self.inf_second_derivative))):
            raise ConstructionError(
                f"V'' drops below the certified bound {self.inf_second_derivative} on the check grid")

    @classmethod
    def quadratic(cls, s: float = 1.0) -> "PotentialModel":
        """V(x) = s^2 x^2 / 2; equilibrium density is the semicircle scaled by s."""
        s2 = float(s) ** 2
        return cls(lambda x: 0.5 * s2 * np.square(x), lambda x: s2 * np.asarray(x, float),
                   lambda x: np.full(np.shape(x), s2), s2, name=f"quadratic(s={s})")

    @classmethod
    def polynomial(cls, coeffs, name: str | None = None) -> "PotentialModel":
        """Polynomial potential sum c_k x^k with coefficients in increasing degree."""
        c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
        c1, c2 = poly.polyder(c), poly.polyder(c, 2)
        if c2.size == 0 or not np.any(c2):
            inf2 = 0.0
        elif c2.size % 2 == 0 or c2[-1] < 0:
            raise ConstructionError("V'' is unbounded below for this polynomial")
        else:
            crit = poly.polyroots(poly.polyder(c2)) if c2.size > 1 else np.array([0.0])
            crit = crit[np.abs(crit.imag) < 1e-12].real
            cand = poly.polyval(crit, c2) if crit.size else np.array([c2[0]])
            inf2 = float(np.min(cand))
        return cls(lambda x: poly.polyval(x, c), lambda x: poly.polyval(x, c1),
                   lambda x: poly.polyval(x, c2) + np.zeros(np.shape(x)), inf2,
                   name=name or f"polynomial({list(c)})")

    @classmethod
    def quartic(cls) -> "PotentialModel":
        """V(x) = x^4 / 4."""
        return cls.polynomial([0, 0, 0, 0, 0.25], name="quartic")


@dataclass(frozen=True)
class BoundaryData:
    """Frozen external points below and above an index window.

    ``below`` holds y_j for j < lo and ``above`` holds y_j for j > hi, both
    sorted increasingly.  The configuration interval J is bounded by the
    innermost points on each side.
    """

    below: np.ndarray
    above: np.ndarray
    scaling: Scaling = Scaling.MACRO

    def __post_init__(self):
        b = np.array(self.below, dtype=float).ravel()
        a = np.array(self.above, dtype=float).ravel()
        for arr in (b, a):
            arr.setflags(write=False)
        object.__setattr__(self, "below", b)
        object.__setattr__(self, "above", a)
        object.__setattr__(self, "scaling", _as_scaling(self.scaling))
        if b.size == 0 or a.size == 0:
            raise ConstructionError("need at least one external point on each side")
        if np.any(np.diff(b) <= 0) or np.any(np.diff(a) <= 0):
            raise ConstructionError("external points must be strictly increasing")
        if not b[-1] < a[0]:
            raise ConstructionError("configuration interval is empty")

    @property
    def J(self) -> tuple[float, float]:
        return (float(self.below[-1]), float(self.above[0]))

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.below[-1] + self.above[0])

    @property
    def length(self) -> float:
        return float(self.above[0] - self.below[-1])

    @property
    def points(self) -> np.ndarray:
        return np.concatenate([self.below, self.above])

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all((x > self.below[-1]) & (x < self.above[0])))

    def rescaled(self, factor: float, scaling: Scaling) -> "BoundaryData":
        return BoundaryData(self.below * factor, self.above * factor, scaling)


@dataclass(frozen=True)
class ReferenceLocations:
    """Classical locations gamma and equidistant points alpha for one window."""

    gamma: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if g.size > 1 and np.any(np.diff(g) <= 0):
            raise ConstructionError("gamma must be strictly increasing")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))


def equidistant_alpha(J, K: int, L: int = 0) -> np.ndarray:
    """Points alpha_j = ybar + (j - L) |J| / (2K + 2) for j = L-K, ..., L+K."""
    a, b = float(J[0]), float(J[1])
    if not b > a:
        raise DomainError(f"configuration interval ({a}, {b}) is empty")
    if K < 0:
        raise DomainError("K must be nonnegative")
    h = (b - a) / (2 * K + 2)
    ybar = 0.5 * (a + b)
    return ybar + h * np.arange(-K, K + 1, dtype=float)


class ExternalPotential:
    """V_y on J: the potential plus the logarithmic field of frozen points.

    Macroscopic:  V_y(x) = V(x) - (2/N) sum log|x - y_j|.
    Microscopic:  V_y(x) = N V(x/N) - 2 sum log|x - y_j|.

    With ``far_field=True`` the contribution of external points more than
    ``near`` indices away from the window is replaced by a Chebyshev
    interpolant on J (validated against the direct sum at construction);
    this keeps per-step cost independent of N in local simulations.
    """

    def __init__(self, V: PotentialModel, boundary: BoundaryData, N: int,
                 far_field: bool = False, near: int = 16, degree: int = 48):
        self.V = V
        self.boundary = boundary
        self.N = int(N)
        self.scaling = boundary.scaling
        self.weight = 2.0 / N if self.scaling is Scaling.MACRO else 2.0
        b, a = boundary.below, boundary.above
        self._far = None
        if far_field and (b.size > near or a.size > near):
            self._near_pts = np.concatenate([b[-near:], a[:near]])
            far_pts = np.concatenate([b[:-near], a[near:]])
            self._far = self._fit_far(far_pts, degree)
        else:
            self._near_pts = boundary.points

    def _fit_far(self, pts, degree):
        lo, hi = self.boundary.J
        c, r = 0.5 * (lo + hi), 0.5 * (hi - lo)

        def raw(x):
            d = x[:, None] - pts[None, :]
            return (np.log(np.abs(d)).sum(1), (1.0 / d).sum(1), (1.0 / d ** 2).sum(1))

        t = np.cos(np.pi * (np.arange(degree + 1) + 0.5) / (degree + 1))
        vals = raw(c + r * t)
        coefs = [cheb.chebfit(t, v, degree) for v in vals]
        probe = c + r * np.linspace(-0.999, 0.999, 97)
        exact = raw(probe)
        for cf, ex in zip(coefs, exact):
            err = np.max(np.abs(cheb.chebval((probe - c) / r, cf) - ex))
            if err > 1e-9 * (1 + np.max(np.abs(ex))):
                raise ConstructionError(f"far-field interpolation error {err:.2e} too large")
        return c, r, coefs

    def _sums(self, x, orders=(0, 1, 2)):
        """sum log|x-y|, sum 1/(x-y), sum 1/(x-y)^2 over external points (requested orders only)."""
        x = np.asarray(x, dtype=float)
        flat = np.ascontiguousarray(x.reshape(-1))
        out = []
        for k in orders:
            s = _power_sums(flat, self._near_pts, k).reshape(x.shape)
            if self._far is not None:
                c, r, coefs = self._far
                t = np.ascontiguousarray(((x - c) / r).reshape(-1))
                s = s + _clenshaw(t, coefs[k]).reshape(x.shape)
            out.append(s)
        return out

    def _v(self, x, k):
        if self.scaling is Scaling.MACRO:
            return (self.V.value, self.V.d1, self.V.d2)[k](x)
        N = self.N
        u = np.asarray(x) / N
        if k == 0:
            return N * self.V.value(u)
        if k == 1:
            return self.V.d1(u)
        return self.V.d2(u) / N

    def value(self, x):
        return self._v(x, 0) - self.weight * self._sums(x, (0,))[0]

    def d1(self, x):
        return self._v(x, 1) - self.weight * self._sums(x, (1,))[0]

    def d2(self, x):
        return self._v(x, 2) + self.weight * self._sums(x, (2,))[0]

    def all(self, x):
        s0, s1, s2 = self._sums(x)
        w = self.weight
        return (self._v(x, 0) - w * s0, self._v(x, 1) - w * s1, self._v(x, 2) + w * s2)

    @property
    def inf_second_derivative(self) -> float:
        """Lower bound for the V part of V_y'' (the log part is positive)."""
        inf2 = self.V.inf_second_derivative
        return inf2 if self.scaling is Scaling.MACRO else inf2 / self.N


def external_potential_Vy(V: PotentialModel, boundary: BoundaryData, x: float,
                          N: int, scaling=None) -> tuple[float, float]:
    """Return (V_y(x), V_y'(x)) for a single point strictly inside J."""
    if scaling is not None and _as_scaling(scaling) is not boundary.scaling:
        raise ContractError("scaling does not match the boundary data")
    x = float(x)
    if np.any(boundary.points == x):
        raise SingularityError(f"x={x} coincides with an external point")
    lo, hi = boundary.J
    if not lo < x < hi:
        raise DomainError(f"x={x} lies outside J=({lo}, {hi})")
    ext = ExternalPotential(V, boundary, N)
    v, d1, _ = ext.all(np.array([x]))
    return float(v[0]), float(d1[0])


def reference_locations(density, N: int, K: int, L: int,
                        boundary: BoundaryData) -> ReferenceLocations:
    """Classical and equidistant locations for the window L-K..L+K (macroscopic)."""
    from .equilibrium import classical_locations

    gamma = classical_locations(density, N)[L - K - 1:L + K]
    return ReferenceLocations(gamma, equidistant_alpha(boundary.J, K, L))


@dataclass
class RegularityReport:
    interval_length_ok: bool
    derivative_profile_ok: bool
    convexity_ok: bool
    interval_residual: float
    derivative_residual: float
    convexity_margin: float
    tolerance: float
    details: dict = field(default_factory=dict)

    @property
    def regular(self) -> bool:
        return self.interval_length_ok and self.derivative_profile_ok and self.convexity_ok


def check_regular_potential(external: ExternalPotential, rho_bar: float, xi: float,
                            K: int, N: int | None = None, C: float = 10.0,
                            c_convex: float = 0.1, n_grid: int = 2001) -> RegularityReport:
    """Evaluate the three K^xi-regularity conditions of V_y on a grid over J.

    Works in macroscopic units.  With h = K^xi / (N rho_bar) and d(x) the
    distance to the nearer endpoint of J = (a, b):

    * interval length:  | |J| - (2K+1)/(N rho_bar) | <= C h rho_bar
      i.e. the normalized residual |...| N / K^xi is at most C;
    * derivative profile:  the residual of
      V_y'(x) - 2 rho_bar log((x - a + h) / (b - x + h))
      times N d(x) / K^xi is at most C on the grid;
    * convexity:  (V_y''(x) - inf V'') d(x) >= c_convex on the grid.

    The leading profile carries the factor 2 of the macroscopic normalization
    V_y = V - (2/N) sum log and is signed, increasing from left to right.
    """
    if external.scaling is not Scaling.MACRO:
        raise ContractError("regularity is checked in macroscopic units")
    N = external.N if N is None else int(N)
    a, b = external.boundary.J
    kx = float(K) ** xi
    h = kx / (N * rho_bar)
    len_res = abs((b - a) - (2 * K + 1) / (N * rho_bar)) * N / kx

    # grid clustered towards both ends, where the profile is steepest
    t = np.linspace(-1.0, 1.0, n_grid)[1:-1]
    x = 0.5 * (a + b) + 0.5 * (b - a) * np.sin(0.5 * np.pi * t)
    _, d1, d2 = external.all(x)
    d = np.minimum(x - a, b - x)
    profile = 2.0 * rho_bar * np.log((x - a + h) / (b - x + h))
    der = np.abs(d1 - profile) * N * d / kx
    conv = (d2 - external.V.inf_second_derivative) * d
    return RegularityReport(
        interval_length_ok=bool(len_res <= C),
        derivative_profile_ok=bool(np.max(der) <= C),
        convexity_ok=bool(np.min(conv) >= c_convex),
        interval_residual=float(len_res),
        derivative_residual=float(np.max(der)),
        convexity_margin=float(np.min(conv)),
        tolerance=float(C),
        details={"h": h, "argmax_derivative": float(x[np.argmax(der)]), "grid_points": x.size},
    )


@numba.njit(cache=True)
def _power_sums(x, pts, k):
    """out_i = sum_j f(x_i - pts_j) with f = log|.|, 1/., 1/.^2 for k = 0, 1, 2."""
    out = np.zeros(x.size)
    for i in range(x.size):
        acc = 0.0
        for j in range(pts.size):
            d = x[i] - pts[j]
            if k == 0:
                acc += np.log(abs(d))
            elif k == 1:
                acc += 1.0 / d
            else:
                acc += 1.0 / (d * d)
        out[i] = acc
    return out


@numba.njit(cache=True)
def _clenshaw(t, c):
    """sum_k c_k T_k(t) by the Clenshaw recurrence."""
    out = np.empty(t.size)
    m = c.size
    for i in range(t.size):
        b1 = 0.0
        b2 = 0.0
        for k in range(m - 1, 0, -1):
            b1, b2 = 2.0 * t[i] * b1 - b2 + c[k], b1
        out[i] = t[i] * b1 - b2 + c[0]
    return out
