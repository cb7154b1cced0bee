"""Gap statistics, rigidity tails, level repulsion and universality comparisons.

All estimators act on plain sample arrays.  Reports carry the caveat that
the underlying statements are large-N limits, so every threshold used on
them is a finite-N proxy.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .core import ParticleConfiguration, Scaling
from .equilibrium import EquilibriumDensity, quantile_gamma
from .errors import DomainError, InsufficientDataError

log = logging.getLogger(__name__)

FINITE_N_CAVEAT = ("the underlying results are N -> infinity statements; "
                   "thresholds applied here are finite-N proxies")


def _as_array(samples, scaling: Scaling | None, lo: int | None):
    """Stack samples into (draws, n); returns (array, lo, scaling)."""
    if isinstance(samples, ParticleConfiguration):
        samples = [samples]
    if isinstance(samples, (list, tuple)) and samples and isinstance(samples[0], ParticleConfiguration):
        los = {c.lo for c in samples}
        scs = {c.scaling for c in samples}
        if len(los) != 1 or len(scs) != 1:
            raise DomainError("configurations must share index window and scaling")
        return np.stack([c.positions for c in samples]), los.pop(), scs.pop()
    arr = np.atleast_2d(np.asarray(samples, dtype=float))
    return arr, 1 if lo is None else int(lo), scaling or Scaling.MACRO


@dataclass
class GapSample:
    """Rescaled gaps rho_k N (x_{k+a} - x_k), a = 1..n, one row per (draw, k)."""

    gaps: np.ndarray              # (rows, n)
    k: tuple[int, ...]
    order: int
    rho: np.ndarray               # rho(gamma_k) for each k
    descriptor: dict = field(default_factory=dict)

    def values(self, a: int | None = None) -> np.ndarray:
        """Gaps of order a (1..n) or all orders pooled."""
        if a is None:
            return self.gaps.ravel()
        if not 1 <= a <= self.order:
            raise DomainError(f"order {a} outside 1..{self.order}")
        return self.gaps[:, a - 1]

    @property
    def size(self) -> int:
        return self.gaps.shape[0]

    def ecdf(self, a: int | None = 1):
        """Sorted values and the right-continuous empirical CDF at them."""
        v = np.sort(self.values(a))
        return v, np.arange(1, v.size + 1) / v.size

    def to_csv(self, path, a: int | None = 1) -> None:
        v, F = self.ecdf(a)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "cdf"])
            for x, y in zip(v, F):
                w.writerow(["%.17g" % x, "%.17g" % y])


def gap_distribution(samples, density: EquilibriumDensity, k: int | Sequence[int], n: int = 1,
                     N: int | None = None, bulk_alpha: float = 0.1,
                     scaling: Scaling | None = None, lo: int | None = None,
                     descriptor: dict | None = None) -> GapSample:
    """Rescaled gaps of order 1..n at index k (1-based), pooled over a list of k.

    ``samples`` is a list of ParticleConfiguration or an array (draws, m)
    whose column 0 carries index ``lo`` (default 1).  Macroscopic positions
    are multiplied by N rho(gamma_k), microscopic ones by rho(gamma_k).
    """
    arr, lo, scaling = _as_array(samples, scaling, lo)
    m = arr.shape[1]
    N = N or (lo - 1 + m)
    ks = (int(k),) if np.isscalar(k) else tuple(int(x) for x in k)
    if n < 1:
        raise DomainError("gap order must be at least 1")
    rows, rhos = [], []
    for kk in ks:
        if not bulk_alpha * N <= kk <= (1 - bulk_alpha) * N:
            raise DomainError(f"k={kk} outside the bulk [{bulk_alpha}N, {1 - bulk_alpha}N]")
        c = kk - lo
        if c < 0 or c + n >= m:
            raise DomainError(f"indices {kk}..{kk + n} not covered by the samples")
        rho = float(density.density(quantile_gamma(density, kk, N)))
        scale = rho * (N if scaling is Scaling.MACRO else 1.0)
        rows.append(scale * (arr[:, c + 1:c + n + 1] - arr[:, [c]]))
        rhos.append(rho)
    gaps = np.concatenate(rows, axis=0)
    if np.any(gaps < 0):
        raise DomainError("samples are not ordered")
    return GapSample(gaps, ks, n, np.array(rhos), dict(descriptor or {}, N=N))


# ---------------------------------------------------------------- comparison

@dataclass
class ComparisonReport:
    ks: float
    p_value: float
    ci: tuple[float, float]
    sizes: tuple[int, int]
    n_boot: int
    seed: int | None
    params: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"estimator": "ks_2samp", "params": self.params, "value": self.ks,
                "p_value": self.p_value, "CI": list(self.ci), "sample_size": list(self.sizes),
                "n_boot": self.n_boot, "seed": self.seed, "caveat": FINITE_N_CAVEAT}


def ks_distance(a, b) -> float:
    return float(stats.ks_2samp(np.asarray(a), np.asarray(b)).statistic)


def universality_compare(sample_a: GapSample, sample_b: GapSample, order: int | None = 1,
                         n_boot: int = 500, rng: np.random.Generator | None = None,
                         level: float = 0.95, min_size: int = 500) -> ComparisonReport:
    """KS distance between two rescaled-gap laws with a bootstrap interval.

    The interval is the basic bootstrap [2D - q_hi, 2D - q_lo] clipped at 0,
    which can reach 0 when the two laws agree.  Samples must share beta when
    their descriptors record it.
    """
    ba, bb = sample_a.descriptor.get("beta"), sample_b.descriptor.get("beta")
    if ba is not None and bb is not None and ba != bb:
        raise DomainError(f"beta differs ({ba} vs {bb})")
    a, b = sample_a.values(order), sample_b.values(order)
    if min(a.size, b.size) < min_size:
        raise InsufficientDataError(f"need at least {min_size} gaps per sample, got {a.size}, {b.size}")
    res = stats.ks_2samp(a, b)
    rng = rng or np.random.default_rng()
    seed = None
    boot = np.empty(n_boot)
    for i in range(n_boot):
        boot[i] = ks_distance(rng.choice(a, a.size), rng.choice(b, b.size))
    q_lo, q_hi = np.quantile(boot, [(1 - level) / 2, (1 + level) / 2])
    d = float(res.statistic)
    ci = (max(0.0, float(2 * d - q_hi)), max(0.0, float(2 * d - q_lo)))
    return ComparisonReport(d, float(res.pvalue), ci, (a.size, b.size), n_boot, seed,
                            {"order": order, "k_a": list(sample_a.k), "k_b": list(sample_b.k)})


# ---------------------------------------------------------------- tails

@dataclass
class TailFit:
    slope: float
    intercept: float
    ci: tuple[float, float]
    fit_range: tuple[float, float]
    n_points: int
    r_squared: float
    sample_size: int
    estimator: str = ""
    params: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def gaussian_tail(self) -> bool:
        return self.r_squared > 0.95

    @property
    def c(self) -> float:
        """Decay constant -slope of a fit of log P against u^2."""
        return -self.slope

    def to_json(self) -> dict:
        return {"estimator": self.estimator, "params": self.params, "value": self.slope,
                "CI": list(self.ci), "fit_range": list(self.fit_range), "r_squared": self.r_squared,
                "sample_size": self.sample_size, "n_points": self.n_points,
                "warnings": self.warnings, "caveat": FINITE_N_CAVEAT}


def _linfit(x, y, level=0.95):
    res = stats.linregress(x, y)
    tq = stats.t.ppf((1 + level) / 2, max(x.size - 2, 1))
    return res, (res.slope - tq * res.stderr, res.slope + tq * res.stderr)


def rigidity_tail(samples, reference, k: int, scale: float, lo: int = 1,
                  n_u: int = 30, min_exceed: int = 10, p_max: float = 0.2) -> TailFit:
    """Fit log P(|x_k - alpha_k| >= u scale) against u^2.

    ``reference`` holds alpha (an array or an object with ``alpha``) for the
    columns of ``samples`` starting at index ``lo``.  The fit uses u with
    P <= p_max and at least ``min_exceed`` exceedances; if fewer than three
    such u remain the u grid is widened (recorded as a warning).
    """
    arr, lo, _ = _as_array(samples, None, lo)
    if arr.shape[0] < 1000:
        raise InsufficientDataError(f"need at least 1000 samples, got {arr.shape[0]}")
    alpha = np.asarray(getattr(reference, "alpha", reference), dtype=float)
    dev = np.abs(arr[:, k - lo] - alpha[k - lo]) / scale
    warnings = []
    top = float(np.max(dev))
    if top == 0:
        return TailFit(-np.inf, 0.0, (-np.inf, -np.inf), (0.0, 0.0), 0, 0.0, dev.size,
                       "rigidity_tail", {"k": k, "scale": scale}, ["all deviations are zero"])
    for widen in range(4):
        u = np.linspace(0, top, n_u // (2 ** widen) + 2)[1:-1]
        cnt = np.array([(dev >= x).sum() for x in u])
        P = cnt / dev.size
        sel = (P <= p_max) & (cnt >= min_exceed)
        if sel.sum() >= 3:
            break
        warnings.append(f"too few exceedances; widened bins to {u.size}")
    else:
        raise InsufficientDataError("too few exceedances for a tail fit")
    res, ci = _linfit(u[sel] ** 2, np.log(P[sel]))
    return TailFit(float(res.slope), float(res.intercept), ci, (float(u[sel][0]), float(u[sel][-1])),
                   int(sel.sum()), float(res.rvalue ** 2), dev.size, "rigidity_tail",
                   {"k": k, "scale": scale}, warnings)


def level_repulsion_exponent(gaps, q_range: tuple[float, float] = (0.001, 0.05),
                             n_points: int = 20, min_events: int = 100,
                             min_samples: int = 10_000, order: int | None = None) -> TailFit:
    """Log-log slope of the empirical P(gap <= s) over a quantile range of s.

    ``gaps`` is an array or a GapSample (``order`` selects the gap order).
    The expected slope is beta + 1 for nearest gaps and 2 beta + 1 for
    gaps spanning two spacings.
    """
    if isinstance(gaps, GapSample):
        g = gaps.values(order or 1)
    else:
        g = np.asarray(gaps, dtype=float).ravel()
    if g.size < min_samples:
        raise InsufficientDataError(f"need at least {min_samples} gaps, got {g.size}")
    g = np.sort(g)
    s_min, s_max = np.quantile(g, q_range)
    events = int(np.searchsorted(g, s_max, side="right"))
    if events < min_events:
        raise InsufficientDataError(f"only {events} events below s_max; shrink-range failed")
    if not s_min > 0:
        raise InsufficientDataError("the fit range starts at a zero gap")
    warnings = []
    if s_max / s_min < 10:
        # a quantile range (q0, q1) spans (q1/q0)^(1/slope) in s, under a decade for slope > 1.7
        warnings.append(f"fit range covers {np.log10(s_max / s_min):.2f} decades of s")
    s = np.geomspace(s_min, s_max, n_points)
    F = np.searchsorted(g, s, side="right") / g.size
    ok = F > 0
    res, ci = _linfit(np.log(s[ok]), np.log(F[ok]))
    return TailFit(float(res.slope), float(res.intercept), ci, (float(s_min), float(s_max)),
                   int(ok.sum()), float(res.rvalue ** 2), int(g.size), "level_repulsion_exponent",
                   {"q_range": list(q_range), "order": order or 1}, warnings)


def level_count(config, E: float, delta: float) -> int:
    """Number of positions in the open interval (E - delta, E + delta)."""
    x = config.positions if isinstance(config, ParticleConfiguration) else np.asarray(config, float)
    return int(np.sum((x > E - delta) & (x < E + delta)))


def count_exceedance(samples, E: float, delta: float, m: int = 2) -> float:
    """Empirical P(count in (E - delta, E + delta) >= m) over draws."""
    arr, _, _ = _as_array(samples, None, None)
    counts = np.sum((arr > E - delta) & (arr < E + delta), axis=1)
    return float(np.mean(counts >= m))
