"""Monte Carlo estimators over replica outputs.

Every reduction goes through :func:`math.fsum`, which is correctly rounded, so
results do not depend on the order in which replicas finished.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .local import expectation

Z95 = 1.959963984540054


@dataclass(frozen=True)
class EnsembleEstimate:
    n: int
    value: float
    stderr: float

    def __post_init__(self):
        if not self.stderr >= 0:
            raise ValueError("stderr must be non-negative")

    @property
    def ci95(self):
        return (self.value - 1.96 * self.stderr, self.value + 1.96 * self.stderr)

    def covers(self, x):
        lo, hi = self.ci95
        return lo <= x <= hi

    def overlaps(self, other):
        a, b = self.ci95
        c, d = other.ci95
        return a <= d and c <= b

    def as_row(self, t):
        return {"t": t, "estimate": self.value, "stderr": self.stderr, "n": self.n}


def fmean(x):
    x = np.asarray(x, dtype=np.float64).ravel()
    return math.fsum(x) / len(x)


def mean_estimate(x):
    """Sample mean with standard error ``s / sqrt(n)``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    n = len(x)
    if n == 0:
        raise ValueError("no samples")
    m = fmean(x)
    if n == 1:
        return EnsembleEstimate(1, m, math.inf)
    var = math.fsum((x - m) ** 2) / (n - 1)
    return EnsembleEstimate(n, m, math.sqrt(var / n))


def variance_estimate(x):
    """Unbiased sample variance; stderr from the spread of squared deviations."""
    x = np.asarray(x, dtype=np.float64).ravel()
    n = len(x)
    m = fmean(x)
    d2 = (x - m) ** 2
    v = math.fsum(d2) / (n - 1)
    s = math.sqrt(math.fsum((d2 - fmean(d2)) ** 2) / (n - 1) / n)
    return EnsembleEstimate(n, v, s)


def wilson(k, n, z=Z95):
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return (0.0, 1.0)
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return (max(0.0, mid - half), min(1.0, mid + half))


@dataclass
class TrendFit:
    slope: float
    stderr: float
    intercept: float
    points: int

    @property
    def ci95(self):
        if not math.isfinite(self.stderr):
            return (-math.inf, math.inf)
        return (self.slope - Z95 * self.stderr, self.slope + Z95 * self.stderr)

    @property
    def excludes_zero(self):
        lo, hi = self.ci95
        return hi < 0 or lo > 0


def weighted_slope(x, y, w):
    """Weighted least squares line; stderr from the weights (known variances)."""
    x, y, w = (np.asarray(a, dtype=np.float64) for a in (x, y, w))
    if len(x) < 2:
        return TrendFit(math.nan, math.inf, math.nan, len(x))
    sw = math.fsum(w)
    xm = math.fsum(w * x) / sw
    ym = math.fsum(w * y) / sw
    sxx = math.fsum(w * (x - xm) ** 2)
    if sxx == 0:
        return TrendFit(math.nan, math.inf, math.nan, len(x))
    b = math.fsum(w * (x - xm) * (y - ym)) / sxx
    return TrendFit(b, math.sqrt(1.0 / sxx), ym - b * xm, len(x))


def trend_slope(times, estimates):
    """Slope of estimate versus time weighted by ``1 / stderr**2``."""
    se = np.array([e.stderr for e in estimates])
    w = 1.0 / np.maximum(se, 1e-300) ** 2
    return weighted_slope(times, [e.value for e in estimates], w)


# ---------------------------------------------------------------- functionals


def additive_functional(trajectory, f, t):
    """``int_0^t f(eta(s)) ds`` for a trajectory ``(initial, EventLog)``.

    The path is piecewise constant, so the integral is a sum of dwell time
    times value; accepted events after ``t`` are ignored.
    """
    config, log = trajectory
    lo, hi = config.window
    for s in f.support:
        if not lo <= s <= hi:
            raise ValueError(f"support site {s} outside the trajectory window")
    bits = config.bits.copy()
    sup = np.array(f.support, dtype=np.int64) - lo
    watch = set(int(s) for s in sup)

    def value():
        p = 0
        for b, s in enumerate(sup):
            p |= int(bits[s]) << b
        return f.table[p]

    pieces = []
    last = 0.0
    cur = value()
    for te, i, k, a in zip(log.time, log.site, log.displacement, log.accepted):
        if te > t:
            break
        if not a:
            continue
        x, y = int(i) - lo, int(i + k) - lo
        if not (0 <= x < len(bits) and 0 <= y < len(bits)):
            continue
        if bits[x] == 1 and bits[y] == 0:
            bits[x], bits[y] = 0, 1
            if x in watch or y in watch:
                pieces.append(cur * (te - last))
                last = te
                cur = value()
    pieces.append(cur * (t - last))
    return math.fsum(pieces)


def check_mean_zero(f, rho, tol=1e-12):
    m = expectation(f, rho)
    if abs(m) > tol:
        raise ValueError(f"E_rho[f] = {float(m)} is not zero; the variance would grow like t^2")


def variance_curve(A, times, f=None, rho=None, tol=1e-12):
    """``sigma_t^2 / t = E[A_f(t)^2] / t`` per time; ``A`` has shape ``(n, len(times))``."""
    if f is not None:
        check_mean_zero(f, rho, tol)
    A = np.asarray(A, dtype=np.float64)
    return [mean_estimate(A[:, a] ** 2 / t) for a, t in enumerate(times)]


def second_class_occupation(dwell=None, R=None, grid=None, holding=1.0):
    """Estimate ``int_0^T P[R(s) = 0] ds``.

    With per-replica dwell times at the origin (exact, from the event loop)
    this is their mean.  Otherwise ``R`` sampled on ``grid`` (shape ``(n,
    len(grid))``) is integrated by the trapezoid rule, with a warning when the
    grid is coarser than the mean holding time at the origin.
    """
    if dwell is not None:
        return mean_estimate(dwell)
    grid = np.asarray(grid, dtype=np.float64)
    if np.max(np.diff(grid)) > holding:
        warnings.warn("time grid is coarser than the mean holding time at the origin")
    ind = (np.asarray(R) == 0).astype(np.float64)
    w = np.zeros(len(grid))
    d = np.diff(grid)
    w[:-1] += d / 2
    w[1:] += d / 2
    return mean_estimate(ind @ w)


def relation_sides(A, dwell, dwell_weighted, rho, t):
    """Both sides of the occupation-time relation at time ``t``.

    ``A`` are replica values of ``A_{eta_0 - rho}(t)`` at equilibrium;
    ``dwell`` and ``dwell_weighted`` are ``int_0^t 1{R=0} ds`` and ``int_0^t s
    1{R=0} ds`` from coupled replicas started with ``R(0) = 0``.

    Returns ``(lhs, rhs, rhs_exact)`` where ``rhs = 2 rho (1-rho) int_0^t
    P[R=0] ds`` and ``rhs_exact`` carries the finite-time weight ``1 - s/t``.
    """
    c = 2 * rho * (1 - rho)
    lhs = mean_estimate(np.asarray(A, dtype=np.float64) ** 2 / t)
    d = mean_estimate(dwell)
    rhs = EnsembleEstimate(d.n, c * d.value, c * d.stderr)
    ex = mean_estimate(np.asarray(dwell) - np.asarray(dwell_weighted) / t)
    rhs_exact = EnsembleEstimate(ex.n, c * ex.value, c * ex.stderr)
    return lhs, rhs, rhs_exact


def cauchy_stable(estimates, rel=0.1):
    """Transience proxy: successive estimates over growing ``T`` differ by at
    most ``rel`` relative to the last one, allowing for their joint CI."""
    vals = [e.value for e in estimates]
    for a, b in zip(estimates, estimates[1:]):
        gap = abs(b.value - a.value)
        if gap > rel * abs(vals[-1]) + Z95 * math.hypot(a.stderr, b.stderr):
            return False
    return True


@dataclass
class TailReport:
    velocity: EnsembleEstimate
    times: list
    counts: list
    n: list
    probabilities: list
    intervals: list
    fit: TrendFit


def velocity_and_tails(R_by_t, times, epsilon, v, min_events=10):
    """Velocity of ``R(t)/t`` at the largest ``t`` and the tail decay fit.

    ``R_by_t[a]`` holds replica positions at ``times[a]``.  Tail probability:
    ``P[|R(t) - v t| > epsilon t]``; the log-linear fit uses weighted least
    squares on points with at least ``min_events`` tail events, weights
    ``n p / (1 - p)`` (inverse delta-method variance of ``log p``).
    """
    vel = mean_estimate(np.asarray(R_by_t[-1], dtype=np.float64) / times[-1])
    counts, ns, ps, cis = [], [], [], []
    xs, ys, ws = [], [], []
    for R, t in zip(R_by_t, times):
        R = np.asarray(R, dtype=np.float64)
        k = int(np.sum(np.abs(R - v * t) > epsilon * t))
        n = len(R)
        p = k / n
        counts.append(k)
        ns.append(n)
        ps.append(p)
        cis.append(wilson(k, n))
        if k >= min_events and k < n:
            xs.append(t)
            ys.append(math.log(p))
            ws.append(n * p / (1 - p))
    return TailReport(vel, list(times), counts, ns, ps, cis, weighted_slope(xs, ys, ws))


def current_variance(N, t):
    """``Var(N_{0,1}(t)) / t``."""
    v = variance_estimate(N)
    return EnsembleEstimate(v.n, v.value / t, v.stderr / t)


def increment_covariance(N_t, N_ts):
    """``Cov(N(t), N(t+s) - N(t))`` with a product-sample stderr."""
    a = np.asarray(N_t, dtype=np.float64)
    b = np.asarray(N_ts, dtype=np.float64) - a
    prod = (a - fmean(a)) * (b - fmean(b))
    e = mean_estimate(prod)
    n = len(a)
    return EnsembleEstimate(n, e.value * n / (n - 1), e.stderr * n / (n - 1))


def martingale_check(crossings, compensator, p1, rho, t):
    """Mean and variance of ``N - A_c`` against 0 and ``p(1) rho (1-rho) t``."""
    M = np.asarray(crossings, dtype=np.float64) - np.asarray(compensator, dtype=np.float64)
    return mean_estimate(M), variance_estimate(M), p1 * rho * (1 - rho) * t


@dataclass
class CLTReport:
    n: int
    degenerate: bool
    variance: EnsembleEstimate
    statistic: float
    pvalue: float

    def rejected(self, level=0.01):
        return (not self.degenerate) and self.pvalue < level


def clt_diagnostic(A, t, variance=None):
    """Kolmogorov-Smirnov distance of ``A_f(t)/sqrt(t)`` to ``N(0, sigma^2)``.

    ``sigma^2`` defaults to the sample second moment of the scaled values.
    """
    x = np.asarray(A, dtype=np.float64) / math.sqrt(t)
    v = mean_estimate(x**2)
    s2 = v.value if variance is None else float(variance)
    if s2 <= 0 or np.all(x == x[0]):
        return CLTReport(len(x), True, v, 0.0, 1.0)
    res = sps.kstest(x, "norm", args=(0.0, math.sqrt(s2)))
    return CLTReport(len(x), False, v, float(res.statistic), float(res.pvalue))


def symmetric_walk_pmf(n, t):
    """``P[X_t = n]`` for a rate-one continuous-time simple symmetric walk."""
    return sps.skellam.pmf(n, t / 2, t / 2)


def walk_marginal_test(R, t, min_expected=5.0):
    """Chi-square test of replica positions against the symmetric walk law.

    Cells with expected count below ``min_expected`` are pooled into the two
    tails.  Returns ``(statistic, dof, pvalue)``.
    """
    R = np.asarray(R, dtype=np.int64)
    n = len(R)
    # central cells with enough mass; everything else pooled into two tails
    half = int(math.ceil(10 * math.sqrt(t) + 10))
    support = np.arange(-half, half + 1)
    exp = n * symmetric_walk_pmf(support, t)
    keep = support[exp >= min_expected]
    a, b = int(keep.min()), int(keep.max())
    cells_obs = [np.sum(R < a)]
    cells_exp = [n * sps.skellam.cdf(a - 1, t / 2, t / 2)]
    for m in range(a, b + 1):
        cells_obs.append(np.sum(R == m))
        cells_exp.append(n * symmetric_walk_pmf(m, t))
    cells_obs.append(np.sum(R > b))
    cells_exp.append(n * sps.skellam.sf(b, t / 2, t / 2))
    obs = np.array(cells_obs, dtype=np.float64)
    exp = np.array(cells_exp)
    stat = float(np.sum((obs - exp) ** 2 / exp))
    dof = len(obs) - 1
    return stat, dof, float(sps.chi2.sf(stat, dof))
