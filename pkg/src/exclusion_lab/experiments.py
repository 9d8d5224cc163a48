"""Replica runners shared by the harness and the acceptance suite.

A replica is a pure function of ``(master seed, replica index, parameters)``.
Windows are sized from the speeds at which the audit's suspect regions
advance: with ``r+ = sum_{k>0} k p(k)`` and ``r- = sum_{k<0} |k| p(k)`` the
left region grows to the right at about ``(1-rho) r+ - rho r-`` and the right
one to the left at about ``rho r+ - (1-rho) r-`` (exact tagged-particle speeds
for TASEP).  On top of that comes a fluctuation allowance; a replica whose
audit trips is rerun with the allowance doubled, which is reproducible because
clocks and initial bits depend only on ``(seed, site)``.
"""

import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .clock import ClockRealization
from .core import run, sample_equilibrium
from .kernel import JumpKernel
from .rng import derive_seed
from .stats.local import LocalFunction, centered_occupation, current_function

MAX_RETRIES = 4


def front_speeds(kernel, rho):
    rp = sum(k * r for k, r in kernel.rates if k > 0)
    rm = sum(-k * r for k, r in kernel.rates if k < 0)
    left = max((1 - rho) * rp - rho * rm, 0.0)
    right = max(rho * rp - (1 - rho) * rm, 0.0)
    return left, right


def fluctuation_allowance(kernel, t, widen=1.0, kpz=True):
    """Extra sites beyond the ballistic front distance.

    ``kpz`` adds a ``t^(2/3)`` term for observations that follow the
    second-class particle; fronts themselves fluctuate diffusively.
    """
    q = kernel.total_rate * t
    f = 5.0 * math.sqrt(q) + (3.0 * q ** (2.0 / 3.0) if kpz else 0.0)
    return widen * f + 20 * kernel.range


def window_for(kernel, rho, t, center, drift, widen=1.0, kpz=True):
    """Sites to simulate so the audit protects ``center + drift * t`` at time ``t``."""
    left, right = front_speeds(kernel, rho)
    f = fluctuation_allowance(kernel, t, widen, kpz)
    lo = center - int(math.ceil(max(left - drift, 0.0) * t + f))
    hi = center + int(math.ceil(max(right + drift, 0.0) * t + f))
    return lo, hi


def coupled_replica(seed, kernel, rho, t, samples, R0=0, pad=0):
    """One basic-coupled run from ``P_rho(. | eta_{R0} = 0)`` with ``R(0) = R0``.

    Returns a dict with ``R`` at the samples, dwell times at the origin
    (``dwell``: ``int 1{R=0}``, ``dwell_s``: ``int s 1{R=0}``), the retries
    used and whether the final audit is clean.
    """
    samples = np.asarray(samples, dtype=np.float64)
    v = kernel.velocity(rho)
    clock = ClockRealization(seed, t)
    for attempt in range(MAX_RETRIES + 1):
        lo, hi = window_for(kernel, rho, t, R0, v, 2.0**attempt)
        lo, hi = lo - pad, hi + pad
        cfg = sample_equilibrium(rho, (lo, hi), seed)
        cfg.bits[R0 - lo] = 0
        r = run(
            cfg, kernel, clock, t, samples=samples, second_class=R0, observe=(), prune=True,
        )
        if not r.audit.tripped:
            break
    return {
        "R": r.R, "dwell": r.dwell, "dwell_s": r.dwell_weighted,
        "retries": attempt, "ok": not r.audit.tripped, "events": r.events,
    }


def current_replica(seed, kernel, rho, t, samples, cut=0, pad=0):
    """One equilibrium run tallying the ``cut | cut+1`` flux and two integrals.

    ``N``: net crossings; ``comp``: ``int p(1) eta_cut (1 - eta_{cut+1})``;
    ``A``: ``int (eta_0 - rho)`` at the samples.
    """
    samples = np.asarray(samples, dtype=np.float64)
    clock = ClockRealization(seed, t)
    p1 = kernel(1)
    funcs = (current_function(cut).scale(p1), centered_occupation(rho, 0))
    obs = (min(cut, 0) - kernel.range + 1, max(cut + 1, 0) + kernel.range - 1)
    for attempt in range(MAX_RETRIES + 1):
        lo, hi = window_for(kernel, rho, t, 0, 0.0, 2.0**attempt, kpz=False)
        lo, hi = lo + obs[0] - pad, hi + obs[1] + pad
        cfg = sample_equilibrium(rho, (lo, hi), seed)
        r = run(
            cfg, kernel, clock, t, samples=samples, cut=cut, functions=funcs, observe=obs,
            prune=True,
        )
        if not r.audit.tripped:
            break
    return {
        "N": r.crossings, "comp": r.integrals[0], "A": r.integrals[1],
        "retries": attempt, "ok": not r.audit.tripped, "events": r.events,
    }


def _call(args):
    fn, seed, kw = args
    return fn(seed, **kw)


def run_replicas(fn, master, n, workers=1, first=0, **kw):
    """Replicas ``first .. first + n - 1`` of ``fn``; results in index order.

    Seeds come from ``derive_seed(master, index)``, so the outcome does not
    depend on ``workers`` or on completion order.
    """
    jobs = [(fn, derive_seed(master, i), kw) for i in range(first, first + n)]
    if workers <= 1:
        return [_call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_call, jobs, chunksize=max(1, n // (8 * workers))))


def stack(results, key):
    return np.array([r[key] for r in results])


def audit_failures(results):
    return sum(1 for r in results if not r["ok"])


def coupling_replica(seed, t, halfwidth=50, samples=10, rho=0.25):
    """Pathwise check of the variational coupling on one TASEP realization.

    Started from ``P_rho(. | eta_0 = 0)`` with ``R(0) = 0``.  The exclusion
    height ``z_i(t) = z_i^{eta(t)} - N_{0,1}(t)`` (re-anchored snapshot minus
    the bond current) is compared with the envelope
    ``max_k W^k_i`` and with the label dynamics ``z``; the coupled discrepancy
    with the variational ``R(t)``.  All comparisons are exact integer equality.
    Heights are compared on ``-halfwidth .. max(halfwidth, t + 10)``.
    """
    from .variational import CertificateError, height_from_occupancy, height_margin, run_variational
    from .core import Occupancy

    kernel = JumpKernel.tasep()
    times = np.linspace(t / samples, t, samples)
    # R(t) is dominated by a rate-one Poisson count, so the right edge leaves room for it
    hi = max(halfwidth, int(math.ceil(t)) + 10)
    m = height_margin(t) + 60
    cfg = sample_equilibrium(rho, (-halfwidth - m, hi + m), seed, "origin-empty")
    clock = ClockRealization(seed, t)
    vr = run_variational(cfg, clock, t, times, observe=(-halfwidth, hi))
    r = run(
        cfg, kernel, clock, t, samples=times, observe=(-halfwidth - 1, hi),
        snapshots=True, second_class=0,
    )
    envelope_ok = dynamics_ok = R_ok = certified = True
    for s in range(samples):
        z = height_from_occupancy(Occupancy(cfg.lo, r.snapshots[s]))
        zdyn = z.values[-halfwidth - z.lo: hi + 1 - z.lo] - int(r.crossings[s])
        try:
            env = vr.envelope(s)
            Rv = vr.second_class(0, s)
        except CertificateError:
            certified = False
            continue
        envelope_ok &= bool(np.array_equal(env, zdyn))
        dynamics_ok &= bool(np.array_equal(vr.z[s], zdyn))
        R_ok &= Rv == int(r.R[s])
    violations = int(vr.audit.tripped) + int(r.audit.tripped)
    return {
        "envelope": envelope_ok, "dynamics": dynamics_ok, "R": R_ok,
        "certified": certified, "violations": violations, "ok": violations == 0,
        "events": r.events + vr.events,
    }


def conjugacy_replica(seed, size=30):
    """Three-step and up-right tables under shared weights, on a random domain.

    The domain ``(imax, jmax)`` is drawn from the seed with ``1 <= jmax <= size``
    and ``0 <= imax <= size - jmax``.  Returns ``True`` when ``L_{i,j}`` equals
    ``T_{Psi(i,j)}`` on every cell, and the vertical step changes nothing.
    """
    from .lpp import WeightGrid, lpp_three_step, lpp_upright, psi

    u = np.random.default_rng(np.random.Philox(key=seed)).random(2)
    jmax = 1 + int(u[0] * size)
    imax = int(u[1] * (size - jmax + 1))
    up = WeightGrid.exponential_upright(seed, imax + jmax, jmax)
    three = WeightGrid.from_upright(up, jmax)
    L = lpp_three_step(three)
    Lnv = lpp_three_step(three, allow_vertical=False)
    T = lpp_upright(up)
    ok = True
    for c in three.cells():
        ok &= L[c] == T[psi(*c)] and L[c] == Lnv[c]
    return bool(ok)


def small_domains(max_cells=12):
    """Every three-step ``(imax, jmax)`` and up-right ``(k, l)`` domain within ``max_cells``."""
    three = [(i, j) for j in range(1, max_cells + 1) for i in range(0, max_cells + 1) if j * (i + j) <= max_cells]
    up = [(k, l) for k in range(1, max_cells + 1) for l in range(1, max_cells + 1) if k * l <= max_cells]
    return three, up


def brute_force_replica(seed, max_cells=12):
    """DP against exhaustive path enumeration on every domain of at most
    ``max_cells`` cells, all sharing the exponential weights of ``seed``."""
    from .lpp import (
        WeightGrid, brute_force_three_step, brute_force_upright, lpp_three_step, lpp_upright,
    )

    three, up = small_domains(max_cells)
    ok = True
    for imax, jmax in three:
        w = WeightGrid.exponential_three_step(seed, imax, jmax)
        L = lpp_three_step(w)
        for c in w.cells():
            ok &= L[c] == brute_force_three_step(w, *c)
    for k, l in up:
        w = WeightGrid.exponential_upright(seed, k, l)
        T = lpp_upright(w)
        for c in w.cells():
            ok &= T[c] == brute_force_upright(w, *c)
    return bool(ok)
