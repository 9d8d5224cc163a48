"""Exclusion dynamics on a finite window driven by explicit Poisson clocks.

Boundary handling (``frozen`` policy): sites outside the window never change
and no clock outside the window is simulated.  An audit tracks the set of
window sites whose simulated value might differ from the infinite-lattice
process with the same clocks; a site joins that set when an event touches it
whose outcome depends on an unknown bit.  Observations on sites that never
joined the set are exact.  ``periodic`` wraps the window into a ring and has no
audit.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .clock import ClockRealization, HorizonError, next_slab
from .kernel import JumpKernel
from .rng import BITS, site_uniforms

FROZEN = "frozen"
PERIODIC = "periodic"
POLICIES = (FROZEN, PERIODIC)

NO_SITE = -(1 << 62)


class WindowError(ValueError):
    pass


@dataclass
class Audit:
    """Outcome of the light-cone audit for one run."""

    observe: tuple
    first_violation: float = math.inf
    dirty_sites: int = 0

    @property
    def tripped(self):
        return self.first_violation < math.inf

    def valid_until(self, t):
        return t < self.first_violation


@dataclass
class Occupancy:
    """A {0,1} configuration on the sites ``lo .. lo + len(bits) - 1``."""

    lo: int
    bits: np.ndarray
    policy: str = FROZEN
    audit: Audit = None

    def __post_init__(self):
        self.lo = int(self.lo)
        self.bits = np.ascontiguousarray(self.bits, dtype=np.int8)
        if self.bits.ndim != 1 or len(self.bits) == 0:
            raise WindowError("window must be a nonempty interval")
        if not np.all((self.bits == 0) | (self.bits == 1)):
            raise ValueError("occupation values must be 0 or 1")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown boundary policy {self.policy!r}")

    @classmethod
    def from_sites(cls, lo, hi, occupied=(), policy=FROZEN):
        bits = np.zeros(hi - lo + 1, np.int8)
        for s in occupied:
            bits[s - lo] = 1
        return cls(lo, bits, policy)

    @property
    def hi(self):
        return self.lo + len(self.bits) - 1

    @property
    def window(self):
        return (self.lo, self.hi)

    def __getitem__(self, site):
        if not self.lo <= site <= self.hi:
            raise IndexError(f"site {site} outside window {self.window}")
        return int(self.bits[site - self.lo])

    def __eq__(self, other):
        return (
            isinstance(other, Occupancy)
            and self.lo == other.lo
            and np.array_equal(self.bits, other.bits)
        )

    def count(self):
        return int(self.bits.sum(dtype=np.int64))

    def occupied(self):
        return self.lo + np.flatnonzero(self.bits)

    def copy(self):
        return Occupancy(self.lo, self.bits.copy(), self.policy)

    def sites(self):
        return np.arange(self.lo, self.hi + 1)


def _window(window):
    if isinstance(window, (int, np.integer)):
        if window < 0:
            raise WindowError("window half-width must be non-negative")
        return -int(window), int(window)
    lo, hi = (int(w) for w in window)
    if hi < lo:
        raise WindowError("window must be nonempty")
    return lo, hi


def sample_equilibrium(rho, window, seed, conditioning=None, policy=FROZEN):
    """Bernoulli(rho) product configuration on ``window``.

    ``window`` is a half-width ``M`` (sites ``-M..M``) or a pair ``(lo, hi)``.
    Each bit depends only on ``(seed, site)``, so enlarging the window keeps
    the bits already sampled.  ``conditioning`` forces the origin:
    ``"origin-empty"`` or ``"origin-occupied"``.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho = {rho} outside [0, 1]")
    lo, hi = _window(window)
    bits = (site_uniforms(seed, lo, hi, BITS) < rho).astype(np.int8)
    if conditioning not in (None, "none", "origin-empty", "origin-occupied"):
        raise ValueError(f"unknown conditioning {conditioning!r}")
    if conditioning in ("origin-empty", "origin-occupied"):
        if not lo <= 0 <= hi:
            raise WindowError("conditioning on the origin needs 0 in the window")
        bits[-lo] = 1 if conditioning == "origin-occupied" else 0
    return Occupancy(lo, bits, policy)


def default_margin(kernel, t, observe_halfwidth=0):
    """Window half-width with the default safety margin for horizon ``t``."""
    spread = 2.0 * kernel.total_rate
    return int(observe_halfwidth + math.ceil(4 * t * spread + 10 * math.sqrt(t) + 16 * kernel.range))


@njit(cache=True)
def _pattern(bits, lo, sites, size):
    p = 0
    for b in range(size):
        p |= np.int64(bits[sites[b] - lo]) << b
    return p


@njit(cache=True)
def _loop(
    bits, lo, periodic, disps, slab, t_end, samples, dirty, obs_lo, obs_hi, cut,
    f_sites, f_size, f_tab, coupled, r0, snap, log_on, debug, prune, rng,
    seed, keys, ctr, buf, pos, rates, nxt, raw_t, raw_s, out_t, out_s, counts,
):
    n = bits.shape[0]
    m = disps.shape[0]
    ns = samples.shape[0]
    nf = f_size.shape[0]
    viol = np.inf
    cross = np.int64(0)
    cross_s = np.zeros(ns, np.int64)
    integ = np.zeros(nf)
    cur = np.zeros(nf)
    integ_s = np.zeros((nf, ns))
    for f in range(nf):
        cur[f] = f_tab[f, _pattern(bits, lo, f_sites[f], f_size[f])]
    tl = 0.0
    R = r0
    tR = 0.0
    dw = 0.0
    dws = 0.0
    R_s = np.zeros(ns, np.int64)
    dw_s = np.zeros(ns)
    dws_s = np.zeros(ns)
    snaps = np.zeros((ns if snap else 0, n), np.int8)
    log_t = []
    log_i = []
    log_k = []
    log_a = []
    total = 0
    if debug:
        for x in range(n):
            total += bits[x]
    nev = 0
    si = 0
    t0 = 0.0
    pfx = 0
    sfx = n
    while True:
        t1 = min(t0 + slab, t_end)
        s_lo = 0
        s_hi = n * m
        if prune:
            # a stream whose bond lies inside a suspect end region cannot
            # change any trusted site, so it is no longer generated
            while pfx < n and dirty[pfx] != 0:
                pfx += 1
            while sfx > 0 and dirty[sfx - 1] != 0:
                sfx -= 1
            s_lo = max(pfx - rng, 0) * m
            s_hi = min(sfx + rng, n) * m
            if s_hi < s_lo:
                s_hi = s_lo
        ne, raw_t, raw_s, out_t, out_s = next_slab(
            seed, keys, ctr, buf, pos, rates, nxt, t0, t1, raw_t, raw_s, out_t, out_s, counts,
            s_lo, s_hi,
        )
        for e in range(ne):
            te = out_t[e]
            while si < ns and samples[si] < te:
                ts = samples[si]
                cross_s[si] = cross
                for f in range(nf):
                    integ_s[f, si] = integ[f] + cur[f] * (ts - tl)
                R_s[si] = R
                if R == 0:
                    dw_s[si] = dw + (ts - tR)
                    dws_s[si] = dws + 0.5 * (ts * ts - tR * tR)
                else:
                    dw_s[si] = dw
                    dws_s[si] = dws
                if snap:
                    snaps[si, :] = bits
                si += 1
            s = out_s[e]
            x = s // m
            k = disps[s - x * m]
            y = x + k
            in_y = True
            if periodic:
                y = y % n
            elif y < 0 or y >= n:
                in_y = False
            nev += 1
            # certainty of the outcome given the audit state
            cx = dirty[x] == 0
            cy = in_y and dirty[y] == 0
            if periodic or (cx and cy):
                certain = True
            elif cx and bits[x] == 0 and not (coupled and x + lo == R):
                certain = True
            elif cy and bits[y] == 1:
                certain = True
            else:
                certain = False
            if not certain:
                if coupled and (x + lo == R or (in_y and y + lo == R)):
                    if te < viol:
                        viol = te
                if dirty[x] == 0:
                    dirty[x] = 1
                    if obs_lo <= x + lo <= obs_hi and te < viol:
                        viol = te
                if in_y and dirty[y] == 0:
                    dirty[y] = 1
                    if obs_lo <= y + lo <= obs_hi and te < viol:
                        viol = te
            accepted = False
            moved = False
            if in_y:
                if coupled and x + lo == R:
                    if bits[y] == 0:
                        if R == 0:
                            dw += te - tR
                            dws += 0.5 * (te * te - tR * tR)
                        tR = te
                        R = y + lo
                        accepted = True
                elif coupled and y + lo == R:
                    if bits[x] == 1:
                        bits[x] = 0
                        bits[y] = 1
                        moved = True
                        if R == 0:
                            dw += te - tR
                            dws += 0.5 * (te * te - tR * tR)
                        tR = te
                        R = x + lo
                        accepted = True
                elif bits[x] == 1 and bits[y] == 0:
                    bits[x] = 0
                    bits[y] = 1
                    accepted = True
                    moved = True
            if moved:
                gx = x + lo
                gy = y + lo
                if periodic:
                    gy = x + k + lo
                if gx <= cut < gy:
                    cross += 1
                elif gy <= cut < gx:
                    cross -= 1
                if nf > 0:
                    for f in range(nf):
                        integ[f] += cur[f] * (te - tl)
                        cur[f] = f_tab[f, _pattern(bits, lo, f_sites[f], f_size[f])]
                    tl = te
            if log_on:
                log_t.append(te)
                log_i.append(x + lo)
                log_k.append(k)
                log_a.append(accepted)
            if debug:
                c = 0
                for z in range(n):
                    if bits[z] != 0 and bits[z] != 1:
                        raise RuntimeError("occupation value left {0,1}")
                    c += bits[z]
                if c != total:
                    raise RuntimeError("particle number changed")
        t0 = t1
        if t1 >= t_end:
            break
    while si < ns:
        ts = samples[si]
        cross_s[si] = cross
        for f in range(nf):
            integ_s[f, si] = integ[f] + cur[f] * (ts - tl)
        R_s[si] = R
        if R == 0:
            dw_s[si] = dw + (ts - tR)
            dws_s[si] = dws + 0.5 * (ts * ts - tR * tR)
        else:
            dw_s[si] = dw
            dws_s[si] = dws
        if snap:
            snaps[si, :] = bits
        si += 1
    lt = np.empty(len(log_t))
    li = np.empty(len(log_t), np.int64)
    lk = np.empty(len(log_t), np.int64)
    la = np.empty(len(log_t), np.bool_)
    for e in range(len(log_t)):
        lt[e] = log_t[e]
        li[e] = log_i[e]
        lk[e] = log_k[e]
        la[e] = log_a[e]
    return viol, R, cross_s, integ_s, R_s, dw_s, dws_s, snaps, lt, li, lk, la, nev


@dataclass
class EventLog:
    """Every clock event of a run, accepted or not."""

    time: np.ndarray
    site: np.ndarray
    displacement: np.ndarray
    accepted: np.ndarray

    def __len__(self):
        return len(self.time)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("time,site,displacement,accepted\n")
            for t, i, k, a in zip(self.time, self.site, self.displacement, self.accepted):
                fh.write(f"{float(t)!r},{int(i)},{int(k)},{int(bool(a))}\n")

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(
            data[:, 0].copy(),
            data[:, 1].astype(np.int64),
            data[:, 2].astype(np.int64),
            data[:, 3].astype(bool),
        )


@dataclass
class Run:
    """Raw output of one event loop; the public operations wrap it."""

    final: Occupancy
    audit: Audit
    samples: np.ndarray
    crossings: np.ndarray
    integrals: np.ndarray
    R: np.ndarray
    dwell: np.ndarray
    dwell_weighted: np.ndarray
    snapshots: np.ndarray
    log: EventLog = None
    events: int = 0
    R_final: int = NO_SITE
    suspect: np.ndarray = None


def _pack_functions(functions, lo, hi):
    nf = len(functions)
    smax = max([len(f.support) for f in functions] + [1])
    sites = np.zeros((nf, smax), np.int64)
    size = np.zeros(nf, np.int64)
    tab = np.zeros((nf, 1 << smax))
    for a, f in enumerate(functions):
        for b, s in enumerate(f.support):
            if not lo <= s <= hi:
                raise WindowError(f"function support site {s} outside window")
            sites[a, b] = s
        size[a] = len(f.support)
        tab[a, : len(f.table)] = f.table
    return sites, size, tab


def run(
    config, kernel, clock, t, samples=None, observe=None, cut=0, functions=(),
    second_class=None, snapshots=False, log=False, debug=False, prune=False,
):
    """Evolve ``config`` to time ``t`` and collect the requested tallies.

    ``observe`` is the inclusive site range the audit protects; by default it
    covers the current cut and the supports of ``functions``.  In coupled runs
    the second-class particle is always protected, so ``observe=()`` is the
    natural choice there.
    ``second_class`` is the initial discrepancy site ``R(0)``; the lower
    process must be empty there.

    With ``prune`` (ignored when logging, debugging or periodic) clocks of
    bonds inside the suspect end regions stop being generated; trusted sites
    are unaffected, suspect sites then hold unspecified values.
    """
    clock.check(t)
    periodic = config.policy == PERIODIC
    prune = bool(prune) and not (periodic or log or debug)
    lo, hi = config.window
    n = hi - lo + 1
    rng = kernel.range
    if periodic and n <= 2 * rng:
        raise WindowError("periodic window must exceed twice the kernel range")
    samples = np.sort(np.asarray([t] if samples is None else samples, dtype=np.float64))
    if len(samples) and (samples[0] < 0 or samples[-1] > t):
        raise HorizonError("sample times must lie in [0, t]")
    if observe is None:
        pts = [cut - rng + 1, cut + rng]
        for f in functions:
            pts.extend(f.support)
        observe = (min(pts), max(pts))
    # an empty range protects nothing beyond the second-class particle
    obs_lo, obs_hi = observe if len(observe) else (1, 0)
    dirty = np.zeros(n, np.uint8)
    if not periodic:
        dpos = max([k for k in kernel.displacements if k > 0] + [0])
        dneg = max([-k for k in kernel.displacements if k < 0] + [0])
        dirty[: min(dpos, n)] = 1
        if dneg:
            dirty[n - min(dneg, n):] = 1
        if n <= dpos + dneg:
            raise WindowError("window too small for kernel range")
        bad = np.flatnonzero(dirty) + lo
        if np.any((bad >= obs_lo) & (bad <= obs_hi)):
            raise WindowError("observation region touches the window boundary")
        if second_class is not None and dirty[second_class - lo]:
            raise WindowError("second-class particle starts at the window boundary")
    coupled = second_class is not None
    r0 = NO_SITE
    if coupled:
        r0 = int(second_class)
        if not lo <= r0 <= hi:
            raise WindowError("second-class particle outside window")
        if config[r0] != 0:
            raise ValueError("lower configuration must be empty at R(0)")
    f_sites, f_size, f_tab = _pack_functions(list(functions), lo, hi)
    bits = config.bits.copy()
    bank = clock.bank(lo, hi, kernel)
    (viol, R, cross_s, integ_s, R_s, dw_s, dws_s, snaps, lt, li, lk, la, nev) = _loop(
        bits, lo, periodic, kernel.displacements, bank.slab, float(t), samples, dirty,
        int(obs_lo), int(obs_hi), int(cut), f_sites, f_size, f_tab, coupled, r0,
        bool(snapshots), bool(log), bool(debug), bool(prune), int(rng), *bank.state(),
    )
    audit = Audit((int(obs_lo), int(obs_hi)), float(viol), int(dirty.sum()))
    if periodic:
        audit = Audit((int(obs_lo), int(obs_hi)))
    final = Occupancy(lo, bits, config.policy, audit)
    return Run(
        final, audit, samples, cross_s, integ_s, R_s, dw_s, dws_s, snaps,
        EventLog(lt, li, lk, la) if log else None, int(nev), int(R), dirty.astype(bool),
    )


def evolve(config, kernel, clock, t, log=False, observe=None, debug=False):
    """Configuration at time ``t``; with ``log=True`` also the event log.

    The returned occupancy carries the audit of ``observe`` (default: the
    sites around the origin).
    """
    r = run(config, kernel, clock, t, observe=observe, log=log, debug=debug)
    if log:
        return r.final, r.log
    return r.final


@dataclass
class CoupledState:
    """Two basic-coupled configurations that differ only at ``discrepancy``.

    ``lower`` is empty and ``upper`` occupied at the discrepancy; ``clock`` is
    shared by both marginals.
    """

    lower: Occupancy
    discrepancy: int
    clock: ClockRealization
    time: float = 0.0
    audit: Audit = None

    def __post_init__(self):
        if self.lower[self.discrepancy] != 0:
            raise ValueError("lower configuration must be empty at the discrepancy")

    @classmethod
    def from_lower(cls, lower, site, clock):
        return cls(lower, int(site), clock)

    @property
    def upper(self):
        up = self.lower.copy()
        up.bits[self.discrepancy - up.lo] = 1
        return up

    def disagreements(self):
        return int(np.sum(self.upper.bits != self.lower.bits))


def evolve_coupled(state, kernel, t, samples=None, log=False, debug=False):
    """Basic coupling of ``state`` run to time ``t`` on the shared clock.

    Returns the coupled state at ``t``.  With ``samples`` the discrepancy path
    at those times is available as ``state.path``.
    """
    if state.time != 0.0:
        raise ValueError("coupled evolution starts from time 0 of the shared clock")
    r = run(
        state.lower, kernel, state.clock, t, samples=samples,
        second_class=state.discrepancy, log=log, debug=debug,
        observe=(),
    )
    out = CoupledState(r.final, r.R_final, state.clock, float(t), r.audit)
    out.path = r.R
    out.log = r.log
    out.run = r
    return out


@dataclass
class CurrentTally:
    """Net particle flux across the cut between sites ``cut`` and ``cut + 1``."""

    crossings: int
    compensator: float
    cut: int = 0
    audit: Audit = None

    @property
    def martingale(self):
        return self.crossings - self.compensator


def current_compensator_function(kernel, cut=0):
    """Local function ``p(1) eta_cut (1 - eta_{cut+1})``."""
    from .stats.local import LocalFunction

    p1 = kernel(1)
    return LocalFunction((cut, cut + 1), lambda e: p1 * e[0] * (1 - e[1]))


def track_current(config, kernel, clock, t, cut=0, samples=None):
    """Crossings of the ``cut | cut+1`` edge and their compensator.

    For nearest-neighbour kernels the compensator makes ``crossings -
    compensator`` a martingale only when ``p(-1) = 0``; general kernels still
    get the net signed crossing count.
    """
    comp = current_compensator_function(kernel, cut)
    r = run(config, kernel, clock, t, samples=samples, cut=cut, functions=(comp,))
    if samples is None:
        return CurrentTally(int(r.crossings[-1]), float(r.integrals[0, -1]), cut, r.audit)
    return [
        CurrentTally(int(c), float(a), cut, r.audit)
        for c, a in zip(r.crossings, r.integrals[0])
    ]
