"""Height profiles, growth interfaces and the variational coupling (TASEP only).

The clock ``D_i`` of site ``i`` is the TASEP stream ``(i, +1)`` of a
:class:`ClockRealization`, so every process here shares its epochs with the
exclusion process driven by the same clock.

Labels are handled in absolute coordinates: ``Xi^k_i = xi^k_{i-k}`` is driven
by ``D_i`` for every ``k``, and ``W^k_i = z_k(0) - Xi^k_i`` obeys the same max
rule as ``z``.  One event loop therefore advances ``z`` and all ``W^k`` at once,
the label index being the fast axis of a ``(site, profile)`` array.

Boundary handling is the plain chain-of-epochs audit: sites outside the window
are frozen, and a window site becomes suspect as soon as an epoch fires next to
a suspect site.  Observations at sites that never became suspect are exact.
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .clock import HorizonError, StreamBank, next_slab
from .core import Audit, Occupancy, WindowError

_TASEP_DISPS = np.array([1], np.int64)
_TASEP_RATES = np.array([1.0])


class CertificateError(RuntimeError):
    """The label window does not certify the requested sites."""


@dataclass
class HeightProfile:
    """Integer heights ``z_i`` on ``lo .. lo + len(values) - 1``.

    ``anchor`` records the normalization, ``"z0=0"`` for profiles built from an
    occupancy.
    """

    lo: int
    values: np.ndarray
    anchor: str = "z0=0"
    audit: Audit = None

    def __post_init__(self):
        self.lo = int(self.lo)
        self.values = np.ascontiguousarray(self.values, dtype=np.int64)
        if self.values.ndim != 1 or len(self.values) == 0:
            raise WindowError("height profile needs a nonempty window")

    @property
    def hi(self):
        return self.lo + len(self.values) - 1

    @property
    def window(self):
        return (self.lo, self.hi)

    def __getitem__(self, i):
        if not self.lo <= i <= self.hi:
            raise IndexError(f"site {i} outside window {self.window}")
        return int(self.values[i - self.lo])

    def increments(self):
        return np.diff(self.values)

    def check(self):
        d = self.increments()
        bad = np.flatnonzero((d < 0) | (d > 1))
        if len(bad):
            i = self.lo + int(bad[0]) + 1
            raise ValueError(f"increment z_{i} - z_{i - 1} = {int(d[bad[0]])} not in {{0, 1}}")
        return self

    def copy(self):
        return HeightProfile(self.lo, self.values.copy(), self.anchor)


@dataclass
class Interface:
    """Interface heights ``xi_j`` on ``lo .. hi`` for source label ``label``.

    ``xi^k_j`` is driven by the clock of site ``j + k``.
    """

    lo: int
    heights: np.ndarray
    label: int = 0
    time: float = 0.0
    audit: Audit = None

    def __post_init__(self):
        self.lo = int(self.lo)
        self.label = int(self.label)
        self.heights = np.ascontiguousarray(self.heights, dtype=np.int64)

    @classmethod
    def initial(cls, label, lo, hi):
        """``xi_j = 0`` for ``j >= 0`` and ``-j`` for ``j < 0``."""
        j = np.arange(lo, hi + 1)
        return cls(lo, np.maximum(-j, 0), label)

    @property
    def hi(self):
        return self.lo + len(self.heights) - 1

    @property
    def window(self):
        return (self.lo, self.hi)

    def __getitem__(self, j):
        if not self.lo <= j <= self.hi:
            raise IndexError(f"index {j} outside interface window {self.window}")
        return int(self.heights[j - self.lo])

    def check(self):
        x = self.heights
        if np.any(x[1:] > x[:-1]) or np.any(x[:-1] > x[1:] + 1):
            raise ValueError("interface violates xi_j <= xi_{j-1} and xi_j <= xi_{j+1} + 1")
        return self


def height_from_occupancy(config):
    """``z_0 = 0`` and ``eta_i = z_i - z_{i-1}``.

    The profile covers ``lo - 1 .. hi`` so the occupancy is recovered exactly.
    """
    lo, hi = config.window
    if not lo <= 0 <= hi:
        raise WindowError("window must contain the origin")
    c = np.concatenate([[0], np.cumsum(config.bits, dtype=np.int64)])
    # c[m] = sum of eta over lo .. lo + m - 1; shift so that z_0 = c[-lo + 1] - offset = 0
    return HeightProfile(lo - 1, c - c[-lo + 1])


def occupancy_from_height(z, policy="frozen"):
    z.check()
    if len(z.values) < 2:
        raise WindowError("need at least two heights")
    return Occupancy(z.lo + 1, np.diff(z.values).astype(np.int8), policy)


@njit(cache=True)
def _height_loop(
    H, dirty, obs_lo, obs_hi, slab, t_end, samples, snaps, s_lo, hit, hit_on, debug,
    seed, keys, ctr, buf, pos, rates, nxt, raw_t, raw_s, out_t, out_s, counts,
):
    # rows of H are clock sites; streams cover rows 1 .. n-2
    n = H.shape[0]
    P = H.shape[1]
    ns = samples.shape[0]
    nr = snaps.shape[1]
    viol = np.inf
    si = 0
    nev = 0
    t0 = 0.0
    while True:
        t1 = min(t0 + slab, t_end)
        ne, raw_t, raw_s, out_t, out_s = next_slab(
            seed, keys, ctr, buf, pos, rates, nxt, t0, t1, raw_t, raw_s, out_t, out_s, counts
        )
        for e in range(ne):
            te = out_t[e]
            while si < ns and samples[si] < te:
                for r in range(nr):
                    for p in range(P):
                        snaps[si, r, p] = H[s_lo + r, p]
                si += 1
            r = out_s[e] + 1
            nev += 1
            if dirty[r] == 0 and (dirty[r - 1] != 0 or dirty[r + 1] != 0):
                dirty[r] = 1
                if obs_lo <= r <= obs_hi and te < viol:
                    viol = te
            h0 = H[r, 0]
            for p in range(P):
                a = H[r, p] - 1
                b = H[r - 1, p]
                c = H[r + 1, p] - 1
                if b > a:
                    a = b
                if c > a:
                    a = c
                H[r, p] = a
            if hit_on and H[r, 0] != h0:
                lev = -H[r, 0]
                if 0 <= lev < hit.shape[1]:
                    hit[r, lev] = te
            if debug:
                for p in range(P):
                    d0 = H[r, p] - H[r - 1, p]
                    d1 = H[r + 1, p] - H[r, p]
                    if d0 < 0 or d0 > 1 or d1 < 0 or d1 > 1:
                        raise RuntimeError("height increment left {0, 1}")
        t0 = t1
        if t1 >= t_end:
            break
    while si < ns:
        for r in range(nr):
            for p in range(P):
                snaps[si, r, p] = H[s_lo + r, p]
        si += 1
    return viol, nev


def height_margin(t):
    """Window padding for the plain audit: suspect fronts move at speed one."""
    return int(math.ceil(t + 5.0 * math.sqrt(t) + 10))


def _run_heights(H, lo, clock, t, samples, observe, snap_rows=None, hit_levels=0, debug=False):
    """Evolve the columns of ``H`` (rows = sites ``lo..``) by the max rule.

    Returns ``(snapshots, audit, hit, events)``; snapshots cover ``snap_rows``
    (default: the observation range) at each sample time.
    """
    clock.check(t)
    H = np.ascontiguousarray(H, dtype=np.int64)
    n = H.shape[0]
    if n < 3:
        raise WindowError("height window needs at least three sites")
    hi = lo + n - 1
    obs_lo, obs_hi = observe
    if not lo < obs_lo <= obs_hi < hi:
        raise WindowError(f"observation {observe} must lie strictly inside {(lo, hi)}")
    samples = np.sort(np.asarray([t] if samples is None else samples, dtype=np.float64))
    if len(samples) and (samples[0] < 0 or samples[-1] > t):
        raise HorizonError("sample times must lie in [0, t]")
    s_lo, s_hi = (obs_lo, obs_hi) if snap_rows is None else snap_rows
    snaps = np.zeros((len(samples), s_hi - s_lo + 1, H.shape[1]), np.int64)
    dirty = np.zeros(n, np.uint8)
    dirty[0] = dirty[-1] = 1
    hit = np.full((n, hit_levels), np.nan)
    bank = StreamBank(clock.seed, lo + 1, hi - 1, _TASEP_DISPS, _TASEP_RATES)
    viol, nev = _height_loop(
        H, dirty, obs_lo - lo, obs_hi - lo, bank.slab, float(t), samples, snaps, s_lo - lo,
        hit, hit_levels > 0, bool(debug), *bank.state(),
    )
    audit = Audit((int(obs_lo), int(obs_hi)), float(viol), int(dirty.sum()))
    return H, snaps, audit, hit, int(nev), samples


def evolve_height(z, clock, offset=0, t=0.0, observe=None, debug=False):
    """``z`` at time ``t``: at epochs of ``D_{i+offset}``,
    ``z_i <- max(z_i - 1, z_{i-1}, z_{i+1} - 1)``.

    The end sites are frozen; ``observe`` (default: all interior sites) is
    audited and the result carries the audit.
    """
    z.check()
    lo = z.lo + offset
    obs = (z.lo + 1, z.hi - 1) if observe is None else observe
    H, _, audit, _, _, _ = _run_heights(
        z.values[:, None].copy(), lo, clock, t, [t], (obs[0] + offset, obs[1] + offset),
        debug=debug,
    )
    return HeightProfile(z.lo, H[:, 0], z.anchor, audit)


def evolve_interface(xi, clock, t, observe=None, debug=False):
    """``xi_j <- min(xi_j + 1, xi_{j-1}, xi_{j+1} + 1)`` at epochs of ``D_{j+k}``."""
    xi.check()
    z = HeightProfile(xi.lo, -xi.heights, "interface")
    out = evolve_height(z, clock, xi.label, t, observe=observe, debug=debug)
    return Interface(xi.lo, -out.values, xi.label, float(t), out.audit)


@dataclass
class VariationalRun:
    """``z`` and all ``W^k`` for ``k`` in ``labels`` at the sample times.

    ``z[s, i - obs_lo]`` and ``W[s, i - obs_lo, k - labels[0]]`` hold the
    observed sites.
    """

    z0: HeightProfile
    labels: np.ndarray
    samples: np.ndarray
    observe: tuple
    z: np.ndarray
    W: np.ndarray
    audit: Audit
    events: int = 0

    def _s(self, sample):
        return int(sample)

    def xi(self, k, j, sample=-1):
        """``xi^k_j`` at a sample index."""
        i = j + k
        return int(self.z0[k] - self.W[sample, i - self.observe[0], k - self.labels[0]])

    def interface_row(self, sample=-1):
        """``Xi^k_i = z_k(0) - W^k_i`` for observed ``i`` (rows) and labels (cols)."""
        zk = self.z0.values[self.labels - self.z0.lo]
        return zk[None, :] - self.W[sample]

    def certified(self, sample=-1, sites=None):
        """Label-window certificate for the observed sites.

        ``Xi^{ka}_i = 0`` at the leftmost site and ``Xi^{kb}_i = kb - i`` at the
        rightmost one; both propagate to every site in between.
        """
        lo_i, hi_i = self.observe if sites is None else sites
        ka, kb = int(self.labels[0]), int(self.labels[-1])
        X = self.interface_row(sample)
        o = self.observe[0]
        return bool(X[lo_i - o, 0] == 0 and X[hi_i - o, -1] == kb - hi_i)

    def envelope(self, sample=-1):
        """``max_k W^k_i`` for every observed ``i``; requires a certificate."""
        if not self.certified(sample):
            raise CertificateError("label window not certified at this sample")
        return self.W[sample].max(axis=1)

    def second_class(self, R0, sample=-1):
        """``inf{i : z_i = W^k_i for some k >= R0}`` over the observed sites."""
        if not self.certified(sample):
            raise CertificateError("label window not certified at this sample")
        return _attaining(self.z[sample], self.W[sample], self.labels, R0, self.observe[0])


def _attaining(z, W, labels, R0, o):
    use = labels >= R0
    if not use.any():
        raise CertificateError("no certified label k >= R(0)")
    hit = np.flatnonzero((W[:, use] == z[:, None]).any(axis=1))
    if len(hit) == 0:
        raise CertificateError("no attaining site in the observed range")
    if hit[0] == 0:
        # a smaller attaining site could lie outside the observed range
        raise CertificateError("attaining site at the edge of the observed range")
    return o + int(hit[0])


def run_variational(config, clock, t, samples=None, observe=(-50, 50), margin=None, labels=None, debug=False):
    """Run ``z`` (from ``config``) and the label family on shared clocks.

    ``config`` must cover ``observe`` padded by ``margin`` on both sides; the
    default margin also bounds how far a label influences the observed sites.
    """
    z0 = height_from_occupancy(config)
    m = height_margin(t) if margin is None else int(margin)
    obs_lo, obs_hi = observe
    lo, hi = obs_lo - m, obs_hi + m
    if lo < z0.lo or hi > z0.hi:
        raise WindowError(f"configuration must cover sites {lo}..{hi}")
    if labels is None:
        labels = np.arange(lo + 1, hi)
    labels = np.asarray(labels, dtype=np.int64)
    if np.any(np.diff(labels) != 1):
        raise ValueError("labels must be consecutive")
    sites = np.arange(lo, hi + 1)
    zseg = z0.values[lo - z0.lo: hi - z0.lo + 1]
    zk = z0.values[labels - z0.lo]
    H = np.empty((len(sites), len(labels) + 1), np.int64)
    H[:, 0] = zseg
    # W^k_i(0) = z_k(0) - max(k - i, 0)
    H[:, 1:] = zk[None, :] - np.maximum(labels[None, :] - sites[:, None], 0)
    _, snaps, audit, _, nev, samples = _run_heights(
        H, lo, clock, t, samples, observe, debug=debug
    )
    return VariationalRun(
        HeightProfile(z0.lo, z0.values), labels, samples, (obs_lo, obs_hi),
        snaps[:, :, 0].copy(), snaps[:, :, 1:].copy(), audit, nev,
    )


def _interface_arrays(z0, interfaces, i):
    ks = np.array([xi.label for xi in interfaces], dtype=np.int64)
    order = np.argsort(ks)
    ks = ks[order]
    if len(ks) == 0:
        raise CertificateError("empty label window")
    if np.any(np.diff(ks) != 1):
        raise CertificateError("labels must be consecutive")
    vals = np.array([interfaces[o][i - ks[a]] for a, o in enumerate(order)], dtype=np.int64)
    return ks, vals


def finite_k_labels(interfaces, i):
    """Certificate for site ``i``: ``xi^{ka}_{i-ka} = 0`` and ``xi^{kb}_{i-kb} = kb - i``."""
    by = {xi.label: xi for xi in interfaces}
    if not by:
        return False
    ka, kb = min(by), max(by)
    return by[ka][i - ka] == 0 and by[kb][i - kb] == kb - i


def finite_k_window(interfaces, t, x, a, b):
    """Certificate for labels ``[ta, tb]`` at site ``[tx]`` (integer parts).

    ``interfaces`` must contain the labels ``floor(t a)`` and ``floor(t b)``
    evolved to time ``t``.
    """
    if not a < x - 1 < x + 1 < b:
        raise ValueError("need a < x - 1 < x + 1 < b")
    ka, kb, i = math.floor(t * a), math.floor(t * b), math.floor(t * x)
    by = {xi.label: xi for xi in interfaces}
    for k in (ka, kb):
        if k not in by:
            raise KeyError(f"label {k} not evolved")
        if by[k].time != t:
            raise ValueError(f"label {k} evolved to {by[k].time}, not {t}")
    return by[ka][i - ka] == 0 and by[kb][i - kb] == kb - i


def envelope(z0, interfaces, i, t=None):
    """``max_k (z_k(0) - xi^k_{i-k}(t))`` over a certified consecutive label set."""
    if t is not None and any(xi.time != t for xi in interfaces):
        raise ValueError("interfaces are not all at time t")
    if not finite_k_labels(interfaces, i):
        raise CertificateError(f"label window not certified at site {i}")
    ks, vals = _interface_arrays(z0, interfaces, i)
    return int(np.max(z0.values[ks - z0.lo] - vals))


def second_class_variational(z0, z_t, interfaces, R0, sites):
    """``inf{i : z_i(t) = z_k(0) - xi^k_{i-k}(t), k >= R0}`` over ``sites``.

    ``z_t`` is the evolved height profile; every site must be certified.
    """
    sites = list(sites)
    W = np.empty((len(sites), len(interfaces)), np.int64)
    for a, i in enumerate(sites):
        if not finite_k_labels(interfaces, i):
            raise CertificateError(f"label window not certified at site {i}")
        ks, vals = _interface_arrays(z0, interfaces, i)
        W[a] = z0.values[ks - z0.lo] - vals
    z = np.array([z_t[i] for i in sites], dtype=np.int64)
    return _attaining(z, W, ks, R0, sites[0])


def profile_to_csv(profile, path):
    """``site,value`` rows for a height profile or interface."""
    vals = profile.values if isinstance(profile, HeightProfile) else profile.heights
    with open(path, "w") as fh:
        fh.write("site,value\n")
        for a, v in enumerate(vals):
            fh.write(f"{profile.lo + a},{int(v)}\n")


def profile_from_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    if np.any(np.diff(data[:, 0]) != 1):
        raise ValueError("profile sites must be consecutive")
    return HeightProfile(int(data[0, 0]), data[:, 1])
