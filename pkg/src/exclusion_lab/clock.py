"""Poisson clock realizations shared between coupled processes.

A stream is addressed by ``(seed, site, displacement)``; its epochs are the
partial sums of ``Exp(1) / rate`` gaps drawn from a Philox counter stream, so
a stream can be regenerated anywhere without storing it and two processes that
look at the same site see exactly the same epochs.

Event loops consume the streams of a window in time slabs.  Each slab is
collected stream by stream (so stream order is ``(site, displacement)``
lexicographic) and then bucket-sorted by time with a stable sort; equal times
therefore resolve by ``(time, site, displacement)``.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from .rng import CLOCK, ZIG_F, ZIG_X, as_seed, philox4x64, stream_key, stream_key_py

_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0
_ONE = np.uint64(1)
_ZERO = np.uint64(0)
_M8 = np.uint64(255)
_ZX = ZIG_X
_ZF = ZIG_F


class HorizonError(ValueError):
    pass


@njit(cache=True)
def _open_unit(x):
    # (0, 1): keeps every gap strictly positive
    return (np.float64(x >> _S11) + 0.5) * _INV53


@njit(cache=True)
def _word(seed, keys, ctr, buf, pos, s):
    p = pos[s]
    if p == 4:
        r0, r1, r2, r3 = philox4x64(ctr[s], _ZERO, _ZERO, _ZERO, seed, keys[s])
        ctr[s] += _ONE
        buf[s, 0] = r0
        buf[s, 1] = r1
        buf[s, 2] = r2
        buf[s, 3] = r3
        p = 0
    pos[s] = p + 1
    return buf[s, p]


@njit(cache=True)
def _gap(seed, keys, ctr, buf, pos, rates, s):
    # exponential ziggurat on the stream's words; reference for next_slab
    while True:
        w = _word(seed, keys, ctr, buf, pos, s)
        i = np.int64(w & _M8)
        x = np.float64(w >> _S11) * _INV53 * _ZX[i]
        if x < _ZX[i + 1]:
            return x / rates[s]
        u1 = _open_unit(_word(seed, keys, ctr, buf, pos, s))
        u2 = _open_unit(_word(seed, keys, ctr, buf, pos, s))
        if i == 0:
            return (_ZX[1] - np.log1p(-u1)) / rates[s]
        if _ZF[i] + u2 * (_ZF[i + 1] - _ZF[i]) < np.exp(-x):
            return x / rates[s]


@njit(cache=True)
def _advance(seed, keys, ctr, buf, pos, rates, nxt, s):
    t = nxt[s]
    t_new = t + _gap(seed, keys, ctr, buf, pos, rates, s)
    if t_new <= t:
        t_new = np.nextafter(t, np.inf)
    nxt[s] = t_new


@njit(cache=True)
def _init_streams(seed, keys, ctr, buf, pos, rates, nxt):
    for s in range(keys.shape[0]):
        nxt[s] = 0.0
        _advance(seed, keys, ctr, buf, pos, rates, nxt, s)


@njit(cache=True)
def _bucket_sort(times, sids, n, t0, t1, out_t, out_s, counts):
    """Stable sort of ``times[:n]`` (all in ``(t0, t1]``) into out arrays."""
    nb = n
    if nb == 0:
        return
    if counts.shape[0] < nb + 1:
        counts = np.zeros(nb + 1, np.int64)
    else:
        counts[: nb + 1] = 0
    span = t1 - t0
    scale = nb / span if span > 0 else 0.0
    for e in range(n):
        b = int((times[e] - t0) * scale)
        if b >= nb:
            b = nb - 1
        elif b < 0:
            b = 0
        counts[b + 1] += 1
    for b in range(nb):
        counts[b + 1] += counts[b]
    for e in range(n):
        b = int((times[e] - t0) * scale)
        if b >= nb:
            b = nb - 1
        elif b < 0:
            b = 0
        k = counts[b]
        out_t[k] = times[e]
        out_s[k] = sids[e]
        counts[b] = k + 1
    # buckets are now contiguous; insertion sort fixes the residual disorder
    for e in range(1, n):
        tv = out_t[e]
        sv = out_s[e]
        k = e - 1
        while k >= 0 and (out_t[k] > tv or (out_t[k] == tv and out_s[k] > sv)):
            out_t[k + 1] = out_t[k]
            out_s[k + 1] = out_s[k]
            k -= 1
        out_t[k + 1] = tv
        out_s[k + 1] = sv


@njit(cache=True)
def _fill(seed, keys, ctr, buf, pos, rates, nxt, t1, raw_t, raw_s, s0, s_end, n):
    """Append epochs ``<= t1`` of streams ``s0..`` to ``raw_t``/``raw_s``.

    Only streams below ``s_end`` are visited.  Stops when the buffer is full
    and returns ``(n, s)``; stream ``s`` is then part-way through and resumes
    from its saved state.
    """
    cap = raw_t.shape[0]
    zx = _ZX
    zf = _ZF
    for s in range(s0, s_end):
        t = nxt[s]
        if t > t1:
            continue
        p = pos[s]
        rate = rates[s]
        key = keys[s]
        while t <= t1:
            if n == cap:
                nxt[s] = t
                pos[s] = p
                return n, s
            raw_t[n] = t
            raw_s[n] = s
            n += 1
            # inline copy of _gap: calls with array arguments are expensive here
            while True:
                if p == 4:
                    r0, r1, r2, r3 = philox4x64(ctr[s], _ZERO, _ZERO, _ZERO, seed, key)
                    ctr[s] += _ONE
                    buf[s, 0] = r0
                    buf[s, 1] = r1
                    buf[s, 2] = r2
                    buf[s, 3] = r3
                    p = 0
                w = buf[s, p]
                p += 1
                i = np.int64(w & _M8)
                x = np.float64(w >> _S11) * _INV53 * zx[i]
                if x < zx[i + 1]:
                    break
                # slow path: two more words from the same stream
                if p == 4:
                    r0, r1, r2, r3 = philox4x64(ctr[s], _ZERO, _ZERO, _ZERO, seed, key)
                    ctr[s] += _ONE
                    buf[s, 0] = r0
                    buf[s, 1] = r1
                    buf[s, 2] = r2
                    buf[s, 3] = r3
                    p = 0
                u1 = (np.float64(buf[s, p] >> _S11) + 0.5) * _INV53
                p += 1
                if p == 4:
                    r0, r1, r2, r3 = philox4x64(ctr[s], _ZERO, _ZERO, _ZERO, seed, key)
                    ctr[s] += _ONE
                    buf[s, 0] = r0
                    buf[s, 1] = r1
                    buf[s, 2] = r2
                    buf[s, 3] = r3
                    p = 0
                u2 = (np.float64(buf[s, p] >> _S11) + 0.5) * _INV53
                p += 1
                if i == 0:
                    x = zx[1] - np.log1p(-u1)
                    break
                if zf[i] + u2 * (zf[i + 1] - zf[i]) < np.exp(-x):
                    break
            t_new = t + x / rate
            if t_new <= t:
                t_new = np.nextafter(t, np.inf)
            t = t_new
        nxt[s] = t
        pos[s] = p
    return n, s_end


@njit(cache=True)
def next_slab(
    seed, keys, ctr, buf, pos, rates, nxt, t0, t1, raw_t, raw_s, out_t, out_s, counts,
    s_lo=0, s_hi=-1,
):
    """Collect and sort all epochs in ``(t0, t1]`` of streams ``s_lo .. s_hi - 1``.

    ``s_hi = -1`` means all streams.  Streams outside the range are left
    untouched.  Returns ``(n, raw_t, raw_s, out_t, out_s)``; the work arrays
    are regrown when a slab overflows them.
    """
    if s_hi < 0:
        s_hi = keys.shape[0]
    n, s = _fill(seed, keys, ctr, buf, pos, rates, nxt, t1, raw_t, raw_s, s_lo, s_hi, 0)
    while s < s_hi:
        cap = 2 * raw_t.shape[0]
        nt = np.empty(cap)
        ns = np.empty(cap, np.int64)
        nt[:n] = raw_t[:n]
        ns[:n] = raw_s[:n]
        raw_t = nt
        raw_s = ns
        n, s = _fill(seed, keys, ctr, buf, pos, rates, nxt, t1, raw_t, raw_s, s, s_hi, n)
    if out_t.shape[0] < raw_t.shape[0]:
        out_t = np.empty(raw_t.shape[0])
        out_s = np.empty(raw_t.shape[0], np.int64)
    if counts.shape[0] < n + 1:
        counts = np.zeros(n + 1, np.int64)
    _bucket_sort(raw_t, raw_s, n, t0, t1, out_t, out_s, counts)
    return n, raw_t, raw_s, out_t, out_s


@njit(cache=True)
def _stream_times(seed, key, rate, horizon):
    keys = np.array([key])
    ctr = np.zeros(1, np.uint64)
    buf = np.zeros((1, 4), np.uint64)
    pos = np.full(1, 4, np.int64)
    rates = np.array([rate])
    nxt = np.zeros(1)
    _init_streams(seed, keys, ctr, buf, pos, rates, nxt)
    out = []
    while nxt[0] <= horizon:
        out.append(nxt[0])
        _advance(seed, keys, ctr, buf, pos, rates, nxt, 0)
    return np.array(out, dtype=np.float64)


@njit(cache=True)
def _make_keys(lo, hi, disps):
    m = disps.shape[0]
    keys = np.empty((hi - lo + 1) * m, np.uint64)
    for i in range(lo, hi + 1):
        for j in range(m):
            keys[(i - lo) * m + j] = stream_key(CLOCK, i, disps[j])
    return keys


class StreamBank:
    """Mutable per-stream state for the streams of sites ``lo..hi``.

    Stream ``s`` belongs to site ``lo + s // m`` and displacement
    ``disps[s % m]``.
    """

    def __init__(self, seed, lo, hi, disps, rates, slab_events=1 << 15):
        self.seed = np.uint64(seed)
        self.lo = int(lo)
        self.hi = int(hi)
        self.disps = np.asarray(disps, dtype=np.int64)
        m = len(self.disps)
        stream_key_py(CLOCK, self.lo)
        stream_key_py(CLOCK, self.hi)
        for d in self.disps:
            stream_key_py(CLOCK, 0, int(d))
        self.keys = _make_keys(self.lo, self.hi, self.disps)
        n = len(self.keys)
        self.rates = np.tile(np.asarray(rates, dtype=np.float64), self.hi - self.lo + 1)
        self.ctr = np.zeros(n, np.uint64)
        self.buf = np.zeros((n, 4), np.uint64)
        self.pos = np.full(n, 4, np.int64)
        self.nxt = np.zeros(n)
        _init_streams(self.seed, self.keys, self.ctr, self.buf, self.pos, self.rates, self.nxt)
        total = float(self.rates.sum())
        self.slab = slab_events / total if total > 0 else np.inf
        cap = slab_events + 8 * int(np.sqrt(slab_events)) + 64
        self.raw_t = np.empty(cap)
        self.raw_s = np.empty(cap, np.int64)
        self.out_t = np.empty(cap)
        self.out_s = np.empty(cap, np.int64)
        self.counts = np.zeros(cap + 1, np.int64)
        self.m = m

    def state(self):
        return (
            self.seed, self.keys, self.ctr, self.buf, self.pos, self.rates, self.nxt,
            self.raw_t, self.raw_s, self.out_t, self.out_s, self.counts,
        )


@dataclass(frozen=True)
class ClockRealization:
    """Poisson epochs on ``[0, horizon]`` for every (site, displacement).

    Nothing is stored: streams are regenerated from ``seed`` on demand.
    """

    seed: int
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "seed", as_seed(self.seed))
        if not self.horizon >= 0:
            raise HorizonError("horizon must be non-negative")

    def check(self, t):
        if t < 0:
            raise HorizonError("time must be non-negative")
        if t > self.horizon:
            raise HorizonError(f"time {t} beyond clock horizon {self.horizon}")

    def stream(self, site, disp=1, rate=1.0):
        """All epochs of one stream up to the horizon."""
        key = np.uint64(stream_key_py(CLOCK, int(site), int(disp)))
        return _stream_times(np.uint64(self.seed), key, float(rate), float(self.horizon))

    def bank(self, lo, hi, kernel):
        return StreamBank(self.seed, lo, hi, kernel.displacements, kernel.values)

    def events(self, lo, hi, kernel, t=None):
        """Globally ordered epochs of the window's streams up to ``t``.

        Returns arrays ``(times, sites, displacements)``.
        """
        t = self.horizon if t is None else t
        self.check(t)
        b = self.bank(lo, hi, kernel)
        times, sids = _collect(*b.state(), b.slab, float(t))
        return times, b.lo + sids // b.m, b.disps[sids % b.m]


@njit(cache=True)
def _collect(seed, keys, ctr, buf, pos, rates, nxt, raw_t, raw_s, out_t, out_s, counts, slab, t_end):
    res_t = []
    res_s = []
    t0 = 0.0
    while t0 < t_end:
        t1 = min(t0 + slab, t_end)
        n, raw_t, raw_s, out_t, out_s = next_slab(
            seed, keys, ctr, buf, pos, rates, nxt, t0, t1, raw_t, raw_s, out_t, out_s, counts
        )
        for e in range(n):
            res_t.append(out_t[e])
            res_s.append(out_s[e])
        t0 = t1
    a = np.empty(len(res_t))
    b = np.empty(len(res_s), np.int64)
    for e in range(len(res_t)):
        a[e] = res_t[e]
        b[e] = res_s[e]
    return a, b
