"""Counter-based random numbers.

Every random quantity in the package is a pure function of
``(seed, purpose, site, displacement, counter)``.  The block cipher is
Philox4x64-10, bit-compatible with :class:`numpy.random.Philox`, implemented
in numba so the event loops can draw without a Python round trip.
"""

import numpy as np
from numba import njit

_M32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_MUL0 = np.uint64(0xD2E7470EE14C6C93)
_MUL1 = np.uint64(0xCA5A826395121157)
_WEYL0 = np.uint64(0x9E3779B97F4A7C15)
_WEYL1 = np.uint64(0xBB67AE8584CAA73B)
_ONE = np.uint64(1)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

# purpose tags, stored in the top byte of the second key word
CLOCK = 1
BITS = 2
WEIGHTS = 3
REPLICA = 4

_SITE_BIAS = 1 << 39
_DISP_BIAS = 1 << 15


@njit(cache=True)
def _mulhilo(a, b):
    a_lo = a & _M32
    a_hi = a >> _S32
    b_lo = b & _M32
    b_hi = b >> _S32
    p0 = a_lo * b_lo
    p1 = a_lo * b_hi
    p2 = a_hi * b_lo
    p3 = a_hi * b_hi
    mid = (p0 >> _S32) + (p1 & _M32) + (p2 & _M32)
    hi = p3 + (p1 >> _S32) + (p2 >> _S32) + (mid >> _S32)
    return hi, a * b


@njit(cache=True)
def philox4x64(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox4x64 block for counter (c0..c3) and key (k0, k1)."""
    for _ in range(10):
        hi0, lo0 = _mulhilo(_MUL0, c0)
        hi1, lo1 = _mulhilo(_MUL1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = k0 + _WEYL0
        k1 = k1 + _WEYL1
    return c0, c1, c2, c3


@njit(cache=True)
def to_unit(x):
    """Map a 64-bit word to a double in [0, 1)."""
    return np.float64(x >> _S11) * _INV53


@njit(cache=True)
def stream_key(purpose, site, disp):
    return (np.uint64(purpose) << np.uint64(56)) | (
        np.uint64(site + _SITE_BIAS) << np.uint64(16)
    ) | np.uint64(disp + _DISP_BIAS)


def stream_key_py(purpose, site, disp=0):
    if not -_SITE_BIAS <= site < _SITE_BIAS:
        raise ValueError(f"site {site} outside the addressable range")
    if not -_DISP_BIAS <= disp < _DISP_BIAS:
        raise ValueError(f"displacement {disp} outside the addressable range")
    return (purpose << 56) | ((site + _SITE_BIAS) << 16) | (disp + _DISP_BIAS)


def as_seed(seed):
    """Normalise a user seed to an unsigned 64-bit integer."""
    seed = int(seed)
    if seed < 0 or seed >= 1 << 64:
        raise ValueError("seed must lie in [0, 2**64)")
    return seed


@njit(cache=True)
def _site_uniforms(seed, purpose, lo, hi):
    out = np.empty(hi - lo + 1)
    k0 = np.uint64(seed)
    z = np.uint64(0)
    for s in range(lo, hi + 1):
        r0, _, _, _ = philox4x64(z, z, z, z, k0, stream_key(purpose, s, 0))
        out[s - lo] = to_unit(r0)
    return out


def site_uniforms(seed, lo, hi, purpose=BITS):
    """One uniform per site in ``[lo, hi]``; independent of the window chosen."""
    stream_key_py(purpose, lo)
    stream_key_py(purpose, hi)
    return _site_uniforms(np.uint64(as_seed(seed)), purpose, lo, hi)


def derive_seed(master, index, purpose=REPLICA):
    """Child seed for replica ``index`` of a master seed."""
    c = np.uint64(0)
    r0, _, _, _ = philox4x64(
        c, c, c, c, np.uint64(as_seed(master)), np.uint64(stream_key_py(purpose, int(index)))
    )
    return int(r0)


def raw_block(counter, key):
    """Python-level access to one Philox block (used for cross-checks)."""
    c = [np.uint64(x) for x in counter]
    k = [np.uint64(x) for x in key]
    return tuple(int(v) for v in philox4x64(c[0], c[1], c[2], c[3], k[0], k[1]))


def _ziggurat_tables(levels=256, r=7.69711747013104972, v=3.949659822581572e-3):
    # layer i >= 1 is the rectangle [0, x[i]] x [f(x[i]), f(x[i+1])]; layer 0 is the
    # base strip plus the tail beyond r, with virtual width v / f(r)
    x = np.zeros(levels + 1)
    x[0] = v / np.exp(-r)
    x[1] = r
    for i in range(1, levels - 1):
        x[i + 1] = -np.log(v / x[i] + np.exp(-x[i]))
    x[levels] = 0.0
    return x, np.exp(-x)


ZIG_X, ZIG_F = _ziggurat_tables()
ZIG_R = float(ZIG_X[1])
_M8 = np.uint64(255)


@njit(cache=True)
def zig_fast(w, zx):
    """Fast path of the exponential ziggurat; returns -1.0 when it rejects."""
    i = np.int64(w & _M8)
    x = np.float64(w >> _S11) * _INV53 * zx[i]
    if x < zx[i + 1]:
        return x
    return -1.0


@njit(cache=True)
def zig_slow(w, u1, u2, zx, zf):
    """Slow path given the rejected word ``w`` and two fresh uniforms.

    Returns ``-1.0`` when the caller must start over with a new word.
    """
    i = np.int64(w & _M8)
    x = np.float64(w >> _S11) * _INV53 * zx[i]
    if i == 0:
        # memoryless tail beyond r
        return zx[1] - np.log1p(-u1)
    if zf[i] + u2 * (zf[i + 1] - zf[i]) < np.exp(-x):
        return x
    return -1.0
