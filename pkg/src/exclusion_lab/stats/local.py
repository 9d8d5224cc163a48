"""Local functions of an occupation configuration and their basis expansions.

A local function is stored as a table over the ``2**|support|`` occupation
patterns of its support; bit ``b`` of a pattern index is the occupation of
``support[b]``.  Tables may hold floats or :class:`fractions.Fraction` values;
all algebra below is exact when they hold fractions.
"""

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np


def _pattern_bits(p, size):
    return tuple((p >> b) & 1 for b in range(size))


class LocalFunction:
    """``f(eta)`` depending only on ``eta`` at ``support``."""

    def __init__(self, support, table):
        support = tuple(int(s) for s in support)
        if len(set(support)) != len(support):
            raise ValueError("support sites must be distinct")
        size = len(support)
        if callable(table):
            table = [table(_pattern_bits(p, size)) for p in range(1 << size)]
        table = list(table)
        if len(table) != 1 << size:
            raise ValueError(f"table needs {1 << size} entries, got {len(table)}")
        self.support = support
        self.table = table

    @property
    def exact(self):
        return all(isinstance(v, (int, Fraction)) for v in self.table)

    def __call__(self, eta):
        """Evaluate on a mapping/sequence indexed by site, or on an Occupancy."""
        p = 0
        for b, s in enumerate(self.support):
            p |= int(eta[s]) << b
        return self.table[p]

    def at_pattern(self, p):
        return self.table[p]

    def __repr__(self):
        return f"LocalFunction(support={self.support})"

    def on_support(self, support):
        """Same function re-tabulated on a larger support."""
        support = tuple(support)
        idx = [support.index(s) for s in self.support]

        def g(bits):
            p = 0
            for b, j in enumerate(idx):
                p |= bits[j] << b
            return self.table[p]

        return LocalFunction(support, g)

    def __add__(self, other):
        sup = tuple(sorted(set(self.support) | set(other.support)))
        a, b = self.on_support(sup), other.on_support(sup)
        return LocalFunction(sup, [x + y for x, y in zip(a.table, b.table)])

    def __sub__(self, other):
        return self + other.scale(-1)

    def scale(self, c):
        return LocalFunction(self.support, [c * v for v in self.table])

    def shift(self, c):
        return LocalFunction(self.support, [v + c for v in self.table])

    def equals(self, other, tol=0.0):
        sup = tuple(sorted(set(self.support) | set(other.support)))
        a, b = self.on_support(sup), other.on_support(sup)
        if tol == 0.0:
            return all(x == y for x, y in zip(a.table, b.table))
        return all(abs(x - y) <= tol for x, y in zip(a.table, b.table))

    def is_increasing(self):
        """Coordinatewise monotonicity, checked on every covering pair."""
        n = len(self.support)
        for p in range(1 << n):
            for b in range(n):
                if not p >> b & 1 and self.table[p] > self.table[p | 1 << b]:
                    return False
        return True

    def float_table(self):
        return np.array([float(v) for v in self.table])


def constant(c, support=()):
    return LocalFunction(support, lambda e: c)


def centered_occupation(rho, site=0):
    """``eta_site - rho``."""
    return LocalFunction((site,), lambda e: e[0] - rho)


def current_function(site=0):
    """``eta_site (1 - eta_{site+1})``."""
    return LocalFunction((site, site + 1), lambda e: e[0] * (1 - e[1]))


def centered_monomial(I, rho):
    """``C_I = prod_{i in I} (eta_i - rho)``."""
    I = tuple(I)

    def g(e):
        out = 1
        for x in e:
            out = out * (x - rho)
        return out

    return LocalFunction(I, g)


def monotone_monomial(I, rho):
    """``M_I = prod_{i in I} eta_i - rho**|I|``."""
    I = tuple(I)

    def g(e):
        out = 1
        for x in e:
            out = out * x
        return out - rho ** len(I)

    return LocalFunction(I, g)


def expectation(f, rho):
    """``E_rho[f]`` under Bernoulli(rho) product measure, summed exactly."""
    n = len(f.support)
    total = 0
    for p, v in enumerate(f.table):
        k = bin(p).count("1")
        total = total + v * rho**k * (1 - rho) ** (n - k)
    return total


def _mobius(table, n):
    # monomial coefficients a_I with f = sum_I a_I prod_{i in I} eta_i
    a = list(table)
    for b in range(n):
        bit = 1 << b
        for p in range(1 << n):
            if p & bit:
                a[p] = a[p] - a[p ^ bit]
    return a


def _zeta(coeffs, n):
    # out[p] = sum over submasks I of p of coeffs[I]
    out = list(coeffs)
    for b in range(n):
        bit = 1 << b
        for p in range(1 << n):
            if p & bit:
                out[p] = out[p] + out[p ^ bit]
    return out


def _centered_eval(coeffs, rho, n):
    # out[p] = sum_J coeffs[J] prod_{j in J} (p_j - rho)
    out = list(coeffs)
    for b in range(n):
        bit = 1 << b
        for q in range(1 << n):
            if not q & bit:
                x, y = out[q], out[q | bit]
                out[q] = x - rho * y
                out[q | bit] = x + (1 - rho) * y
    return out


@dataclass
class BasisDecomposition:
    """Centered and monotone expansions of a local function.

    ``centered[I]`` and ``monotone[I]`` are keyed by tuples of sites; the
    constant term is ``E_rho[f]`` in both.
    """

    rho: object
    support: tuple
    constant: object
    centered: dict
    monotone: dict

    @property
    def K(self):
        sizes = [len(I) for I, v in list(self.centered.items()) + list(self.monotone.items()) if v != 0]
        return max(sizes, default=0)

    def _masked(self, coeffs):
        n = len(self.support)
        pos = {s: b for b, s in enumerate(self.support)}
        arr = [0] * (1 << n)
        for I, c in coeffs.items():
            arr[sum(1 << pos[s] for s in I)] = c
        return arr

    def reconstruct(self, basis="monotone"):
        """Rebuild the table of ``f`` from one of the two expansions."""
        n = len(self.support)
        if basis == "monotone":
            beta = self._masked(self.monotone)
            offset = self.constant
            for p in range(1, 1 << n):
                offset = offset - beta[p] * self.rho ** bin(p).count("1")
            return LocalFunction(self.support, [offset + v for v in _zeta(beta, n)])
        if basis == "centered":
            alpha = self._masked(self.centered)
            alpha[0] = self.constant
            return LocalFunction(self.support, _centered_eval(alpha, self.rho, n))
        raise ValueError(f"unknown basis {basis!r}")


def decompose(f, rho):
    """Expand ``f`` in the centered and monotone bases at density ``rho``."""
    if not 0 <= rho <= 1:
        raise ValueError("rho must lie in [0, 1]")
    n = len(f.support)
    a = _mobius(f.table, n)
    const = 0
    for p in range(1 << n):
        const = const + a[p] * rho ** bin(p).count("1")
    # prod_{i in I} eta_i = sum_{J subset I} rho^{|I|-|J|} C_J: superset sums weighted by rho
    alpha = list(a)
    for b in range(n):
        bit = 1 << b
        for p in range(1 << n):
            if not p & bit:
                alpha[p] = alpha[p] + rho * alpha[p | bit]
    monotone = {}
    centered = {}
    for p in range(1, 1 << n):
        I = tuple(f.support[b] for b in range(n) if p >> b & 1)
        monotone[I] = a[p]
        centered[I] = alpha[p]
    return BasisDecomposition(rho, f.support, const, centered, monotone)


def monotone_split(d):
    """Split into increasing mean-zero parts: ``f = E[f] + f_plus - f_minus``."""
    plus = BasisDecomposition(d.rho, d.support, 0, {}, {I: b for I, b in d.monotone.items() if b > 0})
    minus = BasisDecomposition(d.rho, d.support, 0, {}, {I: -b for I, b in d.monotone.items() if b < 0})
    f_plus = plus.reconstruct("monotone")
    f_minus = minus.reconstruct("monotone")
    return f_plus.shift(-expectation(f_plus, d.rho)), f_minus.shift(-expectation(f_minus, d.rho))


def pair_identity_terms(rho):
    """Terms of ``(eta_0-rho)(eta_1-rho)`` split through the current function.

    Returns ``(lhs, [rho(1-rho) - c, (1-2rho) C_0, rho (C_0 - C_1)])`` where
    ``c = eta_0 (1 - eta_1)``.
    """
    sup = (0, 1)
    lhs = centered_monomial(sup, rho)
    c = current_function(0)
    t1 = c.scale(-1).shift(rho * (1 - rho)).on_support(sup)
    t2 = centered_occupation(rho, 0).scale(1 - 2 * rho).on_support(sup)
    t3 = (centered_occupation(rho, 0) - centered_occupation(rho, 1)).scale(rho).on_support(sup)
    return lhs, [t1, t2, t3]


def all_subsets(support, max_size=None):
    support = tuple(support)
    top = len(support) if max_size is None else max_size
    for k in range(1, top + 1):
        yield from combinations(support, k)
