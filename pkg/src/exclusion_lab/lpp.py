"""Last-passage percolation: three-step and up-right models, and their link.

Three-step model: ``L_{i,j} = max(L_{i-1,j}, L_{i,j-1}, L_{i+1,j-1}) + Y_{i,j}``
on ``{j >= 1 + max(0, -i)}`` with ``L = 0`` on the boundary cells ``j = 0``
(``i >= 0``) and ``i + j <= 0``.  Up-right model: ``T_{k,l} = max(T_{k-1,l},
T_{k,l-1}) + W_{k,l}`` on the positive quadrant.  ``Psi(i, j) = (i + j, j)``
maps one domain onto the other, and with ``W = Y o Psi^{-1}`` the tables agree
cell by cell.

A three-step table of size ``(imax, jmax)`` covers the predecessor-closed set
``{1 <= j <= jmax, 1 - j <= i <= imax + jmax - j}``, the preimage of the
``(imax + jmax) x jmax`` up-right rectangle.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

from .rng import WEIGHTS, as_seed, philox4x64, stream_key, stream_key_py


class DomainError(ValueError):
    pass


def psi(i, j):
    if j < 1 or i + j < 1:
        raise DomainError(f"({i}, {j}) outside the three-step domain")
    return i + j, j


def psi_inverse(k, l):
    if k < 1 or l < 1:
        raise DomainError(f"({k}, {l}) outside the positive quadrant")
    return k - l, l


def in_three_step(i, j):
    return j >= 1 + max(0, -i)


@njit(cache=True)
def _exp_grid(seed, kmax, lmax):
    out = np.empty((kmax, lmax))
    z = np.uint64(0)
    k0 = np.uint64(seed)
    for k in range(1, kmax + 1):
        key = stream_key(WEIGHTS, k, 0)
        for l0 in range(0, lmax, 4):
            r = philox4x64(np.uint64(l0 // 4), z, z, z, k0, key)
            for a in range(4):
                if l0 + a < lmax:
                    u = (np.float64(r[a] >> np.uint64(11)) + 0.5) * (1.0 / 9007199254740992.0)
                    out[k - 1, l0 + a] = -np.log(u)
    return out


@dataclass
class WeightGrid:
    """Weights of one model.

    ``kind="upright"``: ``values[k-1, l-1] = W_{k,l}``.
    ``kind="three-step"``: ``values[j, i + jmax]`` holds ``Y_{i,j}`` for the
    domain cells and ``nan`` elsewhere (row ``j = 0`` is boundary).
    """

    kind: str
    values: np.ndarray
    imax: int = 0
    jmax: int = 0
    seed: int = None

    def __post_init__(self):
        if self.kind not in ("upright", "three-step"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        v = self.values
        if np.any(v[~np.isnan(v)] < 0):
            raise ValueError("weights must be non-negative")

    @classmethod
    def upright(cls, values, seed=None):
        v = np.asarray(values, dtype=np.float64)
        return cls("upright", v, v.shape[0], v.shape[1], seed)

    @classmethod
    def exponential_upright(cls, seed, kmax, lmax):
        """I.i.d. mean-one exponentials; cell ``(k, l)`` depends only on the seed."""
        return cls.upright(_exp_grid(np.uint64(as_seed(seed)), kmax, lmax), seed)

    @classmethod
    def three_step(cls, imax, jmax, fn):
        """Three-step weights from ``fn(i, j)`` on the domain of size ``(imax, jmax)``."""
        v = np.full((jmax + 1, imax + 2 * jmax + 1), np.nan)
        for j in range(1, jmax + 1):
            for i in range(1 - j, imax + jmax - j + 1):
                v[j, i + jmax] = fn(i, j)
        return cls("three-step", v, imax, jmax)

    @classmethod
    def from_upright(cls, grid, jmax):
        """``Y_{i,j} = W_{Psi(i,j)}``: the three-step grid sharing ``grid``'s weights."""
        kmax = grid.values.shape[0]
        imax = kmax - jmax
        if imax < 0 or grid.values.shape[1] < jmax:
            raise DomainError("up-right grid too small")
        w = grid.values
        out = cls.three_step(imax, jmax, lambda i, j: w[i + j - 1, j - 1])
        out.seed = grid.seed
        return out

    @classmethod
    def exponential_three_step(cls, seed, imax, jmax):
        return cls.from_upright(cls.exponential_upright(seed, imax + jmax, jmax), jmax)

    def __getitem__(self, cell):
        a, b = cell
        if self.kind == "upright":
            if not (1 <= a <= self.values.shape[0] and 1 <= b <= self.values.shape[1]):
                raise DomainError(f"cell {cell} not covered")
            return float(self.values[a - 1, b - 1])
        i, j = a, b
        if not (1 <= j <= self.jmax and 1 - j <= i <= self.imax + self.jmax - j):
            raise DomainError(f"cell {cell} not covered")
        return float(self.values[j, i + self.jmax])

    def cells(self):
        if self.kind == "upright":
            K, L = self.values.shape
            return [(k, l) for l in range(1, L + 1) for k in range(1, K + 1)]
        return [
            (i, j)
            for j in range(1, self.jmax + 1)
            for i in range(1 - j, self.imax + self.jmax - j + 1)
        ]

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("i,j,weight\n")
            for c in self.cells():
                fh.write(f"{c[0]},{c[1]},{self[c]!r}\n")

    @classmethod
    def from_csv(cls, path, kind="upright"):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        cells = {(int(a), int(b)): w for a, b, w in data}
        if kind == "upright":
            K = max(a for a, _ in cells)
            L = max(b for _, b in cells)
            v = np.full((K, L), np.nan)
            for (a, b), w in cells.items():
                v[a - 1, b - 1] = w
            if np.isnan(v).any():
                raise DomainError("up-right grid has missing cells")
            return cls.upright(v)
        jmax = max(b for _, b in cells)
        imax = max(a + b for a, b in cells) - jmax
        try:
            return cls.three_step(imax, jmax, lambda i, j: cells[(i, j)])
        except KeyError as e:
            raise DomainError(f"three-step grid misses cell {e.args[0]}") from None


@dataclass
class PassageTable:
    """Passage times over a domain, same layout as the weight grid.

    Boundary and out-of-domain cells read as zero for three-step tables.
    """

    kind: str
    values: np.ndarray
    imax: int = 0
    jmax: int = 0

    def __getitem__(self, cell):
        a, b = cell
        if self.kind == "upright":
            if a == 0 or b == 0:
                return 0.0
            return float(self.values[a - 1, b - 1])
        i, j = a, b
        if j == 0 and i >= 0 or i + j <= 0 and j >= 0:
            return 0.0
        if not (1 <= j <= self.jmax and 1 - j <= i <= self.imax + self.jmax - j):
            raise DomainError(f"cell {cell} not covered")
        return float(self.values[j, i + self.jmax])

    def cells(self):
        return WeightGrid.cells(self)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("i,j,value\n")
            for c in self.cells():
                fh.write(f"{c[0]},{c[1]},{self[c]!r}\n")


@njit(cache=True)
def _three_step(Y, imax, jmax, vertical):
    off = jmax
    L = np.zeros_like(Y)
    for j in range(1, jmax + 1):
        for i in range(1 - j, imax + jmax - j + 1):
            # predecessors outside the domain are boundary cells (value 0)
            a = L[j, i - 1 + off] if i - 1 >= 1 - j else 0.0
            b = L[j - 1, i + 1 + off] if j - 1 >= 1 else 0.0
            if vertical and j - 1 >= 1 and i >= 2 - j:
                c = L[j - 1, i + off]
                if c > b:
                    b = c
            L[j, i + off] = (a if a > b else b) + Y[j, i + off]
    return L


def lpp_three_step(weights, imax=None, jmax=None, allow_vertical=True):
    """Dynamic programme for ``L`` row by row in ``j``.

    ``allow_vertical=False`` drops the ``(i, j-1)`` predecessor; the table is
    unchanged because that cell also precedes ``(i+1, j-1)``.
    """
    if weights.kind != "three-step":
        raise ValueError("three-step weights required")
    imax = weights.imax if imax is None else imax
    jmax = weights.jmax if jmax is None else jmax
    if imax > weights.imax or jmax > weights.jmax:
        raise DomainError("weights do not cover the requested domain")
    if (imax, jmax) != (weights.imax, weights.jmax):
        weights = WeightGrid.three_step(imax, jmax, lambda i, j: weights[i, j])
    Y = np.nan_to_num(weights.values, nan=0.0)
    L = _three_step(Y, imax, jmax, bool(allow_vertical))
    L[np.isnan(weights.values)] = np.nan
    L[0] = np.nan
    return PassageTable("three-step", L, imax, jmax)


@njit(cache=True)
def _upright(W):
    K, Lm = W.shape
    T = np.empty_like(W)
    for l in range(Lm):
        for k in range(K):
            a = T[k - 1, l] if k > 0 else 0.0
            b = T[k, l - 1] if l > 0 else 0.0
            T[k, l] = (a if a > b else b) + W[k, l]
    return T


@njit(cache=True)
def _corner(seed, n):
    # T_{n,n} with one row of memory, weights regenerated per row
    row = np.zeros(n)
    z = np.uint64(0)
    k0 = np.uint64(seed)
    for k in range(1, n + 1):
        key = stream_key(WEIGHTS, k, 0)
        left = 0.0
        for l0 in range(0, n, 4):
            r = philox4x64(np.uint64(l0 // 4), z, z, z, k0, key)
            for a in range(4):
                l = l0 + a
                if l < n:
                    u = (np.float64(r[a] >> np.uint64(11)) + 0.5) * (1.0 / 9007199254740992.0)
                    up = row[l]
                    v = (up if up > left else left) - np.log(u)
                    row[l] = v
                    left = v
    return row[n - 1]


def lpp_upright(weights, kmax=None, lmax=None):
    if weights.kind != "upright":
        raise ValueError("up-right weights required")
    K, Lm = weights.values.shape
    kmax = K if kmax is None else kmax
    lmax = Lm if lmax is None else lmax
    if kmax > K or lmax > Lm:
        raise DomainError("weights do not cover the requested domain")
    T = _upright(np.ascontiguousarray(weights.values[:kmax, :lmax]))
    return PassageTable("upright", T, kmax, lmax)


def corner_passage(seed, n):
    """``T_{n,n}`` for the exponential grid of ``seed`` in ``O(n)`` memory.

    Equals ``lpp_upright(WeightGrid.exponential_upright(seed, n, n))[n, n]``.
    """
    return float(_corner(np.uint64(as_seed(seed)), int(n)))


def _path_sum(weights, path):
    # summed from the start of the path, the order the recursion uses
    acc = 0.0
    for c in reversed(path):
        acc = acc + weights[c]
    return acc


def three_step_paths(i, j, allow_vertical=True):
    """Every admissible path ending at ``(i, j)``, listed end first."""
    steps = [(-1, 0), (1, -1)] + ([(0, -1)] if allow_vertical else [])
    out = []
    stack = [[(i, j)]]
    while stack:
        path = stack.pop()
        a, b = path[-1]
        ends = True
        for di, dj in steps:
            c = (a + di, b + dj)
            if in_three_step(*c):
                ends = False
                stack.append(path + [c])
        if ends:
            out.append(path)
    return out


def upright_paths(k, l):
    out = []
    stack = [[(k, l)]]
    while stack:
        path = stack.pop()
        a, b = path[-1]
        if a == 1 and b == 1:
            out.append(path)
            continue
        if a > 1:
            stack.append(path + [(a - 1, b)])
        if b > 1:
            stack.append(path + [(a, b - 1)])
    return out


@lru_cache(maxsize=4096)
def _cached_paths(kind, a, b, allow_vertical):
    if kind == "three-step":
        return tuple(tuple(p) for p in three_step_paths(a, b, allow_vertical))
    return tuple(tuple(p) for p in upright_paths(a, b))


def brute_force_three_step(weights, i, j, allow_vertical=True):
    """Maximum weight over explicitly enumerated admissible paths ending at ``(i, j)``."""
    return max(_path_sum(weights, p) for p in _cached_paths("three-step", i, j, allow_vertical))


def brute_force_upright(weights, k, l):
    return max(_path_sum(weights, p) for p in _cached_paths("upright", k, l, True))


def shape_g(x):
    """Limit level curve: ``(1/4)(1 - x)^2`` on ``[-1, 1]``, ``-x`` for ``x < -1``, 0 for ``x > 1``."""
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x <= -1, -x, np.where(x >= 1, 0.0, 0.25 * (1 - x) ** 2))
    return out if out.ndim else float(out)


def shape_gamma(x, y):
    """``(sqrt(x + y) + sqrt(y))**2`` for ``y > max(0, -x)``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= np.maximum(0.0, -x)):
        raise DomainError("gamma needs y > max(0, -x)")
    out = (np.sqrt(x + y) + np.sqrt(y)) ** 2
    return out if out.ndim else float(out)


def shape_gamma_upright(x, y):
    """``(sqrt(x) + sqrt(y))**2``: the up-right limit, ``4`` at ``(1, 1)``."""
    return shape_gamma(np.asarray(x) - np.asarray(y), y)


def hitting_time_passage(hit, i, j):
    """``L_{i,j} = inf{t : xi_i(t) >= j}`` from a logged interface run.

    ``hit`` is an :class:`InterfaceHits` record.
    """
    return hit.passage(i, j)


@dataclass
class InterfaceHits:
    """First-hitting times ``times[i - lo, j]`` of level ``j`` by ``xi_i``."""

    lo: int
    times: np.ndarray
    horizon: float
    audit: object = None

    def passage(self, i, j):
        if j <= max(0, -i):
            return 0.0
        if not self.lo <= i < self.lo + self.times.shape[0] or j >= self.times.shape[1]:
            raise DomainError(f"cell ({i}, {j}) not logged")
        v = self.times[i - self.lo, j]
        if np.isnan(v):
            raise DomainError(f"level {j} at site {i} not reached by horizon {self.horizon}")
        return float(v)

    def waiting_time(self, i, j):
        """``L_{i,j} - max`` of the bracketed predecessors."""
        pred = [self.passage(i - 1, j), self.passage(i + 1, j - 1)]
        if j - 1 > max(0, -i):
            pred.append(self.passage(i, j - 1))
        return self.passage(i, j) - max(pred)


def interface_hits(clock, t, lo, hi, levels, observe=None):
    """Run ``xi^0`` on ``lo..hi`` and log hitting times of levels ``< levels``."""
    from .variational import _run_heights

    j = np.arange(lo, hi + 1)
    H = (-np.maximum(-j, 0))[:, None].astype(np.int64)
    obs = (lo + 1, hi - 1) if observe is None else observe
    _, _, audit, hit, _, _ = _run_heights(H, lo, clock, t, [t], obs, hit_levels=levels)
    # initial levels are reached at time zero
    for a, site in enumerate(j):
        hit[a, : min(max(-site, 0) + 1, levels)] = 0.0
    return InterfaceHits(lo, hit, float(t), audit)
