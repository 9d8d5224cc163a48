"""Finite-range translation-invariant jump rates."""

from dataclasses import dataclass
from math import gcd

import numpy as np


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class JumpKernel:
    """Jump rates ``p(k)`` indexed by integer displacement ``k != 0``.

    Only displacements with a strictly positive rate are stored, sorted by
    displacement; that order is also the tie-break order of simultaneous
    clock events at one site.
    """

    rates: tuple

    def __init__(self, rates):
        items = dict(rates).items() if not isinstance(rates, tuple) else rates
        clean = {}
        for k, r in items:
            k = int(k)
            r = float(r)
            if not np.isfinite(r) or r < 0:
                raise KernelError(f"rate p({k}) = {r} must be a non-negative finite number")
            if k == 0:
                if r > 0:
                    raise KernelError("p(0) must be zero")
                continue
            if r > 0:
                clean[k] = clean.get(k, 0.0) + r
        if not clean:
            raise KernelError("kernel has no positive rate")
        object.__setattr__(self, "rates", tuple(sorted(clean.items())))
        sym = {abs(k) for k in clean}
        g = 0
        for k in sym:
            g = gcd(g, k)
        if g != 1:
            raise KernelError(
                f"symmetrised kernel is not irreducible (support generates {g}Z)"
            )

    @classmethod
    def tasep(cls):
        return cls({1: 1.0})

    @classmethod
    def nearest_neighbor(cls, right, left):
        return cls({1: right, -1: left})

    def __call__(self, k):
        return dict(self.rates).get(int(k), 0.0)

    @property
    def displacements(self):
        return np.array([k for k, _ in self.rates], dtype=np.int64)

    @property
    def values(self):
        return np.array([r for _, r in self.rates], dtype=np.float64)

    @property
    def range(self):
        return max(abs(k) for k, _ in self.rates)

    @property
    def drift(self):
        return float(sum(k * r for k, r in self.rates))

    @property
    def total_rate(self):
        return float(sum(r for _, r in self.rates))

    def symmetrized(self):
        """``(p(k) + p(-k)) / 2``."""
        out = {}
        for k, r in self.rates:
            out[k] = out.get(k, 0.0) + r / 2
            out[-k] = out.get(-k, 0.0) + r / 2
        return JumpKernel(out)

    def is_symmetric(self):
        d = dict(self.rates)
        return all(d.get(-k, 0.0) == r for k, r in d.items())

    def is_tasep(self):
        return self.rates == ((1, 1.0),)

    def velocity(self, rho):
        """Second-class particle velocity ``(1 - 2 rho) * drift``."""
        return (1.0 - 2.0 * rho) * self.drift

    def spec(self):
        """Text form ``k:rate,k:rate`` used by config files."""
        return ",".join(f"{k}:{r!r}" for k, r in self.rates)

    @classmethod
    def parse(cls, text):
        rates = {}
        text = text.strip()
        if not text:
            raise KernelError("empty kernel")
        for part in text.split(","):
            if ":" not in part:
                raise KernelError(f"kernel entry {part.strip()!r} is not 'displacement:rate'")
            k, r = part.split(":", 1)
            try:
                k = int(k)
                r = float(r)
            except ValueError:
                raise KernelError(f"kernel entry {part.strip()!r} is not numeric") from None
            if k in rates:
                raise KernelError(f"displacement {k} given twice")
            rates[k] = r
        return cls(rates)


def derive_pprime(kernel):
    """Nearest-neighbour comparison kernel.

    With drift ``m = sum k p(k)``: ``p'(1) = max(m, 0)``, ``p'(-1) = max(-m, 0)``
    when ``m != 0``, and ``p'(1) = p'(-1) = 1`` when the kernel is mean zero.
    """
    m = kernel.drift
    if m == 0:
        return JumpKernel({1: 1.0, -1: 1.0})
    return JumpKernel({1: max(m, 0.0), -1: max(-m, 0.0)})
