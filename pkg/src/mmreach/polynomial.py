"""Sparse multivariate polynomials over state and disturbance variables.

A :class:`PolyExpr` stores one scalar polynomial in canonical form: a mapping
from exponent tuples (over ``x1..xn, w1..wm``) to nonzero coefficients.
Interval evaluation over extended boxes is used to decide whether a term's
partial derivative has a fixed sign on the domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _mul(a, b):
    # extended-real product with the interval-arithmetic convention 0 * inf = 0
    if a == 0.0 or b == 0.0:
        return 0.0
    return a * b


def interval_mul(x, y):
    prods = [_mul(a, b) for a in x for b in y]
    return min(prods), max(prods)


def interval_pow(x, k):
    lo, hi = x
    if k == 0:
        return 1.0, 1.0
    if k % 2:
        return lo**k, hi**k
    if lo >= 0:
        return lo**k, hi**k
    if hi <= 0:
        return hi**k, lo**k
    return 0.0, max(lo**k, hi**k)


@dataclass(frozen=True)
class PolyExpr:
    """Polynomial in ``n`` state and ``m`` disturbance variables."""

    n: int
    m: int
    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        merged = {}
        for exps, coeff in dict(self.terms).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.n + self.m:
                raise ValueError(
                    f"exponent vector {exps} should have length {self.n + self.m}"
                )
            if any(e < 0 for e in exps):
                raise ValueError(f"negative exponent in {exps}")
            merged[exps] = merged.get(exps, 0.0) + float(coeff)
        canon = {k: v for k, v in sorted(merged.items()) if v != 0.0}
        object.__setattr__(self, "terms", canon)

    @classmethod
    def from_terms(cls, n, m, terms):
        """Build from ``[{"coeff": c, "exponents": [...]}, ...]``, merging like terms."""
        acc = {}
        for t in terms:
            exps = tuple(int(e) for e in t["exponents"])
            acc[exps] = acc.get(exps, 0.0) + float(t["coeff"])
        return cls(n, m, acc)

    def to_terms(self):
        return [{"coeff": c, "exponents": list(e)} for e, c in self.terms.items()]

    @property
    def names(self):
        return [f"x{i + 1}" for i in range(self.n)] + [f"w{k + 1}" for k in range(self.m)]

    def __call__(self, x, w):
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        v = x if self.m == 0 else _stack(x, w)
        return self.eval_vars(v)

    def eval_vars(self, v):
        v = np.asarray(v, dtype=float)
        out = np.zeros(v.shape[:-1])
        for exps, c in self.terms.items():
            t = np.full(v.shape[:-1], c)
            for k, e in enumerate(exps):
                if e:
                    t = t * v[..., k] ** e
            out = out + t
        return out

    def partial(self, k):
        """Derivative with respect to variable index ``k``."""
        out = {}
        for exps, c in self.terms.items():
            e = exps[k]
            if e:
                new = list(exps)
                new[k] = e - 1
                out[tuple(new)] = c * e
        return PolyExpr(self.n, self.m, out)

    def interval(self, lo, hi):
        """Enclosure of the polynomial's range over the box ``[lo, hi]``."""
        total_lo, total_hi = 0.0, 0.0
        for exps, c in self.terms.items():
            rng = (c, c)
            for k, e in enumerate(exps):
                if e:
                    rng = interval_mul(rng, interval_pow((float(lo[k]), float(hi[k])), e))
            # lower ends are never +inf and upper ends never -inf
            total_lo += rng[0]
            total_hi += rng[1]
        return total_lo, total_hi

    def degree(self):
        return max((sum(e) for e in self.terms), default=0)

    def __neg__(self):
        return PolyExpr(self.n, self.m, {e: -c for e, c in self.terms.items()})

    def __add__(self, other):
        if (self.n, self.m) != (other.n, other.m):
            raise ValueError("variable sets differ")
        acc = dict(self.terms)
        for e, c in other.terms.items():
            acc[e] = acc.get(e, 0.0) + c
        return PolyExpr(self.n, self.m, acc)

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for exps, c in self.terms.items():
            mono = "*".join(
                f"{v}^{e}" if e > 1 else v for v, e in zip(self.names, exps) if e
            )
            parts.append(f"{c:g}*{mono}" if mono else f"{c:g}")
        return " + ".join(parts)


def _stack(x, w):
    shape = np.broadcast_shapes(x.shape[:-1], w.shape[:-1])
    x = np.broadcast_to(x, shape + x.shape[-1:])
    w = np.broadcast_to(w, shape + w.shape[-1:])
    return np.concatenate([x, w], axis=-1)
