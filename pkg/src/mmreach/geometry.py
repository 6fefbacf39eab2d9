"""Extended-real vectors, hyperrectangles and the orders used on them.

Vectors are plain read-only ``float64`` arrays; ``-inf``/``inf`` encode
unbounded extents.  Rectangles are closed: boundary points are inside.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NotARectangleError


def ext_vector(values, allow_empty=False):
    """Return ``values`` as an immutable extended-real vector.

    NaN entries are rejected; ``inf`` and ``-inf`` are allowed.
    """
    arr = np.array(values, dtype=float).reshape(-1)
    if arr.size == 0 and not allow_empty:
        raise DimensionError("extended-real vectors must have length > 0")
    if np.isnan(arr).any():
        raise ValueError("NaN is not an extended real")
    arr.setflags(write=False)
    return arr


def _same_length(u, v):
    if u.shape[-1] != v.shape[-1]:
        raise DimensionError(f"length mismatch: {u.shape[-1]} vs {v.shape[-1]}")


@dataclass(frozen=True, eq=False)
class HyperRect:
    """Closed extended hyperrectangle ``[lo, hi]``.

    Zero-dimensional rectangles are permitted so that systems without a
    disturbance input can carry an (empty) disturbance box.
    """

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = ext_vector(self.lo, allow_empty=True)
        hi = ext_vector(self.hi, allow_empty=True)
        _same_length(lo, hi)
        if np.any(lo > hi):
            i = int(np.argmax(lo > hi))
            raise NotARectangleError(f"lo > hi in coordinate {i + 1}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_bounds(cls, bounds):
        """Build from a list of ``(lo, hi)`` pairs."""
        bounds = list(bounds)
        return cls([b[0] for b in bounds], [b[1] for b in bounds])

    @classmethod
    def parse(cls, text, allow_infinite=False):
        """Parse the literal ``"[a,b]x[c,d]x..."`` syntax."""
        compact = re.sub(r"\s+", "", text)
        pieces = re.findall(r"\[([^\[\]]*)\]", compact)
        rebuilt = "x".join(f"[{p}]" for p in pieces)
        if not pieces or rebuilt != compact:
            raise ValueError(f"cannot parse rectangle {text!r}")
        bounds = []
        for p in pieces:
            parts = p.replace(" ", "").split(",")
            if len(parts) != 2:
                raise ValueError(f"interval needs two endpoints: [{p}]")
            bounds.append(tuple(float(s) for s in parts))
        rect = cls.from_bounds(bounds)
        if not allow_infinite and not rect.is_finite():
            raise ValueError("infinite bounds only allowed in domain blocks")
        return rect

    @classmethod
    def full(cls, n):
        return cls(np.full(n, -np.inf), np.full(n, np.inf))

    @property
    def dim(self):
        return self.lo.shape[0]

    def is_finite(self):
        return bool(np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi)))

    def widths(self):
        return self.hi - self.lo

    def center(self):
        return 0.5 * (self.lo + self.hi)

    def volume(self):
        return float(np.prod(self.widths()))

    def inflate(self, amount):
        """Grow every side by ``amount`` (negative values shrink)."""
        lo, hi = self.lo - amount, self.hi + amount
        if np.any(lo > hi):
            raise NotARectangleError("deflation larger than half-width")
        return HyperRect(lo, hi)

    def clip(self, other):
        """Intersection with ``other`` (used to bound infinite domains)."""
        _same_length(self.lo, other.lo)
        return HyperRect(np.maximum(self.lo, other.lo), np.minimum(self.hi, other.hi))

    def to_dict(self):
        return {"lo": [float(v) for v in self.lo], "hi": [float(v) for v in self.hi]}

    def __eq__(self, other):
        if not isinstance(other, HyperRect):
            return NotImplemented
        return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    def __repr__(self):
        body = "x".join(f"[{a:g},{b:g}]" for a, b in zip(self.lo, self.hi))
        return f"HyperRect({body})"


@dataclass(frozen=True, eq=False)
class EmbeddingPoint:
    """State ``(x, xhat)`` of the 2n-dimensional embedding system."""

    x: np.ndarray
    xhat: np.ndarray

    def __post_init__(self):
        x, xhat = ext_vector(self.x), ext_vector(self.xhat)
        _same_length(x, xhat)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xhat))):
            raise ValueError("embedding points must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xhat", xhat)

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=float).reshape(-1)
        if a.size % 2:
            raise DimensionError("embedding state must have even length")
        n = a.size // 2
        return cls(a[:n], a[n:])

    @classmethod
    def from_rect(cls, rect):
        return cls(rect.lo, rect.hi)

    @classmethod
    def diagonal(cls, p):
        return cls(p, p)

    @property
    def dim(self):
        return self.x.shape[0]

    def as_array(self):
        return np.concatenate([self.x, self.xhat])

    def in_triangle(self):
        return bool(np.all(self.x <= self.xhat))

    def __eq__(self, other):
        if not isinstance(other, EmbeddingPoint):
            return NotImplemented
        return np.array_equal(self.x, other.x) and np.array_equal(self.xhat, other.xhat)

    def __repr__(self):
        return f"EmbeddingPoint(x={self.x.tolist()}, xhat={self.xhat.tolist()})"


def cw_leq(u, v):
    """Componentwise order ``u <= v``."""
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    _same_length(u, v)
    return bool(np.all(u <= v))


def se_leq(a, b, tol=0.0):
    """Southeast order: ``a.x <= b.x`` and ``b.xhat <= a.xhat``.

    ``tol`` is an absolute slack applied to every inequality.
    """
    _same_length(a.x, b.x)
    return bool(np.all(a.x <= b.x + tol) and np.all(b.xhat <= a.xhat + tol))


def se_leq_tol(a, b, tol):
    return se_leq(a, b, tol)


def rect_of(a):
    """The rectangle ``[a.x, a.xhat]``; requires ``a`` in the upper triangle."""
    bad = np.nonzero(a.x > a.xhat)[0]
    if bad.size:
        raise NotARectangleError(f"x > xhat in coordinate {int(bad[0]) + 1}")
    return HyperRect(a.x, a.xhat)


def rect_subset(r1, r2):
    """True iff ``r1`` is contained in ``r2``."""
    _same_length(r1.lo, r2.lo)
    return bool(np.all(r2.lo <= r1.lo) and np.all(r1.hi <= r2.hi))


def contains(r, p, tol=0.0):
    """Closed-rectangle membership, optionally with absolute slack."""
    p = np.asarray(p, dtype=float)
    _same_length(r.lo, p)
    return bool(np.all(r.lo - tol <= p) and np.all(p <= r.hi + tol))


def contains_many(r, pts, tol=0.0):
    """Vectorised :func:`contains` over the leading axes of ``pts``."""
    pts = np.asarray(pts, dtype=float)
    _same_length(r.lo, pts)
    return np.all((r.lo - tol <= pts) & (pts <= r.hi + tol), axis=-1)
