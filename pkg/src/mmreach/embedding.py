"""Embedding systems built from a decomposition function, and their flows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError
from .geometry import EmbeddingPoint, contains
from .integrate import (
    DisturbanceSignal,
    IntegratorConfig,
    integrate,
    integrate_segments,
)
from .system import DecompositionFn, SystemDef


def _as_state(a):
    return a.as_array() if isinstance(a, EmbeddingPoint) else np.asarray(a, dtype=float)


@dataclass(frozen=True, eq=False)
class EmbeddingSystem:
    """Deterministic embedding ``e(x, xhat) = (d(x, wlo, xhat, whi), d(xhat, whi, x, wlo))``."""

    system: SystemDef
    decomposition: DecompositionFn

    @property
    def n(self):
        return self.system.n

    def eval_e(self, a):
        a = _as_state(a)
        n = self.n
        x, xh = a[..., :n], a[..., n:]
        wl, wh = self.system.w_lo, self.system.w_hi
        d = self.decomposition
        return np.concatenate([d(x, wl, xh, wh), d(xh, wh, x, wl)], axis=-1)

    __call__ = eval_e

    def rhs(self, t, a):
        return self.eval_e(a)

    def domain_bounds(self):
        dom = self.system.domain
        return np.concatenate([dom.lo, dom.lo]), np.concatenate([dom.hi, dom.hi])


@dataclass(frozen=True, eq=False)
class NondetEmbedding:
    """Embedding with free disturbance pair: ``(d(x, w, xhat, what), d(xhat, what, x, w))``."""

    system: SystemDef
    decomposition: DecompositionFn

    @property
    def n(self):
        return self.system.n

    def eval_eps(self, a, w, what):
        a = _as_state(a)
        n = self.n
        x, xh = a[..., :n], a[..., n:]
        d = self.decomposition
        return np.concatenate([d(x, w, xh, what), d(xh, what, x, w)], axis=-1)

    __call__ = eval_eps


def make_embedding(sys, d):
    if (d.n, d.m) != (sys.n, sys.m):
        raise DimensionError(
            f"decomposition is ({d.n}, {d.m}) but system is ({sys.n}, {sys.m})"
        )
    return EmbeddingSystem(sys, d)


def make_nondet_embedding(sys, d):
    if (d.n, d.m) != (sys.n, sys.m):
        raise DimensionError("decomposition and system dimensions differ")
    return NondetEmbedding(sys, d)


def flow_embedding(E, a0, T, cfg=None):
    """Approximate ``Phi^e(t; a0)`` on ``[0, T]``.

    The trajectory is truncated with ``exit_flag == "left_domain"`` if the
    embedding state leaves ``X x X``.
    """
    cfg = cfg or IntegratorConfig()
    a0 = _as_state(a0)
    lo, hi = E.domain_bounds()
    if not (np.all(a0 >= lo) and np.all(a0 <= hi)):
        raise DomainError("initial embedding state is outside X x X")
    return integrate(E.rhs, a0, T, cfg, domain=(lo, hi))


def flow_system(sys, x0, w, T, cfg=None):
    """Approximate ``Phi^F(t; x0, w)`` on ``[0, T]`` for a piecewise-constant ``w``."""
    cfg = cfg or IntegratorConfig()
    x0 = np.asarray(x0, dtype=float)
    if not contains(sys.domain, x0):
        raise DomainError(f"x0={x0.tolist()} is outside the domain")
    if w is None:
        w = DisturbanceSignal.constant(np.zeros(sys.m))
    if sys.m and not w.inside(sys.dist_box):
        raise DomainError("disturbance signal leaves the disturbance box")
    F = sys.field
    segments = [(t_end, (lambda t, y, v=v: F(y, v))) for t_end, v in w.pieces(T)]
    if T == 0:
        segments = []
    return integrate_segments(segments, x0, cfg, domain=(sys.domain.lo, sys.domain.hi))


def flow_nondet(eps, a0, w, what, T, cfg=None):
    """Approximate ``Phi^eps(t; a0, (w, what))``; switch times of both signals restart the solver."""
    cfg = cfg or IntegratorConfig()
    a0 = _as_state(a0)
    breaks = sorted(set(t for t in np.concatenate([w.switch_times, what.switch_times]) if 0 < t < T))
    ends = breaks + [float(T)]
    segments = []
    start = 0.0
    for end in ends:
        mid = 0.5 * (start + end)
        wv, whv = w(mid), what(mid)
        segments.append((end, (lambda t, y, a=wv, b=whv: eps(y, a, b))))
        start = end
    dom = eps.system.domain
    lo, hi = np.concatenate([dom.lo, dom.lo]), np.concatenate([dom.hi, dom.hi])
    return integrate_segments(segments if T > 0 else [], a0, cfg, domain=(lo, hi))
