"""Constructors for decomposition functions.

Four routes are provided:

* :func:`build_jacobian_decomposition` from entrywise Jacobian bounds,
* :func:`build_monotone_decomposition` for monotone fields (``d = F``),
* :func:`build_backward_decomposition` for ``xdot = -F`` from a forward ``d``,
* :func:`build_polynomial_decomposition`, a monomial-by-monomial piecewise
  construction for polynomial fields.

The polynomial route supports a fixed menu of term shapes per row ``i``:
terms in ``x_i`` alone, terms whose off-diagonal partials have fixed sign on
the domain, and terms ``c * x_i**p * v**q`` with a single off-diagonal
variable ``v`` and ``q`` odd or ``q == 2``.  Anything else raises
:class:`~mmreach.errors.UnsupportedMonomialError`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConstructionError, PreconditionError, UnsupportedMonomialError
from .polynomial import PolyExpr
from .system import DecompositionFn, SamplingPlan, draw_samples, partials


# --------------------------------------------------------------------------
# Jacobian-bound construction
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class JacobianBounds:
    """Entrywise bounds ``jx_lo <= dF/dx <= jx_hi`` and ``jw_lo <= dF/dw <= jw_hi``.

    Diagonal entries of the state bounds are ignored.
    """

    jx_lo: np.ndarray
    jx_hi: np.ndarray
    jw_lo: np.ndarray
    jw_hi: np.ndarray

    def __post_init__(self):
        jx_lo = np.array(self.jx_lo, dtype=float, ndmin=2)
        jx_hi = np.array(self.jx_hi, dtype=float, ndmin=2)
        n = jx_lo.shape[0]
        jw_lo = np.array(self.jw_lo, dtype=float).reshape(n, -1)
        jw_hi = np.array(self.jw_hi, dtype=float).reshape(n, -1)
        if jx_lo.shape != (n, n) or jx_hi.shape != (n, n) or jw_lo.shape != jw_hi.shape:
            raise ConstructionError("inconsistent Jacobian bound shapes")
        off = ~np.eye(n, dtype=bool)
        if np.any(jx_lo[off] > 0) or np.any(jx_hi[off] < 0):
            raise ConstructionError("state bounds must satisfy jx_lo <= 0 <= jx_hi off the diagonal")
        if np.any(jw_lo > 0) or np.any(jw_hi < 0):
            raise ConstructionError("disturbance bounds must satisfy jw_lo <= 0 <= jw_hi")
        if np.any(np.isinf(jx_lo[off]) & np.isinf(jx_hi[off])):
            raise ConstructionError("some off-diagonal state entry is unbounded on both sides")
        if np.any(np.isinf(jw_lo) & np.isinf(jw_hi)):
            raise ConstructionError("some disturbance entry is unbounded on both sides")
        for name, val in (("jx_lo", jx_lo), ("jx_hi", jx_hi), ("jw_lo", jw_lo), ("jw_hi", jw_hi)):
            object.__setattr__(self, name, val)

    @property
    def n(self):
        return self.jx_lo.shape[0]

    @property
    def m(self):
        return self.jw_lo.shape[1]


@dataclass(frozen=True, eq=False)
class SelectionFlags:
    """Binary choices: ``0`` uses the lower bound, ``1`` the upper bound."""

    delta: np.ndarray
    epsilon: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "delta", np.array(self.delta, dtype=int, ndmin=2))
        object.__setattr__(self, "epsilon", np.array(self.epsilon, dtype=int, ndmin=2))


def default_flags(b):
    """Pick each flag from the bounded side; on two finite sides take the smaller slope.

    Exact ties go to the lower bound (flag 0).
    """

    def choose(lo, hi):
        flags = np.zeros(lo.shape, dtype=int)
        flags[np.isinf(lo)] = 1
        both = np.isfinite(lo) & np.isfinite(hi)
        flags[both & (np.abs(lo) > hi)] = 1
        return flags

    delta = choose(b.jx_lo, b.jx_hi)
    np.fill_diagonal(delta, 0)
    return SelectionFlags(delta, choose(b.jw_lo, b.jw_hi))


def _check_flags(b, flags):
    n, m = b.n, b.m
    if flags.delta.shape != (n, n) or flags.epsilon.reshape(n, -1).shape != (n, m):
        raise ConstructionError("flag shapes do not match the Jacobian bounds")
    eps = flags.epsilon.reshape(n, m)
    off = ~np.eye(n, dtype=bool)
    for (i, j) in zip(*np.nonzero(off)):
        if flags.delta[i, j] == 0 and np.isinf(b.jx_lo[i, j]):
            raise ConstructionError(f"delta[{i + 1},{j + 1}] = 0 needs a finite lower bound")
        if flags.delta[i, j] == 1 and np.isinf(b.jx_hi[i, j]):
            raise ConstructionError(f"delta[{i + 1},{j + 1}] = 1 needs a finite upper bound")
    for i in range(n):
        for k in range(m):
            if eps[i, k] == 0 and np.isinf(b.jw_lo[i, k]):
                raise ConstructionError(f"epsilon[{i + 1},{k + 1}] = 0 needs a finite lower bound")
            if eps[i, k] == 1 and np.isinf(b.jw_hi[i, k]):
                raise ConstructionError(f"epsilon[{i + 1},{k + 1}] = 1 needs a finite upper bound")
    return eps


def build_jacobian_decomposition(sys, b, flags=None):
    """Decomposition from Jacobian bounds.

    Row ``i`` evaluates ``F_i`` at a corner that mixes ``x``/``xhat`` (and
    ``w``/``what``) per the flags, then adds linear slope corrections so the
    off-diagonal and disturbance partials get the required signs.
    """
    if (b.n, b.m) != (sys.n, sys.m):
        raise ConstructionError("Jacobian bounds do not match the system dimensions")
    flags = flags if flags is not None else default_flags(b)
    eps = _check_flags(b, flags)
    n, m = sys.n, sys.m
    hat_x = flags.delta.astype(bool) & ~np.eye(n, dtype=bool)
    hat_w = eps.astype(bool)
    alpha = np.where(hat_x, b.jx_hi, -b.jx_lo)
    np.fill_diagonal(alpha, 0.0)
    alpha = np.where(np.isfinite(alpha), alpha, 0.0)
    beta = np.where(hat_w, b.jw_hi, -b.jw_lo)
    beta = np.where(np.isfinite(beta), beta, 0.0)
    F = sys.field

    def func(x, w, xh, wh):
        x, w = np.asarray(x, dtype=float), np.asarray(w, dtype=float)
        xh, wh = np.asarray(xh, dtype=float), np.asarray(wh, dtype=float)
        rows = []
        for i in range(n):
            xi = np.where(hat_x[i], xh, x)
            pi = np.where(hat_w[i], wh, w) if m else w
            val = F(xi, pi)[..., i] + (x - xh) @ alpha[i]
            if m:
                val = val + (w - wh) @ beta[i]
            rows.append(val)
        return np.stack(rows, axis=-1)

    return DecompositionFn(
        func, n, m, "jacobian-bound",
        label=f"jacobian({sys.name})",
        meta={"alpha": alpha.tolist(), "beta": beta.tolist(),
              "delta": flags.delta.tolist(), "epsilon": eps.tolist()},
    )


def build_monotone_decomposition(sys):
    """``d(x, w, xhat, what) = F(x, w)``; only valid for monotone fields."""
    F = sys.field
    return DecompositionFn(
        lambda x, w, xh, wh: F(x, w), sys.n, sys.m, "monotone", label=f"monotone({sys.name})"
    )


def build_backward_decomposition(d, sys, plan=None):
    """``D(x, w, xhat, what) = -d(xhat, what, x, w)`` for ``xdot = -F``.

    Requires ``d_i`` nondecreasing in ``x_i``; this is checked by sampling
    and a violation raises :class:`PreconditionError`.
    """
    plan = plan or SamplingPlan(samples=2000)
    x, w, xh, wh = draw_samples(sys, plan)
    dx = partials(d, (x, w, xh, wh), plan.h_rel)[0]
    diag = np.einsum("sii->si", dx)
    bad = np.argwhere(diag < -plan.tol_sign)
    if bad.size:
        s, i = (int(v) for v in bad[0])
        raise PreconditionError(
            f"d_{i + 1} decreases in x_{i + 1} (slope {diag[s, i]:.3g}) at "
            f"x={x[s].tolist()}, w={w[s].tolist()}, xhat={xh[s].tolist()}, what={wh[s].tolist()}"
        )

    def func(x, w, xh, wh):
        return -d(xh, wh, x, w)

    guards = None
    if d.guards is not None:
        g = d.guards
        guards = lambda x, w, xh, wh: g(xh, wh, x, w)  # noqa: E731
    return DecompositionFn(
        func, d.n, d.m, "backward-derived", guards=guards, label=f"backward({d.label})"
    )


# --------------------------------------------------------------------------
# Piecewise polynomial construction
# --------------------------------------------------------------------------


def _slots(x, w, xh, wh):
    """Concatenate state and disturbance slots into ``(v, vhat)``."""
    x, w = np.asarray(x, dtype=float), np.asarray(w, dtype=float)
    xh, wh = np.asarray(xh, dtype=float), np.asarray(wh, dtype=float)
    if w.shape[-1] == 0:
        return x, xh
    shape = np.broadcast_shapes(x.shape[:-1], w.shape[:-1], xh.shape[:-1], wh.shape[:-1])
    b = lambda a: np.broadcast_to(a, shape + a.shape[-1:])  # noqa: E731
    return (np.concatenate([b(x), b(w)], axis=-1), np.concatenate([b(xh), b(wh)], axis=-1))


@dataclass(frozen=True)
class SlotMonomial:
    """``coeff * prod(v_k ** e_k)`` with every variable read from a fixed slot."""

    coeff: float
    exponents: tuple
    hat: tuple

    def __call__(self, v, vh):
        out = np.full(v.shape[:-1], self.coeff)
        for k, (e, h) in enumerate(zip(self.exponents, self.hat)):
            if e:
                out = out * (vh[..., k] if h else v[..., k]) ** e
        return out


@dataclass(frozen=True)
class Piece:
    label: str
    guard: Callable
    value: Callable


@dataclass(frozen=True)
class CaseTable:
    """Piecewise replacement for one monomial of one row.

    ``pieces`` are tried in order; their guards are meant to partition the
    argument space.  ``boundaries`` returns the scalar quantities whose zero
    sets separate the pieces.
    """

    row: int
    coeff: float
    exponents: tuple
    pieces: tuple
    boundaries: Callable
    label: str = ""

    def active(self, v, vh):
        return np.stack([np.broadcast_to(p.guard(v, vh), v.shape[:-1]) for p in self.pieces])

    def __call__(self, v, vh):
        conds = [np.broadcast_to(p.guard(v, vh), v.shape[:-1]) for p in self.pieces]
        vals = [np.broadcast_to(p.value(v, vh), v.shape[:-1]) for p in self.pieces]
        return np.select(conds, vals, default=np.nan)


def square_table_pieces(a, b):
    """Pieces for a decomposition of ``s**2`` increasing in ``a`` and decreasing in ``b``.

    ``a`` and ``b`` map slots to the arguments.  On ``a == b`` every piece
    reduces to ``a**2``.
    """
    return (
        ("a^2", lambda v, vh: (a(v, vh) >= 0) & (a(v, vh) >= -b(v, vh)), lambda v, vh: a(v, vh) ** 2),
        ("b^2", lambda v, vh: (b(v, vh) <= 0) & (a(v, vh) < -b(v, vh)), lambda v, vh: b(v, vh) ** 2),
        ("a*b", lambda v, vh: (a(v, vh) < 0) & (b(v, vh) > 0), lambda v, vh: a(v, vh) * b(v, vh)),
    )


def _sign_split_table(row, coeff, exps, diag, var, names):
    """Table for ``coeff * x_i**p * v**q`` with ``q`` odd or ``q == 2``."""
    p, q = exps[diag], exps[var]

    def scale(v, vh):
        return coeff * v[..., diag] ** p if p else np.full(v.shape[:-1], coeff)

    def lo(v, vh):
        return v[..., var]

    def hi(v, vh):
        return vh[..., var]

    pieces = []
    if q % 2:
        pieces.append(Piece(f"s>=0: {names[var]}", lambda v, vh: scale(v, vh) >= 0,
                            lambda v, vh: scale(v, vh) * lo(v, vh) ** q))
        pieces.append(Piece(f"s<0: {names[var]}^", lambda v, vh: scale(v, vh) < 0,
                            lambda v, vh: scale(v, vh) * hi(v, vh) ** q))
    else:
        for sgn, (a, b) in ((1, (lo, hi)), (-1, (hi, lo))):
            for lab, g, val in square_table_pieces(a, b):
                if sgn > 0:
                    guard = lambda v, vh, g=g: (scale(v, vh) >= 0) & g(v, vh)
                else:
                    guard = lambda v, vh, g=g: (scale(v, vh) < 0) & g(v, vh)
                pieces.append(Piece(f"{'s>=0' if sgn > 0 else 's<0'}: {lab}", guard,
                                    lambda v, vh, val=val: scale(v, vh) * val(v, vh)))

    def boundaries(v, vh):
        qs = [v[..., var], vh[..., var]]
        if q == 2:
            qs.append(v[..., var] + vh[..., var])
        if p:
            qs.append(v[..., diag])
        return qs

    if not p and q % 2 == 0:
        # constant scale: the sign split is vacuous, keep only the live half
        keep = "s>=0" if coeff >= 0 else "s<0"
        pieces = [pc for pc in pieces if pc.label.startswith(keep)]

    return CaseTable(row, coeff, tuple(exps), tuple(pieces), boundaries,
                     label=f"row {row + 1}: {coeff:g}*" + "*".join(
                         f"{nm}^{e}" if e > 1 else nm for nm, e in zip(names, exps) if e))


def _classify(row, coeff, exps, box_lo, box_hi, names):
    nv = len(exps)
    others = [k for k, e in enumerate(exps) if e and k != row]
    if not others:
        return SlotMonomial(coeff, tuple(exps), (False,) * nv)
    n_state = sum(1 for nm in names if nm.startswith("x"))
    mono = PolyExpr(n_state, nv - n_state, {tuple(exps): coeff})
    hat = [False] * nv
    definite = True
    for k in others:
        lo, hi = mono.partial(k).interval(box_lo, box_hi)
        if lo >= 0:
            hat[k] = False
        elif hi <= 0:
            hat[k] = True
        else:
            definite = False
            break
    if definite:
        return SlotMonomial(coeff, tuple(exps), tuple(hat))
    if len(others) == 1:
        var = others[0]
        q = exps[var]
        if q % 2 or q == 2:
            return _sign_split_table(row, coeff, exps, row, var, names)
    raise UnsupportedMonomialError(row, exps, coeff, names)


def build_polynomial_decomposition(sys, domain=None):
    """Piecewise decomposition assembled term by term from ``sys.field_expr``.

    ``domain`` (default ``sys.domain``) is the box over which term
    monotonicity is decided by interval evaluation of partial derivatives.
    """
    if sys.field_expr is None:
        raise ConstructionError("polynomial decomposition needs a polynomial field")
    domain = domain or sys.domain
    box_lo = np.concatenate([domain.lo, sys.dist_box.lo])
    box_hi = np.concatenate([domain.hi, sys.dist_box.hi])
    names = sys.field_expr[0].names
    rows = []
    for i, expr in enumerate(sys.field_expr):
        rows.append([_classify(i, c, e, box_lo, box_hi, names) for e, c in expr.terms.items()])
    n, m = sys.n, sys.m
    tables = [t for r in rows for t in r if isinstance(t, CaseTable)]

    def func(x, w, xh, wh):
        v, vh = _slots(x, w, xh, wh)
        out = []
        for terms in rows:
            acc = np.zeros(v.shape[:-1])
            for t in terms:
                acc = acc + t(v, vh)
            out.append(acc)
        return np.stack(out, axis=-1)

    def guards(x, w, xh, wh):
        v, vh = _slots(x, w, xh, wh)
        return np.stack([q for t in tables for q in t.boundaries(v, vh)], axis=-1)

    return DecompositionFn(
        func, n, m, "polynomial-piecewise", guards=guards if tables else None,
        label=f"polynomial({sys.name})",
        meta={"rows": rows, "tables": tables},
    )


def describe_terms(d):
    """Readable per-row summary of a polynomial-piecewise decomposition."""
    out = []
    for i, terms in enumerate(d.meta.get("rows", [])):
        parts = []
        for t in terms:
            if isinstance(t, CaseTable):
                parts.append("{" + "; ".join(p.label for p in t.pieces) + "}")
            else:
                parts.append(f"{t.coeff:g}*" + "*".join(
                    f"v{k + 1}{'^' if h else ''}**{e}" for k, (e, h) in enumerate(zip(t.exponents, t.hat)) if e
                ))
        out.append(f"d{i + 1} = " + " + ".join(parts))
    return out
