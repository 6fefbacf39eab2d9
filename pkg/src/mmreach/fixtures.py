"""Built-in systems with hand-written decomposition functions.

Every fixture carries its polynomial field, so the piecewise construction in
:mod:`mmreach.decompose` can be compared against the hand-written forms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .decompose import JacobianBounds, SelectionFlags, build_jacobian_decomposition, build_monotone_decomposition
from .geometry import EmbeddingPoint, HyperRect
from .polynomial import PolyExpr
from .system import DecompositionFn, SystemDef


def sq_table(a, b):
    """Three-piece decomposition of ``s**2``: nondecreasing in ``a``, nonincreasing in ``b``."""
    return np.where(
        (a >= 0) & (a >= -b), a * a,
        np.where((b <= 0) & (a < -b), b * b, a * b),
    )


def sq_guards(a, b):
    return [a, b, a + b]


def ell(a, b, c):
    """Piecewise stand-in for ``a * b**2``, nonincreasing in ``b`` and nondecreasing in ``c``."""
    case1 = ((a >= 0) & (0 >= b) & (b <= -c)) | ((b >= 0) & (0 > a) & (b >= -c))
    case2 = ((a >= 0) & (c >= 0) & (b > -c)) | ((a < 0) & (c <= 0) & (b < -c))
    return np.where(case1, a * b * b, np.where(case2, a * c * c, a * b * c))


@dataclass
class Fixture:
    name: str
    system: SystemDef
    forward: dict = field(default_factory=dict)
    backward: dict = field(default_factory=dict)
    description: str = ""
    defaults: dict = field(default_factory=dict)

    def decomposition(self, backward=False, which=None):
        table = self.backward if backward else self.forward
        if not table:
            raise KeyError(
                f"fixture {self.name} has no {'backward' if backward else 'forward'} decomposition"
            )
        key = which or next(iter(table))
        return table[key]

    def target_system(self, backward=False):
        return self.system.backward() if backward else self.system

    def catalog_entry(self):
        s = self.system
        return {
            "name": self.name,
            "n": s.n,
            "m": s.m,
            "domain": s.domain.to_dict(),
            "dist_box": s.dist_box.to_dict(),
            "forward": list(self.forward),
            "backward": list(self.backward),
            "description": self.description,
        }


def _poly(n, m, rows):
    return [PolyExpr.from_terms(n, m, [{"coeff": c, "exponents": e} for c, e in r]) for r in rows]


def _full(n):
    return HyperRect.full(n)


def example1():
    # x1dot = x2^2 + 2, x2dot = x1 ; no disturbance
    exprs = _poly(2, 0, [[(1, (0, 2)), (2, (0, 0))], [(1, (1, 0))]])
    sys = SystemDef.from_polynomial(exprs, _full(2), HyperRect([], []), name="example1")

    def d(x, w, xh, wh):
        return np.stack([sq_table(x[..., 1], xh[..., 1]) + 2.0, x[..., 0] + 0 * xh[..., 0]], axis=-1)

    def guards(x, w, xh, wh):
        return np.stack(sq_guards(x[..., 1], xh[..., 1]), axis=-1)

    dpw = DecompositionFn(d, 2, 0, "user-supplied", guards=guards, label="example1:piecewise")

    restricted = sys.with_domain(HyperRect([-5.0, -5.0], [5.0, 5.0]))
    bounds = JacobianBounds(
        jx_lo=[[0.0, -10.0], [0.0, 0.0]],
        jx_hi=[[0.0, 10.0], [1.0, 0.0]],
        jw_lo=np.zeros((2, 0)),
        jw_hi=np.zeros((2, 0)),
    )
    flags = SelectionFlags([[0, 1], [1, 0]], np.zeros((2, 0), dtype=int))
    djac = build_jacobian_decomposition(restricted, bounds, flags)
    return Fixture(
        "example1", sys,
        forward={"piecewise": dpw, "jacobian": djac},
        description="x1' = x2^2 + 2, x2' = x1 on R^2; jacobian decomposition valid on [-5,5]^2",
        defaults={
            "x0": HyperRect([-0.5, -0.5], [0.5, 0.5]), "T": 1.0,
            "jacobian_domain": restricted.domain,
        },
    )


def example2():
    exprs = _poly(2, 1, [
        [(-1, (1, 0, 0)), (-1, (3, 0, 0)), (-1, (0, 1, 0)), (-1, (0, 0, 1))],
        [(-1, (0, 1, 0)), (-1, (0, 3, 0)), (1, (1, 0, 0)), (1, (0, 0, 3))],
    ])
    sys = SystemDef.from_polynomial(exprs, _full(2), HyperRect([-2.0], [2.0]), name="example2")

    def d(x, w, xh, wh):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([
            -x1 - x1**3 - xh[..., 1] - wh[..., 0],
            -x2 - x2**3 + x1 + w[..., 0] ** 3,
        ], axis=-1)

    return Fixture(
        "example2", sys,
        forward={"given": DecompositionFn(d, 2, 1, "user-supplied", label="example2:given")},
        description="x1' = -x1 - x1^3 - x2 - w, x2' = -x2 - x2^3 + x1 + w^3, W = [-2, 2]",
        defaults={
            "x0": HyperRect([-0.1, -0.1], [0.1, 0.1]), "T": 3.0,
            "start": EmbeddingPoint([-5.0, -5.0], [5.0, 5.0]),
            "guess": EmbeddingPoint([-1.0, -2.0], [1.0, 2.0]),
        },
    )


def example3():
    exprs = _poly(2, 1, [
        [(1, (1, 1, 0)), (1, (0, 0, 1))],
        [(1, (1, 0, 0)), (1, (0, 0, 0))],
    ])
    sys = SystemDef.from_polynomial(exprs, _full(2), HyperRect([0.0], [0.25]), name="example3")

    def D(x, w, xh, wh):
        x1 = x[..., 0]
        d1 = np.where(x1 >= 0, -x1 * xh[..., 1], -x1 * x[..., 1]) - wh[..., 0]
        return np.stack([d1, -xh[..., 0] - 1.0], axis=-1)

    def guards(x, w, xh, wh):
        return x[..., :1]

    return Fixture(
        "example3", sys,
        backward={"given": DecompositionFn(D, 2, 1, "user-supplied", guards=guards, label="example3:backward")},
        description="x1' = x1 x2 + w, x2' = x1 + 1, W = [0, 1/4]; decomposition given for -F",
        defaults={"x1": HyperRect([-0.25, -0.5], [0.25, 0.0]), "T": 1.0},
    )


def casestudy():
    exprs = _poly(2, 2, [
        [(-1, (0, 1, 0, 0)), (4, (1, 0, 0, 0)), (-4, (3, 0, 0, 0)), (-1, (1, 2, 0, 0)), (1, (0, 0, 1, 0))],
        [(1, (1, 0, 0, 0)), (4, (0, 1, 0, 0)), (-4, (0, 3, 0, 0)), (-1, (2, 1, 0, 0)), (1, (0, 0, 0, 1))],
    ])
    sys = SystemDef.from_polynomial(
        exprs, _full(2), HyperRect([-0.75, -0.75], [0.75, 0.75]), name="casestudy"
    )

    def d(x, w, xh, wh):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([
            -xh[..., 1] + 4 * x1 - 4 * x1**3 - ell(x1, x2, xh[..., 1]) + w[..., 0],
            x1 + 4 * x2 - 4 * x2**3 - ell(x2, x1, xh[..., 0]) + w[..., 1],
        ], axis=-1)

    def D(x, w, xh, wh):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([
            x2 - 4 * x1 + 4 * x1**3 - ell(-x1, x2, xh[..., 1]) - wh[..., 0],
            -xh[..., 0] - 4 * x2 + 4 * x2**3 - ell(-x2, x1, xh[..., 0]) - wh[..., 1],
        ], axis=-1)

    def guards(x, w, xh, wh):
        x1, x2, y1, y2 = x[..., 0], x[..., 1], xh[..., 0], xh[..., 1]
        return np.stack([x1, x2, y1, y2, x2 + y2, x1 + y1], axis=-1)

    return Fixture(
        "casestudy", sys,
        forward={"given": DecompositionFn(d, 2, 2, "user-supplied", guards=guards, label="casestudy:forward")},
        backward={"given": DecompositionFn(D, 2, 2, "user-supplied", guards=guards, label="casestudy:backward")},
        description="planar limit-cycle system with W = [-3/4, 3/4]^2",
        defaults={
            "x0": HyperRect([-0.1, -0.1], [0.1, 0.1]), "T": 1.0,
            "start": EmbeddingPoint([-3.0, -3.0], [3.0, 3.0]),
            "guess": EmbeddingPoint([-1.3, -1.3], [1.3, 1.3]),
            "backward_flow_start": EmbeddingPoint([-0.5, -0.5], [0.5, 0.5]),
            "backward_guess": EmbeddingPoint([-0.6, -0.6], [0.6, 0.6]),
        },
    )


def scalar_linear():
    exprs = _poly(1, 1, [[(-1, (1, 0)), (1, (0, 1))]])
    sys = SystemDef.from_polynomial(exprs, _full(1), HyperRect([-1.0], [1.0]), name="scalar")
    return Fixture(
        "scalar", sys, forward={"monotone": build_monotone_decomposition(sys)},
        description="x' = -x + w, W = [-1, 1] (monotone)",
        defaults={"start": EmbeddingPoint([-3.0], [3.0]), "guess": EmbeddingPoint([0.0], [0.0]),
                  "x0": HyperRect([-0.5], [0.5]), "T": 1.0},
    )


def coop_linear():
    exprs = _poly(2, 2, [
        [(-1, (1, 0, 0, 0)), (0.5, (0, 1, 0, 0)), (1, (0, 0, 1, 0))],
        [(0.5, (1, 0, 0, 0)), (-1, (0, 1, 0, 0)), (1, (0, 0, 0, 1))],
    ])
    sys = SystemDef.from_polynomial(exprs, _full(2), HyperRect([0.0, 0.0], [1.0, 1.0]), name="coop")
    return Fixture(
        "coop", sys, forward={"monotone": build_monotone_decomposition(sys)},
        description="x' = A x + w with A = [[-1, 0.5], [0.5, -1]], W = [0, 1]^2 (cooperative)",
        defaults={"start": EmbeddingPoint([-1.0, -1.0], [4.0, 4.0]),
                  "guess": EmbeddingPoint([0.1, 0.1], [1.0, 1.0]),
                  "x0": HyperRect([0.0, 0.0], [0.5, 0.5]), "T": 1.0},
    )


BUILDERS = {
    "example1": example1,
    "example2": example2,
    "example3": example3,
    "casestudy": casestudy,
    "scalar": scalar_linear,
    "coop": coop_linear,
}


def get_fixture(name):
    try:
        return BUILDERS[name]()
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; choose from {', '.join(BUILDERS)}") from None


def list_fixtures():
    return [BUILDERS[k]().catalog_entry() for k in BUILDERS]
