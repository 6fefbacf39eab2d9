"""System definitions, decomposition functions and sampled validation.

Evaluators are vectorised: a field ``F(x, w)`` receives arrays whose last axis
holds the state (length ``n``) and disturbance (length ``m``) components and
returns an array with trailing length ``n``.  A decomposition function
``d(x, w, xhat, what)`` follows the same convention.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError, DomainError, EvaluationError
from .geometry import HyperRect, contains

PROVENANCES = (
    "user-supplied",
    "jacobian-bound",
    "monotone",
    "polynomial-piecewise",
    "backward-derived",
)


@dataclass(frozen=True, eq=False)
class SystemDef:
    """``xdot = F(x, w)`` on ``domain`` with ``w`` in ``dist_box``."""

    n: int
    m: int
    domain: HyperRect
    dist_box: HyperRect
    field: Callable
    field_expr: Optional[tuple] = None
    name: str = "custom"

    def __post_init__(self):
        if self.domain.dim != self.n:
            raise DimensionError(f"domain has dimension {self.domain.dim}, expected {self.n}")
        if self.dist_box.dim != self.m:
            raise DimensionError(
                f"disturbance box has dimension {self.dist_box.dim}, expected {self.m}"
            )
        if not self.dist_box.is_finite():
            raise ValueError("disturbance box must be finite")
        if self.field_expr is not None:
            exprs = tuple(self.field_expr)
            if len(exprs) != self.n or any((p.n, p.m) != (self.n, self.m) for p in exprs):
                raise DimensionError("field_expr does not match (n, m)")
            object.__setattr__(self, "field_expr", exprs)

    @classmethod
    def from_polynomial(cls, exprs, domain, dist_box, name="custom"):
        exprs = tuple(exprs)
        n, m = exprs[0].n, exprs[0].m

        def field(x, w):
            return np.stack([p(x, w) for p in exprs], axis=-1)

        return cls(n, m, domain, dist_box, field, exprs, name)

    @property
    def w_lo(self):
        return self.dist_box.lo

    @property
    def w_hi(self):
        return self.dist_box.hi

    def __call__(self, x, w):
        return self.field(x, w)

    def backward(self):
        """The backward-time system ``xdot = -F(x, w)``."""
        f = self.field
        exprs = None if self.field_expr is None else tuple(-p for p in self.field_expr)
        name = self.name[: -len(":backward")] if self.name.endswith(":backward") else self.name + ":backward"
        return SystemDef(
            self.n, self.m, self.domain, self.dist_box,
            lambda x, w: -f(x, w), exprs, name,
        )

    def with_domain(self, domain):
        return SystemDef(
            self.n, self.m, domain, self.dist_box, self.field, self.field_expr, self.name
        )

    def describe(self):
        out = {
            "name": self.name,
            "n": self.n,
            "m": self.m,
            "domain": self.domain.to_dict(),
            "dist_box": self.dist_box.to_dict(),
        }
        if self.field_expr is not None:
            out["field"] = [p.to_terms() for p in self.field_expr]
        return out

    def fingerprint(self, extra=None):
        """Stable hash of the system description plus optional extra data."""
        payload = {"system": self.describe(), "extra": extra}
        blob = json.dumps(payload, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class DecompositionFn:
    """A candidate decomposition function ``d(x, w, xhat, what)``.

    ``guards``, when given, maps the same four arguments to an array of
    scalar quantities whose zero sets are the piece boundaries; the validator
    skips samples close to them.
    """

    func: Callable
    n: int
    m: int
    provenance: str = "user-supplied"
    guards: Optional[Callable] = None
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def __call__(self, x, w, xhat, what):
        return self.func(x, w, xhat, what)


def eval_field(sys, x, w):
    """Evaluate ``F(x, w)`` at a single admissible point."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float).reshape(-1)
    if x.shape != (sys.n,) or w.shape != (sys.m,):
        raise DimensionError(f"expected x of length {sys.n} and w of length {sys.m}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
        raise DomainError("inputs must be finite")
    if not contains(sys.domain, x):
        raise DomainError(f"x={x.tolist()} is outside the domain")
    if sys.m and not contains(sys.dist_box, w):
        raise DomainError(f"w={w.tolist()} is outside the disturbance box")
    out = np.asarray(sys(x, w), dtype=float)
    if not np.all(np.isfinite(out)):
        raise EvaluationError(f"non-finite field value at x={x.tolist()}")
    return out


@dataclass
class SamplingPlan:
    """How :func:`validate_decomposition` draws and differentiates samples."""

    samples: int = 10_000
    seed: int = 0
    test_box: Optional[HyperRect] = None
    h_rel: float = 1e-5
    tol_sign: float = 1e-6
    tol_eq: float = 1e-9
    max_recorded: int = 100

    def state_box(self, sys):
        box = self.test_box or HyperRect(np.full(sys.n, -10.0), np.full(sys.n, 10.0))
        return sys.domain.clip(box)


@dataclass
class Violation:
    condition: str
    index: tuple
    sample: dict
    value: float

    def to_dict(self):
        return {
            "condition": self.condition,
            "index": list(self.index),
            "sample": self.sample,
            "value": self.value,
        }


@dataclass
class ValidationReport:
    passed: bool
    samples_checked: int
    violations: list
    violation_count: int = 0
    skipped: int = 0
    assumptions: list = field(default_factory=list)
    condition_counts: dict = field(default_factory=dict)

    def conditions_violated(self):
        return sorted(c for c, k in self.condition_counts.items() if k)

    def to_dict(self):
        return {
            "passed": self.passed,
            "samples_checked": self.samples_checked,
            "skipped": self.skipped,
            "violation_count": self.violation_count,
            "condition_counts": self.condition_counts,
            "violations": [v.to_dict() for v in self.violations],
            "assumptions": self.assumptions,
        }


def _uniform(rng, box, count):
    if box.dim == 0:
        return np.zeros((count, 0))
    return rng.uniform(box.lo, box.hi, size=(count, box.dim))


def draw_samples(sys, plan):
    """Independent uniform draws of ``(x, w, xhat, what)``."""
    rng = np.random.default_rng(plan.seed)
    box = plan.state_box(sys)
    if not box.is_finite():
        raise ValueError("test box must be finite")
    N = plan.samples
    return (
        _uniform(rng, box, N),
        _uniform(rng, sys.dist_box, N),
        _uniform(rng, box, N),
        _uniform(rng, sys.dist_box, N),
    )


def partials(func, args, h_rel=1e-5):
    """Central-difference partials of ``func`` with respect to every input slot.

    Returns a list, one entry per argument, of arrays shaped
    ``(samples, n_out, len(arg))``.
    """
    out = []
    for a_idx, arg in enumerate(args):
        cols = []
        for j in range(arg.shape[-1]):
            h = h_rel * np.maximum(1.0, np.abs(arg[:, j]))
            plus = [a.copy() for a in args]
            minus = [a.copy() for a in args]
            plus[a_idx][:, j] += h
            minus[a_idx][:, j] -= h
            cols.append((func(*plus) - func(*minus)) / (2 * h)[:, None])
        n_out = func(*args).shape[-1]
        out.append(np.stack(cols, axis=-1) if cols else np.zeros((arg.shape[0], n_out, 0)))
    return out


def validate_decomposition(sys, d, plan=None):
    """Sampled falsifier for the decomposition-function conditions.

    Checks the diagonal identity and the sign of central-difference partials
    at independent samples.  Passing is evidence, not proof.
    """
    plan = plan or SamplingPlan()
    if (d.n, d.m) != (sys.n, sys.m):
        raise DimensionError("decomposition and system dimensions differ")
    x, w, xh, wh = draw_samples(sys, plan)
    N = x.shape[0]

    keep = np.ones(N, dtype=bool)
    if d.guards is not None:
        coords = np.concatenate([x, w, xh, wh], axis=1)
        scale = plan.h_rel * np.maximum(1.0, np.abs(coords).max(axis=1))
        g = np.asarray(d.guards(x, w, xh, wh)).reshape(N, -1)
        if g.shape[1]:
            keep = np.min(np.abs(g), axis=1) > 4.0 * scale

    violations = []
    counts = {}

    def record(cond, mask, vals, idx_fn, skip_guarded=True):
        if skip_guarded:
            mask = mask & keep.reshape((-1,) + (1,) * (mask.ndim - 1))
        bad = np.argwhere(mask)
        counts[cond] = len(bad)
        for row in bad[: max(0, plan.max_recorded - len(violations))]:
            s = int(row[0])
            violations.append(
                Violation(
                    cond,
                    idx_fn(row),
                    {
                        "x": x[s].tolist(),
                        "w": w[s].tolist(),
                        "xhat": xh[s].tolist(),
                        "what": wh[s].tolist(),
                    },
                    float(vals[tuple(row)]),
                )
            )

    diag = d(x, w, x, w)
    target = sys(x, w)
    err = np.abs(diag - target)
    record(
        "i-diagonal",
        err > plan.tol_eq * np.maximum(1.0, np.abs(target)),
        err,
        lambda r: (int(r[1]),),
        skip_guarded=False,
    )

    dx, dw, dxh, dwh = partials(d, (x, w, xh, wh), plan.h_rel)
    tol = plan.tol_sign
    off = ~np.eye(sys.n, dtype=bool)[None, :, :]
    record("ii-x", (dx < -tol) & off, dx, lambda r: (int(r[1]), int(r[2])))
    record("iii-xhat", dxh > tol, dxh, lambda r: (int(r[1]), int(r[2])))
    if sys.m:
        record("iv-w", dw < -tol, dw, lambda r: (int(r[1]), int(r[2])))
        record("iv-what", dwh > tol, dwh, lambda r: (int(r[1]), int(r[2])))

    checked = int(keep.sum())
    count = sum(counts.values())
    return ValidationReport(
        passed=count == 0,
        samples_checked=checked,
        violations=violations,
        violation_count=count,
        skipped=N - checked,
        assumptions=["local Lipschitz continuity of d is assumed, not checked"],
        condition_counts=counts,
    )
