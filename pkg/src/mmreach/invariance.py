"""Invariant and attractive rectangles from equilibria of the embedding system.

A point ``a = (x, xhat)`` with ``x <= xhat`` at which the embedding field
points into the southeast cone (lower half ``>= 0``, upper half ``<= 0``)
certifies that ``[x, xhat]`` is robustly forward invariant.  Flowing the
embedding from such a point converges monotonically to an equilibrium whose
rectangle is invariant and attracts ``[x, xhat]``.  Applied to the backward
dynamics the same test certifies invariance of a rectangle's complement.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .embedding import make_embedding
from .errors import (
    CertificationRefused,
    NoConvergenceError,
    PreconditionError,
    SingularJacobianError,
    StepFailure,
)
from .geometry import EmbeddingPoint, HyperRect, rect_of
from .integrate import COMPLETED, IntegratorConfig, integrate, simulate_many

INVARIANT_RECT = "invariant-rect"
ATTRACTIVE_RECT = "attractive-rect"
INVARIANT_COMPLEMENT = "invariant-complement"


@dataclass
class SouthSetWitness:
    """Result of the southeast-cone test at ``point``.

    ``margin`` is the smallest slack among the lower half of ``e``, the
    negated upper half, and the widths ``xhat - x``.  ``violation`` names the
    worst coordinate when the test fails.
    """

    point: EmbeddingPoint
    e_value: np.ndarray
    margin: float
    valid: bool
    violation: Optional[str] = None


def in_south_set(E, a, tol=0.0):
    n = a.dim
    ev = np.asarray(E.eval_e(a), dtype=float)
    slacks = np.concatenate([ev[:n], -ev[n:], a.xhat - a.x])
    margin = float(slacks.min())
    valid = margin >= -tol
    violation = None
    if not valid:
        k = int(np.argmin(slacks))
        if k < n:
            violation = f"lower-half component {k + 1} of e is {ev[k]:.6g} < 0"
        elif k < 2 * n:
            violation = f"upper-half component {k - n + 1} of e is {ev[k]:.6g} > 0"
        else:
            i = k - 2 * n
            violation = f"not in the triangle: x_{i + 1} > xhat_{i + 1}"
    return SouthSetWitness(a, ev, margin, bool(valid), violation)


@dataclass
class EquilibriumResult:
    point: EmbeddingPoint
    residual: float
    method: str
    in_triangle: bool
    iterations: int = 0
    time: float = 0.0
    monotone_violations: int = 0

    def to_dict(self):
        return {
            "x": self.point.x.tolist(),
            "xhat": self.point.xhat.tolist(),
            "residual": self.residual,
            "method": self.method,
            "in_triangle": self.in_triangle,
            "iterations": self.iterations,
            "time": self.time,
            "monotone_violations": self.monotone_violations,
        }


def _residual(E, a):
    return float(np.max(np.abs(E.eval_e(a)))) if a.size else 0.0


def find_equilibrium_flow(E, a0, cfg=None, tol_eq=1e-9, t_max=1e4, chunk=1.0, slack=1e-9,
                          polish_at=1e-6):
    """Integrate the embedding from a south-set point until ``|e|_inf <= tol_eq``.

    Successive samples are checked for southeast monotonicity within
    ``slack``; the count of violations is reported, not raised.  An adaptive
    explicit integrator jitters about an equilibrium at roughly its error
    tolerance, so once the residual drops below ``polish_at`` a few Newton
    steps finish the job (method ``"flow+newton"``).
    """
    w = in_south_set(E, a0)
    if not w.valid:
        raise PreconditionError(f"start point is not in the south set: {w.violation}")
    cfg = cfg or IntegratorConfig()
    a = a0.as_array()
    res = _residual(E, a)
    t_total, steps, bad = 0.0, 0, 0
    best, best_res = a, res
    lo, hi = E.domain_bounds()
    while res > tol_eq:
        if t_total >= t_max:
            raise NoConvergenceError(
                f"flow did not reach residual {tol_eq:g} by t={t_total:g} (residual {best_res:.3g})",
                best=EmbeddingPoint.from_array(best), residual=best_res,
            )
        span = min(chunk, t_max - t_total)
        traj = integrate(E.rhs, a, span, cfg, domain=(lo, hi))
        if traj.exit_flag != COMPLETED:
            raise StepFailure(f"embedding flow stopped with {traj.exit_flag} at t={t_total:g}")
        S = traj.states
        n = E.n
        bad += int(np.sum(np.any(S[1:, :n] < S[:-1, :n] - slack, axis=1)
                          | np.any(S[1:, n:] > S[:-1, n:] + slack, axis=1)))
        resid = np.max(np.abs(E.eval_e(S)), axis=1)
        steps += len(S) - 1
        hit = np.nonzero(resid <= tol_eq)[0]
        if hit.size:
            k = int(hit[0])
            a, res = S[k], float(resid[k])
            t_total += float(traj.times[k])
            best, best_res = a, res
            break
        k = int(np.argmin(resid))
        if resid[k] < best_res:
            best, best_res = S[k], float(resid[k])
        a, res = S[-1], float(resid[-1])
        t_total += span
        chunk *= 2.0
        if best_res <= polish_at:
            polished = _polish(E.eval_e, best, tol_eq)
            if polished is not None:
                pt = EmbeddingPoint.from_array(polished[0])
                return EquilibriumResult(pt, polished[1], "flow+newton", pt.in_triangle(),
                                         steps, t_total, bad)
    pt = EmbeddingPoint.from_array(a)
    return EquilibriumResult(pt, res, "flow", pt.in_triangle(), steps, t_total, bad)


def _polish(f, a, tol_eq, radius=1e-4):
    try:
        b, res, _ = newton_solve(f, a, tol_eq, max_iter=20)
    except (NoConvergenceError, SingularJacobianError):
        return None
    if np.max(np.abs(b - a)) > radius:
        return None
    return b, res


def fd_jacobian(f, a, rel=1e-6, central=False):
    a = np.asarray(a, dtype=float)
    f0 = np.asarray(f(a), dtype=float)
    J = np.empty((f0.size, a.size))
    for j in range(a.size):
        h = rel * max(1.0, abs(a[j]))
        ap = a.copy()
        ap[j] += h
        if central:
            am = a.copy()
            am[j] -= h
            J[:, j] = (np.asarray(f(ap)) - np.asarray(f(am))) / (2 * h)
        else:
            J[:, j] = (np.asarray(f(ap)) - f0) / h
    return J


def newton_solve(f, a0, tol_eq=1e-9, max_iter=100, armijo=1e-4, min_step=1e-10):
    """Damped Newton on ``f(a) = 0`` with a forward-difference Jacobian.

    Returns ``(root, residual, iterations)``.  Armijo backtracking is applied
    to ``0.5 |f|^2``.
    """
    a = np.array(a0, dtype=float)
    fa = np.asarray(f(a), dtype=float)
    phi = 0.5 * float(fa @ fa)
    best, best_res = a.copy(), float(np.max(np.abs(fa)))
    for it in range(max_iter + 1):
        res = float(np.max(np.abs(fa)))
        if res < best_res:
            best, best_res = a.copy(), res
        if res <= tol_eq:
            return a, res, it
        if it == max_iter:
            break
        J = fd_jacobian(f, a)
        try:
            if not np.all(np.isfinite(J)) or np.linalg.cond(J) > 1e14:
                raise np.linalg.LinAlgError
            p = np.linalg.solve(J, -fa)
        except np.linalg.LinAlgError:
            raise SingularJacobianError(
                f"singular Jacobian at iteration {it} (residual {res:.3g})"
            ) from None
        t = 1.0
        while True:
            trial = a + t * p
            ft = np.asarray(f(trial), dtype=float)
            phit = 0.5 * float(ft @ ft)
            if np.isfinite(phit) and phit <= (1.0 - 2.0 * armijo * t) * phi:
                break
            t *= 0.5
            if t < min_step:
                raise NoConvergenceError(
                    f"line search failed at iteration {it} (residual {res:.3g})",
                    best=best, residual=best_res,
                )
        a, fa, phi = trial, ft, phit
    raise NoConvergenceError(
        f"Newton did not converge in {max_iter} iterations (residual {best_res:.3g})",
        best=best, residual=best_res,
    )


def solve_equilibrium_newton(E, guess, tol_eq=1e-9, max_iter=100):
    """Newton solve of ``e(a) = 0`` from ``guess``.

    The result may lie outside the triangle; ``in_triangle`` reports it and
    certification refuses such points.
    """
    try:
        a, res, it = newton_solve(E.eval_e, guess.as_array(), tol_eq, max_iter)
    except NoConvergenceError as exc:
        exc.best = EmbeddingPoint.from_array(exc.best)
        raise
    pt = EmbeddingPoint.from_array(a)
    return EquilibriumResult(pt, res, "newton", pt.in_triangle(), it)


@dataclass
class Certificate:
    kind: str
    rect: HyperRect
    residual: float
    margin: float
    tolerances: dict
    system_fingerprint: str
    seeds: list = field(default_factory=list)
    evidence: dict = field(default_factory=dict)
    empirical_attractivity: Optional[dict] = None
    metadata: dict = field(default_factory=dict)
    tool_version: str = __version__

    def to_dict(self):
        return {
            "kind": self.kind,
            "rect": self.rect.to_dict(),
            "residual": self.residual,
            "margin": self.margin,
            "tolerances": self.tolerances,
            "seeds": list(self.seeds),
            "system_fingerprint": self.system_fingerprint,
            "tool_version": self.tool_version,
            "evidence": self.evidence,
            "empirical_attractivity": self.empirical_attractivity,
            "metadata": self.metadata,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _fingerprint(E):
    d = E.decomposition
    return E.system.fingerprint({"decomposition": d.label, "provenance": d.provenance})


def certify_invariant_rect(E, a, tol=0.0, evidence=None):
    """Certify that ``[a.x, a.xhat]`` is robustly forward invariant.

    Raises :class:`CertificationRefused` unless ``a`` passes the south-set
    test with slack ``tol``.
    """
    w = in_south_set(E, a, tol)
    if not w.valid:
        raise CertificationRefused(f"invariant-rect refused: {w.violation}", w.violation)
    resid = float(np.max(np.abs(w.e_value)))
    ev = {"point": a.as_array().tolist(), "e_value": w.e_value.tolist()}
    ev.update(evidence or {})
    return Certificate(
        INVARIANT_RECT, rect_of(a), resid, w.margin, {"slack": tol},
        _fingerprint(E), evidence=ev,
    )


def certify_complement_invariant(sys, D, a, tol=0.0):
    """Certify that ``X \\ [a.x, a.xhat]`` is robustly forward invariant for ``sys``.

    ``D`` is a decomposition for the backward dynamics; the test is the
    south-set condition for its embedding.
    """
    if not a.in_triangle():
        raise CertificationRefused("invariant-complement refused: point is not in the triangle",
                                   "triangle")
    E = make_embedding(sys.backward(), D)
    w = in_south_set(E, a, tol)
    if not w.valid:
        raise CertificationRefused(f"invariant-complement refused: {w.violation}", w.violation)
    return Certificate(
        INVARIANT_COMPLEMENT, rect_of(a), float(np.max(np.abs(w.e_value))), w.margin,
        {"slack": tol}, _fingerprint(E),
        evidence={"point": a.as_array().tolist(), "e_value": w.e_value.tolist()},
        metadata={"claim": "domain minus rect is robustly forward invariant"},
    )


def embedding_eigenvalues(E, point):
    J = fd_jacobian(E.eval_e, point.as_array(), central=True)
    return np.linalg.eigvals(J)


def sample_triangle(rng, box, count):
    """Uniform samples of ``(x, xhat)`` with both halves in ``box`` and ``x <= xhat``."""
    p = rng.uniform(box.lo, box.hi, size=(count, box.dim))
    q = rng.uniform(box.lo, box.hi, size=(count, box.dim))
    return np.concatenate([np.minimum(p, q), np.maximum(p, q)], axis=1)


@dataclass
class AttractivityReport:
    fraction: float
    failures: list
    system_fraction: Optional[float]
    system_failures: list
    eigenvalues: list
    locally_stable: bool
    sample_count: int
    T_max: float
    ball_radius: float
    seed: int

    def to_dict(self):
        return {
            "fraction": self.fraction,
            "failures": self.failures,
            "system_fraction": self.system_fraction,
            "system_failures": self.system_failures,
            "eigenvalues": [[float(np.real(z)), float(np.imag(z))] for z in self.eigenvalues],
            "locally_stable": self.locally_stable,
            "sample_count": self.sample_count,
            "T_max": self.T_max,
            "ball_radius": self.ball_radius,
            "seed": self.seed,
            "empirical": True,
        }


class _EnterAndRemain:
    """Monitor that tracks whether each sample entered a set and stayed."""

    def __init__(self, inside_fn, N):
        self.inside_fn = inside_fn
        self.entered = np.zeros(N, dtype=bool)
        self.left = np.zeros(N, dtype=bool)

    def __call__(self, x, alive):
        ins = self.inside_fn(x)
        self.left |= self.entered & ~ins
        self.entered |= ins

    def ok(self):
        return self.entered & ~self.left


def check_attractivity(E, eq, sample_count=100, T_max=20.0, ball_radius=0.05,
                       region=None, seed=0, starts=None, max_step=5e-3,
                       n_switches=20, system_check=True):
    """Empirical attractivity of an embedding equilibrium.

    Embedding starts are drawn uniformly from the triangle over ``region``
    (default ``[-5, 5]^n``) unless ``starts`` (shape ``(k, 2n)``) is given.
    A start passes if its flow enters the sup-norm ball of ``ball_radius``
    about ``eq.point`` and stays there through ``T_max``.  System
    trajectories from inside each start's rectangle, under random
    disturbances, must likewise enter and stay in the equilibrium rectangle
    inflated by ``ball_radius``.
    """
    n = E.n
    rng = np.random.default_rng(seed)
    region = region or HyperRect(np.full(n, -5.0), np.full(n, 5.0))
    A0 = np.asarray(starts, dtype=float) if starts is not None else sample_triangle(rng, region, sample_count)
    N = A0.shape[0]
    center = eq.point.as_array()

    emb = _EnterAndRemain(lambda y: np.max(np.abs(y - center), axis=1) <= ball_radius, N)
    emb(A0, None)
    field_fn = lambda y, w: E.eval_e(y)  # noqa: E731
    simulate_many(field_fn, A0, np.zeros((N, 0)), np.zeros((N, 1, 0)), T_max,
                  max_step=max_step, monitor=emb)
    ok = emb.ok()

    sys_fraction, sys_fail = None, []
    if system_check:
        sys = E.system
        target = rect_of(eq.point).inflate(ball_radius)
        x0 = rng.uniform(A0[:, :n], A0[:, n:])
        sw = np.sort(rng.uniform(0.0, T_max, (N, n_switches)), axis=1)
        vals = rng.uniform(sys.w_lo, sys.w_hi, size=(N, n_switches + 1, sys.m))
        mon = _EnterAndRemain(
            lambda y: np.all((y >= target.lo) & (y <= target.hi), axis=1), N
        )
        mon(x0, None)
        simulate_many(sys.field, x0, sw, vals, T_max, max_step=max_step, monitor=mon)
        sys_ok = mon.ok()
        sys_fraction = float(sys_ok.mean())
        sys_fail = np.nonzero(~sys_ok)[0].tolist()

    eig = embedding_eigenvalues(E, eq.point)
    return AttractivityReport(
        float(ok.mean()), np.nonzero(~ok)[0].tolist(), sys_fraction, sys_fail, list(eig),
        bool(np.all(np.real(eig) < -1e-6)), N, T_max, ball_radius, seed,
    )


def certify_attractive_rect(E, eq, tol=None, **attractivity_kwargs):
    """Invariant-rect certificate plus an empirical attractivity report.

    ``tol`` defaults to the equilibrium residual, since a numerically solved
    equilibrium satisfies the south-set test only up to that residual.
    """
    tol = eq.residual if tol is None else tol
    if not eq.in_triangle:
        raise CertificationRefused("attractive-rect refused: equilibrium is not in the triangle",
                                   "triangle")
    cert = certify_invariant_rect(E, eq.point, tol, evidence={"equilibrium": eq.to_dict()})
    report = check_attractivity(E, eq, **attractivity_kwargs)
    cert.kind = ATTRACTIVE_RECT
    cert.empirical_attractivity = report.to_dict()
    cert.seeds = [report.seed]
    cert.metadata["attractivity"] = "empirical evidence only"
    return cert


def _flow_to_rest(sys, w, x0, cfg, tol_eq, t_max, polish_at=1e-6):
    f = lambda t, y: sys.field(y, w)  # noqa: E731
    g = lambda y: sys.field(y, w)  # noqa: E731
    x = np.asarray(x0, dtype=float)
    t_total, chunk = 0.0, 1.0
    while True:
        res = float(np.max(np.abs(g(x))))
        if res <= tol_eq:
            return x, res, t_total
        if res <= polish_at:
            polished = _polish(g, x, tol_eq)
            if polished is not None:
                return polished[0], polished[1], t_total
        if t_total >= t_max:
            raise NoConvergenceError(
                f"flow of F(., w={np.asarray(w).tolist()}) did not settle (residual {res:.3g})",
                best=EmbeddingPoint.diagonal(x), residual=res,
            )
        traj = integrate(f, x, chunk, cfg, domain=(sys.domain.lo, sys.domain.hi))
        if traj.exit_flag != COMPLETED:
            raise StepFailure(f"flow stopped with {traj.exit_flag}")
        r = np.max(np.abs(sys.field(traj.states, w)), axis=1)
        hit = np.nonzero(r <= tol_eq)[0]
        if hit.size:
            k = int(hit[0])
            return traj.states[k], float(r[k]), t_total + float(traj.times[k])
        x = traj.final
        t_total += chunk
        chunk *= 2.0


@dataclass
class CorollaryResult:
    lower: EquilibriumResult
    upper: EquilibriumResult
    certificate: Certificate


def check_monotone_corollary(sys, d, cfg=None, x_start=None, tol_eq=1e-9, t_max=1e4):
    """Invariant and attractive rectangle for a monotone system.

    The corners are the rest points of ``xdot = F(x, wlo)`` and
    ``xdot = F(x, whi)``, found by integrating each field from ``x_start``.
    """
    cfg = cfg or IntegratorConfig()
    if x_start is None:
        box = sys.domain.clip(HyperRect(np.full(sys.n, -1.0), np.full(sys.n, 1.0)))
        x_start = box.center()
    lo, r_lo, t_lo = _flow_to_rest(sys, sys.w_lo, x_start, cfg, tol_eq, t_max)
    hi, r_hi, t_hi = _flow_to_rest(sys, sys.w_hi, x_start, cfg, tol_eq, t_max)
    lower = EquilibriumResult(EmbeddingPoint.diagonal(lo), r_lo, "flow", True, time=t_lo)
    upper = EquilibriumResult(EmbeddingPoint.diagonal(hi), r_hi, "flow", True, time=t_hi)
    pt = EmbeddingPoint(lo, hi)
    if not pt.in_triangle():
        raise CertificationRefused("rest point for wlo is not below the one for whi", "triangle")
    E = make_embedding(sys, d)
    tol = max(r_lo, r_hi, tol_eq)
    cert = certify_invariant_rect(E, pt, tol, evidence={
        "lower_rest_point": lower.to_dict(), "upper_rest_point": upper.to_dict(),
    })
    cert.kind = ATTRACTIVE_RECT
    cert.metadata.update({
        "route": "monotone corollary",
        "attractivity": "global, given global asymptotic stability of both rest points",
        "minimality": "no proper sub-rectangle is robustly forward invariant (recorded, not checked)",
    })
    return CorollaryResult(lower, upper, cert)


@dataclass
class InvarianceCheck:
    count: int
    violations: int
    worst_excursion: float
    seed: int

    @property
    def passed(self):
        return self.violations == 0

    def to_dict(self):
        return {"count": self.count, "violations": self.violations,
                "worst_excursion": self.worst_excursion, "seed": self.seed,
                "passed": self.passed}


def _sample_outside(seed, idx, inner, outer):
    out = np.empty((len(idx), inner.dim))
    for r, i in enumerate(idx):
        rng = np.random.default_rng([seed, int(i), 1])
        while True:
            p = rng.uniform(outer.lo, outer.hi)
            if not (np.all(p >= inner.lo) and np.all(p <= inner.hi)):
                out[r] = p
                break
    return out


def _signals(seed, idx, box, T, n_switches):
    sw = np.empty((len(idx), n_switches))
    vals = np.empty((len(idx), n_switches + 1, box.dim))
    for r, i in enumerate(idx):
        rng = np.random.default_rng([seed, int(i), 2])
        sw[r] = np.sort(rng.uniform(0.0, T, n_switches))
        vals[r] = rng.uniform(box.lo, box.hi, size=(n_switches + 1, box.dim))
    return sw, vals


def empirical_invariance(sys, rect, count=500, T=10.0, seed=0, slack=1e-6,
                         n_switches=20, max_step=5e-3):
    """Trajectories from inside ``rect`` under random disturbances; counts exits."""
    idx = np.arange(count)
    x0 = np.empty((count, sys.n))
    for r, i in enumerate(idx):
        x0[r] = np.random.default_rng([seed, int(i), 0]).uniform(rect.lo, rect.hi)
    sw, vals = _signals(seed, idx, sys.dist_box, T, n_switches)
    bad = np.zeros(count, dtype=bool)
    worst = [0.0]

    def mon(x, alive):
        exc = np.maximum(np.max(rect.lo - x, axis=1), np.max(x - rect.hi, axis=1))
        worst[0] = max(worst[0], float(exc.max()))
        bad.__ior__(exc > slack)

    simulate_many(sys.field, x0, sw, vals, T, max_step=max_step, monitor=mon)
    return InvarianceCheck(count, int(bad.sum()), worst[0], seed)


def empirical_complement_invariance(sys, rect, outer, count=500, T=10.0, seed=0,
                                    slack=1e-6, n_switches=20, max_step=5e-3):
    """Trajectories from ``outer \\ rect``; counts entries into ``rect`` shrunk by ``slack``."""
    idx = np.arange(count)
    x0 = _sample_outside(seed, idx, rect, outer)
    sw, vals = _signals(seed, idx, sys.dist_box, T, n_switches)
    inner = rect.inflate(-slack)
    bad = np.zeros(count, dtype=bool)
    depth = [-np.inf]

    def mon(x, alive):
        pen = np.minimum(np.min(x - inner.lo, axis=1), np.min(inner.hi - x, axis=1))
        depth[0] = max(depth[0], float(pen.max()))
        bad.__ior__(pen >= 0)

    simulate_many(sys.field, x0, sw, vals, T, max_step=max_step, monitor=mon)
    return InvarianceCheck(count, int(bad.sum()), depth[0], seed)
