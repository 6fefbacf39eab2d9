"""Acceptance criteria, one test per criterion.

Each test appends a PASS/FAIL line to ``RESULTS``; the lines are printed at
the end of the session and, with ``-s``, as each test finishes.
"""

import time

import numpy as np
import pytest

from mmreach.decompose import (
    build_backward_decomposition,
    build_monotone_decomposition,
    build_polynomial_decomposition,
)
from mmreach.embedding import make_embedding
from mmreach.fixtures import get_fixture
from mmreach.geometry import EmbeddingPoint, HyperRect, contains_many, rect_of, rect_subset
from mmreach.integrate import simulate_many
from mmreach.invariance import (
    certify_complement_invariant,
    certify_invariant_rect,
    check_attractivity,
    check_monotone_corollary,
    empirical_complement_invariance,
    empirical_invariance,
    find_equilibrium_flow,
    sample_triangle,
    solve_equilibrium_newton,
)
from mmreach.reach import backward_reach, forward_reach, monte_carlo_reach
from mmreach.system import SamplingPlan, validate_decomposition

from test_system import _example1_swapped, _example2_unhatted, _example3_wrong_disturbance

RESULTS = []


class Criterion:
    def __init__(self, number, title, limit):
        self.number, self.title, self.limit = number, title, limit
        self.checks = []

    def check(self, label, ok):
        self.checks.append((label, bool(ok)))

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        self.check(f"runtime {elapsed:.1f}s < {self.limit:g}s", elapsed < self.limit)
        ok = exc_type is None and all(c for _, c in self.checks)
        failed = [lab for lab, c in self.checks if not c]
        if exc_type is not None:
            failed.append(f"{exc_type.__name__}: {exc}")
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {self.number:>2}: {self.title} ({elapsed:.2f}s)"
        if failed:
            line += " -- failed: " + "; ".join(failed)
        RESULTS.append(line)
        print(line)
        if exc_type is None:
            assert ok, line
        return False


def near(p, target, tol):
    return bool(np.all(np.abs(np.asarray(p) - np.asarray(target)) <= tol))


def test_c01_example2_equilibrium():
    f = get_fixture("example2")
    E = make_embedding(f.system, f.decomposition())
    target = [-1.37, -1.95, 1.37, 1.95]
    with Criterion(1, "Example-2 equilibrium by flow and Newton", 10.0) as c:
        t = time.perf_counter()
        flow = find_equilibrium_flow(E, f.defaults["start"])
        c.check("flow < 5s", time.perf_counter() - t < 5.0)
        t = time.perf_counter()
        newton = solve_equilibrium_newton(E, f.defaults["guess"])
        c.check("newton < 5s", time.perf_counter() - t < 5.0)
        c.check("flow within 0.01", near(flow.point.as_array(), target, 0.01))
        c.check("newton within 0.01", near(newton.point.as_array(), target, 0.01))


def test_c02_casestudy_equilibria():
    f = get_fixture("casestudy")
    E = make_embedding(f.system, f.decomposition())
    Eb = make_embedding(f.system.backward(), f.decomposition(backward=True))
    with Criterion(2, "case-study forward and backward equilibria", 10.0) as c:
        t = time.perf_counter()
        fwd = find_equilibrium_flow(E, f.defaults["start"])
        c.check("forward < 5s", time.perf_counter() - t < 5.0)
        t = time.perf_counter()
        bwd = solve_equilibrium_newton(Eb, f.defaults["backward_guess"])
        c.check("backward < 5s", time.perf_counter() - t < 5.0)
        c.check("forward within 0.01", near(fwd.point.as_array(), [-1.36, -1.36, 1.36, 1.36], 0.01))
        c.check("backward within 0.01", near(bwd.point.as_array(), [-0.59, -0.59, 0.59, 0.59], 0.01))
        c.check("backward in triangle", bwd.in_triangle)


def test_c03_forward_soundness_example1():
    f = get_fixture("example1")
    X0 = HyperRect([-0.5, -0.5], [0.5, 0.5])
    with Criterion(3, "forward reach contains 10^4 Monte-Carlo endpoints (Example 1)", 60.0) as c:
        res = forward_reach(f.system, f.decomposition(which="piecewise"), X0, 1.0)
        mc = monte_carlo_reach(f.system, X0, 1.0, 10_000, seed=0, max_step=1e-3)
        c.check("hypothesis holds", res.hypothesis_ok)
        c.check("no sample flagged", mc.flagged == 0)
        c.check("all contained", np.all(contains_many(res.rect, mc.points, tol=1e-6)))


def test_c04_piecewise_tighter_than_jacobian():
    f = get_fixture("example1")
    X0 = HyperRect([-0.5, -0.5], [0.5, 0.5])
    with Criterion(4, "piecewise rectangle strictly inside Jacobian rectangle at T = 1/4", 10.0) as c:
        tight = forward_reach(f.system, f.decomposition(which="piecewise"), X0, 0.25)
        jsys = f.system.with_domain(f.defaults["jacobian_domain"])
        loose = forward_reach(jsys, f.decomposition(which="jacobian"), X0, 0.25)
        c.check("both bounds valid", tight.hypothesis_ok and loose.hypothesis_ok)
        c.check("subset", rect_subset(tight.rect, loose.rect))
        c.check("volume ratio < 0.9", tight.rect.volume() / loose.rect.volume() < 0.9)


def test_c05_backward_soundness_example3():
    f = get_fixture("example3")
    X1 = HyperRect([-0.25, -0.5], [0.25, 0.0])
    with Criterion(5, "backward reach contains 10^4 backward Monte-Carlo endpoints (Example 3)", 60.0) as c:
        res = backward_reach(f.system, f.decomposition(backward=True), X1, 1.0)
        mc = monte_carlo_reach(f.system.backward(), X1, 1.0, 10_000, seed=0, max_step=1e-3)
        c.check("hypothesis holds", res.hypothesis_ok)
        c.check("no sample flagged", mc.flagged == 0)
        c.check("all contained", np.all(contains_many(res.rect, mc.points, tol=1e-6)))


def test_c06_invariance_soundness_example2():
    f = get_fixture("example2")
    E = make_embedding(f.system, f.decomposition())
    with Criterion(6, "500 trajectories stay in the Example-2 invariant rectangle for T = 10", 120.0) as c:
        eq = find_equilibrium_flow(E, f.defaults["start"])
        cert = certify_invariant_rect(E, eq.point, tol=eq.residual)
        c.check("certificate near [-1.37,1.37]x[-1.95,1.95]",
                near(np.concatenate([cert.rect.lo, cert.rect.hi]), [-1.37, -1.95, 1.37, 1.95], 0.01))
        literal = HyperRect([-1.37, -1.95], [1.37, 1.95])
        r = empirical_invariance(f.system, literal, count=500, T=10.0, seed=0, slack=1e-6)
        c.check(f"stated rectangle: {r.violations} violations", r.passed)
        r = empirical_invariance(f.system, cert.rect, count=500, T=10.0, seed=1, slack=1e-6)
        c.check(f"certified rectangle: {r.violations} violations", r.passed)


def test_c07_complement_soundness_casestudy():
    f = get_fixture("casestudy")
    D = f.decomposition(backward=True)
    Eb = make_embedding(f.system.backward(), D)
    with Criterion(7, "500 shell trajectories never enter the case-study rectangle for T = 10", 120.0) as c:
        eq = solve_equilibrium_newton(Eb, f.defaults["backward_guess"])
        cert = certify_complement_invariant(f.system, D, eq.point, tol=eq.residual)
        c.check("certificate near [-0.59,0.59]^2",
                near(np.concatenate([cert.rect.lo, cert.rect.hi]), [-0.59, -0.59, 0.59, 0.59], 0.01))
        inner = HyperRect([-0.59, -0.59], [0.59, 0.59])
        outer = HyperRect([-1.2, -1.2], [1.2, 1.2])
        r = empirical_complement_invariance(f.system, inner, outer, count=500, T=10.0, seed=0, slack=1e-6)
        c.check(f"{r.violations} entries", r.passed)


@pytest.mark.parametrize("name", ["example2", "casestudy"])
def test_c08_attractivity(name):
    f = get_fixture(name)
    E = make_embedding(f.system, f.decomposition())
    with Criterion(8, f"attractivity of the {name} equilibrium", 120.0) as c:
        eq = find_equilibrium_flow(E, f.defaults["start"])
        rep = check_attractivity(E, eq, sample_count=100, T_max=20.0, ball_radius=0.05,
                                 region=HyperRect([-5.0, -5.0], [5.0, 5.0]), seed=0)
        c.check(f"embedding fraction {rep.fraction}", rep.fraction == 1.0)
        c.check(f"system fraction {rep.system_fraction}", rep.system_fraction == 1.0)
        c.check("eigenvalue real parts < 0", all(np.real(z) < 0 for z in rep.eigenvalues))


MONOTONE_CASES = [
    ("example1", False, "piecewise"), ("example1", False, "jacobian"), ("example2", False, None),
    ("casestudy", False, None), ("casestudy", True, None), ("example3", True, None),
    ("scalar", False, None), ("coop", False, None),
]


def test_c09_southeast_order_preservation():
    with Criterion(9, "embedding flows preserve SE order and the triangle", 120.0) as c:
        for name, backward, which in MONOTONE_CASES:
            f = get_fixture(name)
            sys = f.target_system(backward)
            if which == "jacobian":
                sys = sys.with_domain(f.defaults["jacobian_domain"])
            E = make_embedding(sys, f.decomposition(backward, which))
            n, N = sys.n, 200
            # backward dynamics blow up quickly, so they get a short horizon on a small box
            half, T = (1.0, 0.05) if backward else (2.0, 1.0)
            if which == "jacobian":
                half, T = 0.5, 0.25
            rng = np.random.default_rng(0)
            A = sample_triangle(rng, HyperRect(np.full(n, -half), np.full(n, half)), N)
            width = A[:, n:] - A[:, :n]
            r = rng.uniform(0.0, 0.5, (2, N, n))
            B = np.concatenate([A[:, :n] + r[0] * width, A[:, n:] - r[1] * width], axis=1)
            bad = {"order": 0, "triangle": 0, "nonfinite": 0}
            # the order is only claimed while both embedding states stay in X x X
            inside = np.ones(N, dtype=bool)
            lo, hi = np.tile(sys.domain.lo, 2), np.tile(sys.domain.hi, 2)

            def monitor(y, alive):
                a, b = y[:N], y[N:]
                inside[:] &= np.all((y >= lo) & (y <= hi), axis=1).reshape(2, N).all(axis=0)
                k = np.concatenate([inside, inside])
                bad["order"] += int(np.sum(inside & (np.any(a[:, :n] > b[:, :n] + 1e-9, axis=1)
                                                     | np.any(b[:, n:] > a[:, n:] + 1e-9, axis=1))))
                bad["triangle"] += int(np.sum(k & np.any(y[:, :n] > y[:, n:] + 1e-9, axis=1)))
                bad["nonfinite"] += int(np.sum(k[:, None] & ~np.isfinite(y)))

            Y = np.concatenate([A, B])
            simulate_many(lambda y, w: E.eval_e(y), Y, np.zeros((2 * N, 0)), np.zeros((2 * N, 1, 0)),
                          T, max_step=1e-3, monitor=monitor)
            tag = f"{name}{':backward' if backward else ''}{':' + which if which else ''}"
            c.check(f"{tag} order violations {bad['order']}", bad["order"] == 0)
            c.check(f"{tag} triangle violations {bad['triangle']}", bad["triangle"] == 0)
            c.check(f"{tag} finite", bad["nonfinite"] == 0)
            c.check(f"{tag} pairs kept {int(inside.sum())}", inside.sum() >= N // 2)


def test_c10_validation_suite():
    plan = SamplingPlan(samples=10_000, seed=0)
    with Criterion(10, "every decomposition validates and the three mutants fail", 60.0) as c:
        e1, e2, e3, cs = (get_fixture(k) for k in ("example1", "example2", "example3", "casestudy"))
        jsys = e1.system.with_domain(e1.defaults["jacobian_domain"])
        cases = [
            ("Example-1 piecewise d", e1.system, e1.decomposition(which="piecewise")),
            ("Example-3 D", e3.system.backward(), e3.decomposition(backward=True)),
            ("case-study d", cs.system, cs.decomposition()),
            ("case-study D", cs.system.backward(), cs.decomposition(backward=True)),
            ("Example-2 d", e2.system, e2.decomposition()),
            ("jacobian Example 1", jsys, e1.decomposition(which="jacobian")),
            ("backward-derived Example 1", e1.system.backward(),
             build_backward_decomposition(e1.decomposition(), e1.system)),
        ]
        for name in ("scalar", "coop"):
            s = get_fixture(name).system
            cases.append((f"monotone {name}", s, build_monotone_decomposition(s)))
        for label, s in [("Example 1", e1.system), ("Example 2", e2.system),
                         ("Example 3 backward", e3.system.backward()), ("case study", cs.system),
                         ("case study backward", cs.system.backward())]:
            cases.append((f"polynomial {label}", s, build_polynomial_decomposition(s)))
        for label, s, d in cases:
            c.check(f"{label} passes", validate_decomposition(s, d, plan).passed)
        mutants = [
            ("Example-1 swapped x2/xhat2", e1.system, _example1_swapped()),
            ("Example-2 xhat2 -> x2", e2.system, _example2_unhatted()),
            ("Example-3 what -> w", e3.system.backward(), _example3_wrong_disturbance()),
        ]
        for label, s, d in mutants:
            c.check(f"{label} fails", not validate_decomposition(s, d, plan).passed)


def test_c11_monotone_corollary_scalar():
    f = get_fixture("scalar")
    with Criterion(11, "equilibrium rectangle of x' = -x + w is [-1, 1]", 10.0) as c:
        r = check_monotone_corollary(f.system, f.decomposition())
        c.check("lower corner", abs(r.certificate.rect.lo[0] + 1.0) <= 1e-6)
        c.check("upper corner", abs(r.certificate.rect.hi[0] - 1.0) <= 1e-6)
        c.check("rect matches rest points",
                rect_of(EmbeddingPoint(r.lower.point.x, r.upper.point.x)) == r.certificate.rect)
