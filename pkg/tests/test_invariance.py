import json

import numpy as np
import pytest
from scipy.optimize import fsolve

from mmreach.embedding import make_embedding
from mmreach.errors import (
    CertificationRefused,
    NoConvergenceError,
    PreconditionError,
    SingularJacobianError,
)
from mmreach.geometry import EmbeddingPoint, HyperRect, rect_of
from mmreach.invariance import (
    certify_complement_invariant,
    certify_invariant_rect,
    check_attractivity,
    check_monotone_corollary,
    find_equilibrium_flow,
    in_south_set,
    sample_triangle,
    solve_equilibrium_newton,
)
from mmreach.system import DecompositionFn


def example2_embedding(z, wlo=-2.0, whi=2.0):
    x1, x2, y1, y2 = z
    return [
        -x1 - x1**3 - y2 - whi,
        -x2 - x2**3 + x1 + wlo**3,
        -y1 - y1**3 - x2 - wlo,
        -y2 - y2**3 + y1 + whi**3,
    ]


def test_example2_equilibrium_matches_oracle(emb, fx):
    ref = fsolve(example2_embedding, [-1, -2, 1, 2], xtol=1e-12)
    E = emb("example2")
    flow = find_equilibrium_flow(E, fx("example2").defaults["start"])
    assert np.allclose(flow.point.as_array(), ref, atol=1e-8)
    assert flow.residual <= 1e-9 and flow.in_triangle


@pytest.mark.parametrize("name", ["example2", "casestudy", "scalar", "coop"])
def test_flow_and_newton_agree(emb, fx, name):
    E, d = emb(name), fx(name).defaults
    a = find_equilibrium_flow(E, d["start"])
    b = solve_equilibrium_newton(E, d["guess"])
    assert np.max(np.abs(a.point.as_array() - b.point.as_array())) <= 1e-6


def test_flow_is_southeast_monotone(emb, fx):
    r = find_equilibrium_flow(emb("example2"), fx("example2").defaults["start"])
    assert r.monotone_violations == 0


def test_embedding_equilibrium_stays_put(emb, fx):
    from mmreach.embedding import flow_embedding
    E = emb("example2")
    eq = solve_equilibrium_newton(E, fx("example2").defaults["guess"])
    traj = flow_embedding(E, eq.point, 10.0)
    assert np.max(np.abs(traj.states - eq.point.as_array())) < 1e-2


def test_flow_from_equilibrium_returns_it(emb, fx):
    E = emb("scalar")
    a = EmbeddingPoint([-1.0], [1.0])
    r = find_equilibrium_flow(E, a)
    assert r.point == a and r.iterations == 0


def test_flow_requires_south_set(emb):
    with pytest.raises(PreconditionError, match="south set"):
        find_equilibrium_flow(emb("scalar"), EmbeddingPoint([-0.5], [0.5]))


def test_south_set_witness(emb):
    E = emb("scalar")
    ok = in_south_set(E, EmbeddingPoint([-3.0], [3.0]))
    assert ok.valid and ok.margin == pytest.approx(2.0)
    bad = in_south_set(E, EmbeddingPoint([-0.5], [0.5]))
    assert not bad.valid and "lower-half component 1" in bad.violation
    flipped = in_south_set(E, EmbeddingPoint([3.0], [-3.0]))
    assert not flipped.valid and "triangle" in flipped.violation


def test_newton_outside_triangle_is_flagged(emb):
    E = emb("scalar")
    r = solve_equilibrium_newton(E, EmbeddingPoint([0.0], [0.0]))
    assert r.in_triangle
    E2 = make_embedding(E.system, DecompositionFn(lambda x, w, xh, wh: w - x, 1, 1))
    r2 = solve_equilibrium_newton(E2, EmbeddingPoint([0.0], [0.0]))
    assert r2.point.x[0] == pytest.approx(-1.0) and r2.in_triangle
    # roots of -w - x have x = 1 > xhat = -1
    E3 = make_embedding(E.system, DecompositionFn(lambda x, w, xh, wh: -w - x, 1, 1))
    r3 = solve_equilibrium_newton(E3, EmbeddingPoint([0.0], [0.0]))
    assert not r3.in_triangle
    with pytest.raises(CertificationRefused):
        certify_invariant_rect(E3, r3.point)


def test_newton_failures(emb, fx):
    E = emb("scalar")
    flat = make_embedding(E.system, DecompositionFn(lambda x, w, xh, wh: np.ones_like(x), 1, 1))
    with pytest.raises(SingularJacobianError):
        solve_equilibrium_newton(flat, EmbeddingPoint([0.0], [0.0]))
    with pytest.raises(NoConvergenceError) as exc:
        solve_equilibrium_newton(emb("casestudy"), EmbeddingPoint([-4.0, -4.0], [4.0, 4.0]), max_iter=1)
    assert isinstance(exc.value.best, EmbeddingPoint)


def test_certificate_contents(emb, fx):
    E = emb("example2")
    eq = find_equilibrium_flow(E, fx("example2").defaults["start"])
    cert = certify_invariant_rect(E, eq.point, tol=eq.residual)
    data = json.loads(cert.to_json())
    assert set(data) >= {"kind", "rect", "residual", "margin", "tolerances", "seeds",
                         "system_fingerprint", "tool_version"}
    assert data["kind"] == "invariant-rect"
    assert data["rect"]["lo"] == pytest.approx([-1.3714, -1.9505], abs=1e-4)
    assert cert.to_json() == certify_invariant_rect(E, eq.point, tol=eq.residual).to_json()


def test_non_equilibrium_south_point_certified(emb):
    cert = certify_invariant_rect(emb("scalar"), EmbeddingPoint([-3.0], [3.0]))
    assert cert.rect == HyperRect([-3.0], [3.0]) and cert.margin > 0


def test_refusal_is_deterministic(emb):
    E = emb("example2")
    a = EmbeddingPoint([-0.5, -0.5], [0.5, 0.5])
    msgs = []
    for _ in range(2):
        with pytest.raises(CertificationRefused) as exc:
            certify_invariant_rect(E, a)
        msgs.append(str(exc.value))
    assert msgs[0] == msgs[1]


def test_casestudy_complement_certificate(fx):
    f = fx("casestudy")
    D = f.decomposition(backward=True)
    Eb = make_embedding(f.system.backward(), D)
    eq = solve_equilibrium_newton(Eb, f.defaults["backward_guess"])
    cert = certify_complement_invariant(f.system, D, eq.point, tol=eq.residual)
    assert cert.kind == "invariant-complement"
    assert cert.rect.hi == pytest.approx([0.5869, 0.5869], abs=1e-4)


def test_casestudy_backward_flow_reaches_inner_equilibrium(fx):
    f = fx("casestudy")
    Eb = make_embedding(f.system.backward(), f.decomposition(backward=True))
    r = find_equilibrium_flow(Eb, f.defaults["backward_flow_start"])
    # the south set of the backward embedding contracts onto a smaller rectangle
    assert 0.2 < r.point.xhat[0] < 0.5869
    certify_complement_invariant(f.system, f.decomposition(backward=True), r.point, tol=r.residual)


def test_example3_has_no_complement_certificate(fx):
    """No point of the triangle satisfies the south-set test for the Example-3 backward embedding.

    The second rows force x1 = xhat1 = -1, after which the first rows need
    x2 >= 1/4 and xhat2 <= 0, contradicting x2 <= xhat2.
    """
    f = fx("example3")
    D = f.decomposition(backward=True)
    Eb = make_embedding(f.system.backward(), D)
    rng = np.random.default_rng(0)
    A = sample_triangle(rng, HyperRect([-3.0, -3.0], [3.0, 3.0]), 20000)
    grid = np.array([[-1.0, x2, -1.0, y2] for x2 in np.linspace(-2, 2, 41)
                     for y2 in np.linspace(-2, 2, 41) if x2 <= y2])
    for a in np.concatenate([A, grid]):
        assert not in_south_set(Eb, EmbeddingPoint.from_array(a)).valid
    with pytest.raises(CertificationRefused):
        certify_complement_invariant(f.system, D, EmbeddingPoint([-1.0, 0.0], [-1.0, 0.25]))


def test_attractivity_trivial_start(emb, fx):
    E = emb("example2")
    eq = solve_equilibrium_newton(E, fx("example2").defaults["guess"])
    rep = check_attractivity(E, eq, starts=eq.point.as_array()[None], T_max=1.0, system_check=False)
    assert rep.fraction == 1.0 and rep.locally_stable


def test_attractivity_small_sample(emb, fx):
    E = emb("scalar")
    eq = solve_equilibrium_newton(E, fx("scalar").defaults["guess"])
    rep = check_attractivity(E, eq, sample_count=20, T_max=10.0, seed=1)
    assert rep.fraction == 1.0 and rep.system_fraction == 1.0
    assert rep.to_dict()["empirical"] is True


def test_monotone_corollary_scalar(fx):
    f = fx("scalar")
    r = check_monotone_corollary(f.system, f.decomposition())
    assert r.certificate.rect.lo == pytest.approx([-1.0], abs=1e-6)
    assert r.certificate.rect.hi == pytest.approx([1.0], abs=1e-6)
    assert "minimality" in r.certificate.metadata


def test_monotone_corollary_closed_form(fx):
    f = fx("coop")
    A = np.array([[-1.0, 0.5], [0.5, -1.0]])
    r = check_monotone_corollary(f.system, f.decomposition())
    assert r.certificate.rect.lo == pytest.approx(-np.linalg.solve(A, f.system.w_lo), abs=1e-6)
    assert r.certificate.rect.hi == pytest.approx(-np.linalg.solve(A, f.system.w_hi), abs=1e-6)


def test_certified_rect_is_rect_of_point(emb):
    a = EmbeddingPoint([-3.0], [3.0])
    assert certify_invariant_rect(emb("scalar"), a).rect == rect_of(a)
