import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmreach.polynomial import PolyExpr, interval_mul, interval_pow


def make(terms, n=2, m=1):
    return PolyExpr.from_terms(n, m, [{"coeff": c, "exponents": e} for c, e in terms])


def test_like_terms_merge_and_zeros_drop():
    p = make([(1, (1, 0, 0)), (2, (1, 0, 0)), (-3, (1, 0, 0)), (4, (0, 1, 0))])
    assert p.terms == {(0, 1, 0): 4.0}


def test_evaluation_vectorised():
    p = make([(-1, (1, 0, 0)), (-1, (3, 0, 0)), (-1, (0, 1, 0)), (-1, (0, 0, 1))])
    x = np.array([[0.0, 0.0], [1.0, 2.0]])
    w = np.array([[0.0], [1.0]])
    assert np.allclose(p(x, w), [0.0, -1 - 1 - 2 - 1])


def test_partial():
    p = make([(3, (2, 1, 0)), (1, (0, 0, 3))])
    assert p.partial(0).terms == {(1, 1, 0): 6.0}
    assert p.partial(2).terms == {(0, 0, 2): 3.0}


def test_round_trip_terms():
    p = make([(1.5, (0, 2, 0)), (2, (0, 0, 0))])
    q = PolyExpr.from_terms(2, 1, p.to_terms())
    assert q.terms == p.terms


def test_interval_pow_even_straddles_zero():
    assert interval_pow((-2.0, 1.0), 2) == (0.0, 4.0)
    assert interval_pow((-2.0, 1.0), 3) == (-8.0, 1.0)


def test_interval_mul_infinite_times_zero():
    assert interval_mul((0.0, 0.0), (-np.inf, np.inf)) == (0.0, 0.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_interval_encloses_samples(vals):
    p = make([(1, (2, 1, 0)), (-2, (0, 3, 0)), (0.5, (1, 0, 1)), (1, (0, 0, 0))])
    lo = np.minimum(vals[:3], vals[3:])
    hi = np.maximum(vals[:3], vals[3:])
    enc = p.interval(lo, hi)
    pts = np.random.default_rng(0).uniform(lo, hi, size=(200, 3))
    v = p.eval_vars(pts)
    assert np.all(v >= enc[0] - 1e-9) and np.all(v <= enc[1] + 1e-9)


def test_negation_and_sum():
    p = make([(1, (1, 0, 0))])
    assert (p + (-p)).terms == {}
    with pytest.raises(ValueError):
        p + PolyExpr(3, 0, {})
