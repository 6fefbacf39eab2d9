import numpy as np
import pytest
from scipy.integrate import solve_ivp

from mmreach.errors import DomainError
from mmreach.geometry import HyperRect, contains_many
from mmreach.integrate import DisturbanceSignal
from mmreach.embedding import flow_system
from mmreach.reach import backward_reach, forward_reach, monte_carlo_reach, run_batches, thread_count


def _square(a, b):
    # decomposition of s^2 written out case by case, independent of the package
    if a >= 0 and a >= -b:
        return a * a
    if b <= 0 and a < -b:
        return b * b
    return a * b


def example1_embedding(t, z):
    x1, x2, y1, y2 = z
    return [_square(x2, y2) + 2.0, x1, _square(y2, x2) + 2.0, y1]


def test_example1_corners_match_independent_solver(fx):
    f = fx("example1")
    res = forward_reach(f.system, f.decomposition(), HyperRect([-0.5, -0.5], [0.5, 0.5]), 1.0)
    ref = solve_ivp(example1_embedding, (0, 1), [-0.5, -0.5, 0.5, 0.5], method="DOP853",
                    rtol=1e-12, atol=1e-12).y[:, -1]
    assert res.hypothesis_ok
    assert np.allclose(res.rect.lo, ref[:2], atol=1e-6)
    assert np.allclose(res.rect.hi, ref[2:], atol=1e-6)


def test_tube_is_nested_outward(fx):
    f = fx("example2")
    res = forward_reach(f.system, f.decomposition(), HyperRect([-0.1, -0.1], [0.1, 0.1]), 1.0)
    assert res.tube[0][0] == 0.0 and res.tube[-1][0] == 1.0
    times = [t for t, _ in res.tube]
    assert all(b > a for a, b in zip(times, times[1:]))


def test_tube_csv(tmp_path, fx):
    f = fx("example1")
    res = forward_reach(f.system, f.decomposition(), HyperRect([-0.5, -0.5], [0.5, 0.5]), 0.5)
    p = tmp_path / "tube.csv"
    res.tube_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "time,lo1,lo2,hi1,hi2"
    assert len(lines) == len(res.tube) + 1


def test_zero_horizon_returns_initial_rect(fx):
    f = fx("example2")
    X0 = HyperRect([-0.1, -0.2], [0.1, 0.2])
    assert forward_reach(f.system, f.decomposition(), X0, 0.0).rect == X0


def test_leaving_domain_withholds_bound(fx):
    f = fx("example1")
    sys = f.system.with_domain(f.defaults["jacobian_domain"])
    res = forward_reach(sys, f.decomposition(which="jacobian"), HyperRect([-0.5, -0.5], [0.5, 0.5]), 3.0)
    assert not res.hypothesis_ok and res.rect is None
    assert res.to_dict()["rect"] is None


def test_initial_rect_checks(fx):
    f = fx("example1")
    sys = f.system.with_domain(f.defaults["jacobian_domain"])
    with pytest.raises(DomainError):
        forward_reach(sys, f.decomposition(which="jacobian"), HyperRect([-6.0, 0.0], [0.0, 0.0]), 1.0)
    with pytest.raises(ValueError):
        forward_reach(f.system, f.decomposition(), HyperRect([-np.inf, 0.0], [0.0, 0.0]), 1.0)


def test_monte_carlo_inside_forward_bound(fx):
    f = fx("casestudy")
    X0 = HyperRect([-0.1, -0.1], [0.1, 0.1])
    res = forward_reach(f.system, f.decomposition(), X0, 1.0)
    mc = monte_carlo_reach(f.system, X0, 1.0, 1000, seed=2)
    assert mc.flagged == 0
    assert np.all(contains_many(res.rect, mc.points, tol=1e-6))


def test_backward_reach_and_preimage(fx):
    f = fx("example3")
    X1, T = f.defaults["x1"], 1.0
    res = backward_reach(f.system, f.decomposition(backward=True), X1, T)
    assert res.direction == "backward"
    mc = monte_carlo_reach(f.system.backward(), X1, T, 500, seed=4)
    assert np.all(contains_many(res.rect, mc.points, tol=1e-6))
    # a backward endpoint driven forward by the time-reversed input lands in X1
    from mmreach.reach import sample_inputs
    x0, sw, vals = sample_inputs(4, [0], X1, f.system.dist_box, T, 8)
    w = DisturbanceSignal(sw[0], vals[0]).reversed(T)
    end = flow_system(f.system, mc.points[0], w, T).final
    assert np.allclose(end, x0[0], atol=1e-3)
    assert np.all(contains_many(X1, end[None], tol=1e-3))


def test_monte_carlo_deterministic_across_threads(fx, monkeypatch):
    f = fx("example2")
    X0 = HyperRect([-0.1, -0.1], [0.1, 0.1])
    a = monte_carlo_reach(f.system, X0, 0.5, 300, seed=9, threads=1)
    monkeypatch.setenv("MMREACH_THREADS", "3")
    assert thread_count() == 3
    b = monte_carlo_reach(f.system, X0, 0.5, 300, seed=9)
    assert np.array_equal(a.points, b.points)
    c = monte_carlo_reach(f.system, X0, 0.5, 300, seed=10, threads=1)
    assert not np.array_equal(a.points, c.points)


def test_run_batches_keeps_order():
    out = run_batches(lambda idx: idx * 2, 10, threads=4, chunk=3)
    assert np.concatenate(out).tolist() == list(range(0, 20, 2))


def test_cloud_csv(tmp_path, fx):
    f = fx("scalar")
    mc = monte_carlo_reach(f.system, HyperRect([-0.5], [0.5]), 1.0, 20, seed=0)
    p = tmp_path / "cloud.csv"
    mc.cloud_csv(p)
    assert p.read_text().splitlines()[0] == "x1"
    assert mc.to_dict()["kept"] == 20
    with pytest.raises(ValueError):
        monte_carlo_reach(f.system, HyperRect([-0.5], [0.5]), 1.0, 0)
