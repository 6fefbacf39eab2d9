"""Explicit Runge-Kutta integration with domain monitoring.

Two drivers live here:

* :func:`integrate_segments` integrates one trajectory with adaptive RKF45 or
  fixed-step RK4, restarting at every segment boundary so piecewise-constant
  inputs do not degrade the order.
* :func:`simulate_many` integrates a batch of trajectories of one system
  under per-sample piecewise-constant disturbances with vectorised RK4.
  Each sample picks its own substep count, so results do not depend on how
  samples are grouped into batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


COMPLETED = "completed"
LEFT_DOMAIN = "left_domain"
STEP_FAILURE = "step_failure"


@dataclass
class IntegratorConfig:
    method: str = "rkf45"
    step: float = 1e-2
    rtol: float = 1e-8
    atol: float = 1e-10
    max_steps: int = 200_000
    exit_policy: str = "stop"
    h_max: float = math.inf

    def __post_init__(self):
        if self.method not in ("rkf45", "rk4"):
            raise ValueError(f"unknown integration method {self.method!r}")
        if self.step <= 0 or self.rtol <= 0 or self.atol <= 0:
            raise ValueError("step, rtol and atol must be positive")
        if self.exit_policy not in ("stop", "ignore"):
            raise ValueError(f"unknown exit policy {self.exit_policy!r}")

    def to_dict(self):
        return {
            "method": self.method, "step": self.step, "rtol": self.rtol,
            "atol": self.atol, "max_steps": self.max_steps,
            "exit_policy": self.exit_policy,
        }


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    exit_flag: str = COMPLETED

    @property
    def final(self):
        return self.states[-1]

    @property
    def completed(self):
        return self.exit_flag == COMPLETED

    def to_csv(self, path, names=None):
        k = self.states.shape[1]
        names = names or [f"x{i + 1}" for i in range(k)]
        with open(path, "w") as fh:
            fh.write(",".join(["time"] + list(names)) + "\n")
            for t, s in zip(self.times, self.states):
                fh.write(",".join(repr(float(v)) for v in (t, *s)) + "\n")


@dataclass
class DisturbanceSignal:
    """Piecewise-constant input taking ``values[k]`` on ``[t_k, t_{k+1})``.

    ``switch_times`` are the interior switch instants ``t_1 < t_2 < ...``;
    there is always one more value than switch time.
    """

    switch_times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.switch_times = np.asarray(self.switch_times, dtype=float).reshape(-1)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[0] != self.switch_times.size + 1:
            raise ValueError("need exactly one more value than switch time")
        if np.any(np.diff(self.switch_times) < 0):
            raise ValueError("switch times must be nondecreasing")

    @classmethod
    def constant(cls, value):
        return cls([], np.asarray(value, dtype=float).reshape(1, -1))

    @classmethod
    def random(cls, box, T, n_switches=8, seed=None, rng=None):
        rng = rng if rng is not None else np.random.default_rng(seed)
        times = np.sort(rng.uniform(0.0, T, n_switches))
        vals = rng.uniform(box.lo, box.hi, size=(n_switches + 1, box.dim))
        return cls(times, vals)

    @classmethod
    def named(cls, kind, box, T=1.0, seed=0, n_switches=8):
        if kind == "constant-lo":
            return cls.constant(box.lo)
        if kind == "constant-hi":
            return cls.constant(box.hi)
        if kind == "seeded-random":
            return cls.random(box, T, n_switches, seed=seed)
        raise ValueError(f"unknown disturbance generator {kind!r}")

    @property
    def dim(self):
        return self.values.shape[1]

    def __call__(self, t):
        return self.values[np.searchsorted(self.switch_times, t, side="right")]

    def inside(self, box):
        return bool(np.all(self.values >= box.lo) and np.all(self.values <= box.hi))

    def reversed(self, T):
        """The signal ``t -> w(T - t)`` on ``[0, T]``."""
        return DisturbanceSignal((T - self.switch_times)[::-1], self.values[::-1])

    def pieces(self, T, t0=0.0):
        """``(t_end, value)`` for each constant piece intersecting ``[t0, T]``."""
        out = []
        ends = list(self.switch_times) + [math.inf]
        start = t0
        for end, val in zip(ends, self.values):
            if end <= start:
                continue
            stop = min(end, T)
            out.append((stop, val))
            start = stop
            if stop >= T:
                break
        return out


# Fehlberg 4(5) tableau
_C = np.array([0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2])
_A = [
    [],
    [1 / 4],
    [3 / 32, 9 / 32],
    [1932 / 2197, -7200 / 2197, 7296 / 2197],
    [439 / 216, -8.0, 3680 / 513, -845 / 4104],
    [-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40],
]
_B4 = np.array([25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0])
_B5 = np.array([16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55])


def rk4_step(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + h / 2, y + (h / 2) * k1)
    k3 = f(t + h / 2, y + (h / 2) * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def rkf45_step(f, t, y, h, k1=None):
    """One Fehlberg step; returns the 5th-order solution and the error estimate.

    The embedded 4th-order solution only serves the error estimate (local
    extrapolation).
    """
    ks = [f(t, y) if k1 is None else k1]
    for s in range(1, 6):
        yi = y + h * sum(a * k for a, k in zip(_A[s], ks))
        ks.append(f(t + _C[s] * h, yi))
    K = np.stack(ks)
    y5 = y + h * (_B5 @ K)
    err = h * ((_B5 - _B4) @ K)
    return y5, err


def _in_box(lo, hi, y):
    return bool(np.all(y >= lo) and np.all(y <= hi))


def _initial_step(f, t, y, cfg, span):
    scale = cfg.atol + cfg.rtol * np.abs(y)
    f0 = f(t, y)
    d0 = np.max(np.abs(y) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    return min(h, span, cfg.h_max), f0


def integrate_segments(segments, y0, cfg, domain=None, t0=0.0):
    """Integrate through consecutive ``(t_end, f)`` segments.

    ``f(t, y)`` is the right-hand side on that segment.  States are recorded
    at every accepted step.  When ``domain`` (lo, hi arrays) is given and the
    policy is ``"stop"``, integration halts at the first accepted state
    outside it and the trajectory ends at the last state inside.
    """
    y = np.array(y0, dtype=float)
    t = float(t0)
    times, states = [t], [y.copy()]
    lo, hi = domain if domain is not None else (None, None)
    steps = 0
    flag = COMPLETED

    def finish(flag):
        return Trajectory(np.array(times), np.array(states), flag)

    for t_end, f in segments:
        h = None
        while t < t_end:
            span = t_end - t
            if cfg.method == "rk4":
                h_try = min(cfg.step, span)
                if span - h_try < 1e-12 * max(1.0, abs(t_end)):
                    h_try = span
                y_new = rk4_step(f, t, y, h_try)
                t_new = t_end if h_try == span else t + h_try
            else:
                if h is None:
                    h, _ = _initial_step(f, t, y, cfg, span)
                while True:
                    h_try = min(h, span)
                    if span - h_try < 1e-12 * max(1.0, abs(t_end)):
                        h_try = span
                    y_new, err = rkf45_step(f, t, y, h_try)
                    scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
                    enorm = float(np.max(np.abs(err) / scale)) if y.size else 0.0
                    if not np.isfinite(enorm):
                        enorm = math.inf
                    if enorm <= 1.0:
                        fac = 5.0 if enorm == 0 else min(5.0, max(0.2, 0.9 * enorm ** -0.2))
                        h = min(h_try * fac, cfg.h_max)
                        break
                    h = h_try * max(0.2, 0.9 * enorm ** -0.2) if np.isfinite(enorm) else h_try * 0.2
                    steps += 1
                    if h < 1e-14 * max(1.0, abs(t)) or steps > cfg.max_steps:
                        return finish(STEP_FAILURE)
                t_new = t_end if h_try == span else t + h_try
            steps += 1
            if steps > cfg.max_steps or not np.all(np.isfinite(y_new)):
                return finish(STEP_FAILURE)
            if lo is not None and cfg.exit_policy == "stop" and not _in_box(lo, hi, y_new):
                return finish(LEFT_DOMAIN)
            t, y = t_new, y_new
            times.append(t)
            states.append(y.copy())
    return finish(flag)


def integrate(f, y0, T, cfg, domain=None):
    """Integrate ``ydot = f(t, y)`` on ``[0, T]``."""
    if T < 0:
        raise ValueError("horizon must be nonnegative")
    return integrate_segments([(float(T), f)], y0, cfg, domain)


@dataclass
class BatchResult:
    """Outcome of :func:`simulate_many`.

    ``alive[s]`` is False when sample ``s`` left the domain; its state is then
    frozen at the last in-domain value.  ``checkpoints`` has shape
    ``(N, C, n)`` with states at the requested common times.
    """

    final: np.ndarray
    alive: np.ndarray
    checkpoints: Optional[np.ndarray] = None
    monitor: dict = field(default_factory=dict)


def simulate_many(field_fn, x0, switch_times, values, T, max_step=1e-2,
                  domain=None, checkpoints=(), monitor=None):
    """Vectorised RK4 for ``xdot = F(x, w(t))`` over a batch of samples.

    ``switch_times`` has shape ``(N, S)`` (sorted per row) and ``values``
    shape ``(N, S + 1, m)``.  ``monitor(x, alive)``, if given, is called
    after every substep with the current states.
    """
    x = np.array(x0, dtype=float)
    N, n = x.shape
    switch_times = np.asarray(switch_times, dtype=float).reshape(N, -1)
    values = np.asarray(values, dtype=float).reshape(N, switch_times.shape[1] + 1, -1)
    cps = np.asarray(checkpoints, dtype=float).reshape(-1)
    C = cps.size
    times = np.concatenate(
        [np.clip(switch_times, 0.0, T), np.broadcast_to(cps, (N, C)), np.full((N, 1), float(T))],
        axis=1,
    )
    is_cp = np.concatenate(
        [np.zeros(switch_times.shape, bool), np.ones((N, C), bool), np.zeros((N, 1), bool)], axis=1
    )
    cp_id = np.concatenate(
        [np.full(switch_times.shape, -1), np.broadcast_to(np.arange(C), (N, C)), np.full((N, 1), -1)], axis=1
    )
    order = np.argsort(times, axis=1, kind="stable")
    times = np.take_along_axis(times, order, axis=1)
    is_cp = np.take_along_axis(is_cp, order, axis=1)
    cp_id = np.take_along_axis(cp_id, order, axis=1)
    starts = np.concatenate([np.zeros((N, 1)), times[:, :-1]], axis=1)
    # index of the constant piece active on each segment
    piece = np.sum(switch_times[:, None, :] <= starts[:, :, None], axis=2)

    lo, hi = (domain.lo, domain.hi) if domain is not None else (None, None)
    alive = np.ones(N, dtype=bool)
    out_cp = np.full((N, C, n), np.nan) if C else None
    rows = np.arange(N)

    for j in range(times.shape[1]):
        L = times[:, j] - starts[:, j]
        K = np.ceil(L / max_step - 1e-12).astype(int)
        K = np.where(L > 0, np.maximum(K, 1), 0)
        h = np.where(K > 0, L / np.maximum(K, 1), 0.0)[:, None]
        w = values[rows, piece[:, j]]

        def f(y, w=w):
            return field_fn(y, w)

        for k in range(int(K.max(initial=0))):
            k1 = f(x)
            k2 = f(x + h / 2 * k1)
            k3 = f(x + h / 2 * k2)
            k4 = f(x + h * k3)
            x_new = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            step = (k < K) & alive
            if lo is not None:
                inside = np.all((x_new >= lo) & (x_new <= hi), axis=1)
                inside &= np.all(np.isfinite(x_new), axis=1)
                alive &= ~(step & ~inside)
                step &= inside
            x = np.where(step[:, None], x_new, x)
            if monitor is not None:
                monitor(x, alive)
        if C:
            sel = is_cp[:, j]
            out_cp[rows[sel], cp_id[sel, j]] = x[sel]
    return BatchResult(x, alive, out_cp)
