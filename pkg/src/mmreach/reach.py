"""Forward and backward reachable-set over-approximation, plus a Monte-Carlo oracle."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .embedding import flow_embedding, make_embedding
from .errors import DomainError, StepFailure
from .geometry import EmbeddingPoint, HyperRect, rect_subset
from .integrate import LEFT_DOMAIN, STEP_FAILURE, simulate_many


@dataclass
class ReachResult:
    """Rectangle bounding the reachable set at ``T``.

    ``rect`` is None whenever ``hypothesis_ok`` is False: the embedding left
    ``X x X`` and no bound is claimed.
    """

    T: float
    rect: Optional[HyperRect]
    tube: Optional[list]
    hypothesis_ok: bool
    direction: str = "forward"

    def to_dict(self):
        return {
            "direction": self.direction,
            "T": self.T,
            "hypothesis_ok": self.hypothesis_ok,
            "rect": None if self.rect is None else self.rect.to_dict(),
        }

    def tube_csv(self, path):
        n = self.rect.dim if self.rect is not None else len(self.tube[0][1].lo)
        header = ["time"] + [f"lo{i + 1}" for i in range(n)] + [f"hi{i + 1}" for i in range(n)]
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for t, r in self.tube or []:
                fh.write(",".join(repr(float(v)) for v in (t, *r.lo, *r.hi)) + "\n")


def forward_reach(sys, d, X0, T, cfg=None, tube=True):
    """Over-approximate ``R^F(T; X0)`` by the embedding state started at ``(X0.lo, X0.hi)``."""
    if not X0.is_finite():
        raise ValueError("initial rectangle must be finite")
    if not rect_subset(X0, sys.domain):
        raise DomainError("initial rectangle is not inside the domain")
    E = make_embedding(sys, d)
    traj = flow_embedding(E, EmbeddingPoint.from_rect(X0), T, cfg)
    if traj.exit_flag == STEP_FAILURE:
        raise StepFailure(f"integration failed at t={traj.times[-1]:.6g}")
    n = sys.n
    rects = [(float(t), HyperRect(s[:n], s[n:])) for t, s in zip(traj.times, traj.states)] if tube else None
    if traj.exit_flag == LEFT_DOMAIN:
        return ReachResult(float(T), None, rects, False)
    return ReachResult(float(T), HyperRect(traj.final[:n], traj.final[n:]), rects, True)


def backward_reach(sys, D, X1, T, cfg=None, tube=True):
    """Over-approximate the states that some disturbance drives into ``X1`` at time ``T``.

    ``D`` must be a decomposition function for the backward dynamics ``-F``.
    """
    res = forward_reach(sys.backward(), D, X1, T, cfg, tube)
    res.direction = "backward"
    return res


def thread_count(default=None):
    env = os.environ.get("MMREACH_THREADS")
    cap = int(env) if env else (default or os.cpu_count() or 1)
    return max(1, cap)


@dataclass
class MonteCarloResult:
    points: np.ndarray
    hull: Optional[HyperRect]
    flagged: int
    checkpoints: Optional[np.ndarray] = None
    seed: int = 0

    def to_dict(self):
        return {
            "count": int(self.points.shape[0] + self.flagged),
            "kept": int(self.points.shape[0]),
            "flagged": self.flagged,
            "seed": self.seed,
            "hull": None if self.hull is None else self.hull.to_dict(),
        }

    def cloud_csv(self, path):
        n = self.points.shape[1]
        with open(path, "w") as fh:
            fh.write(",".join(f"x{i + 1}" for i in range(n)) + "\n")
            for p in self.points:
                fh.write(",".join(repr(float(v)) for v in p) + "\n")


def sample_inputs(seed, indices, X0, box, T, n_switches):
    """Initial states and disturbance schedules for the given sample indices.

    Sample ``i`` draws from ``default_rng([seed, i])``, so a sample's data does
    not depend on the batch it is computed in.
    """
    n, m = X0.dim, box.dim
    x0 = np.empty((len(indices), n))
    sw = np.empty((len(indices), n_switches))
    vals = np.empty((len(indices), n_switches + 1, m))
    for r, i in enumerate(indices):
        rng = np.random.default_rng([seed, int(i)])
        x0[r] = rng.uniform(X0.lo, X0.hi)
        sw[r] = np.sort(rng.uniform(0.0, T, n_switches))
        vals[r] = rng.uniform(box.lo, box.hi, size=(n_switches + 1, m))
    return x0, sw, vals


def run_batches(fn, count, threads=None, chunk=2048):
    """Apply ``fn(indices)`` over index chunks, possibly in a thread pool; keeps order."""
    chunks = [np.arange(s, min(s + chunk, count)) for s in range(0, count, chunk)]
    workers = min(thread_count(threads), len(chunks)) if chunks else 1
    if workers <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def monte_carlo_reach(sys, X0, T, count, seed=0, n_switches=8, max_step=1e-2,
                      checkpoints=(), threads=None):
    """Endpoints of ``count`` sampled trajectories and their bounding box.

    The hull under-approximates the reachable set.  Samples that leave the
    domain are flagged and excluded.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if not X0.is_finite():
        raise ValueError("initial rectangle must be finite")

    def one(idx):
        x0, sw, vals = sample_inputs(seed, idx, X0, sys.dist_box, T, n_switches)
        return simulate_many(sys.field, x0, sw, vals, T, max_step, sys.domain, checkpoints)

    parts = run_batches(one, count, threads)
    final = np.concatenate([p.final for p in parts])
    alive = np.concatenate([p.alive for p in parts])
    cps = np.concatenate([p.checkpoints for p in parts]) if len(checkpoints) else None
    pts = final[alive]
    hull = HyperRect(pts.min(axis=0), pts.max(axis=0)) if len(pts) else None
    return MonteCarloResult(pts, hull, int((~alive).sum()),
                            None if cps is None else cps[alive], seed)
