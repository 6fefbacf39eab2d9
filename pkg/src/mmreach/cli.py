"""Command-line entry point: ``mmreach <command> [options]``.

Exit status: 0 success, 1 refused certification or failed validation,
2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .config import AnalysisConfig, CommandBlock, SystemBlock, as_matrix, build_system, load, parse_rect
from .decompose import (
    JacobianBounds,
    SelectionFlags,
    build_backward_decomposition,
    build_jacobian_decomposition,
    build_monotone_decomposition,
    build_polynomial_decomposition,
)
from .embedding import make_embedding
from .errors import (
    CertificationRefused,
    ConfigError,
    ConstructionError,
    DimensionError,
    DomainError,
    MMReachError,
    NotARectangleError,
    NumericError,
    PreconditionError,
)
from .fixtures import get_fixture, list_fixtures
from .geometry import EmbeddingPoint
from .invariance import (
    certify_attractive_rect,
    certify_complement_invariant,
    certify_invariant_rect,
    check_monotone_corollary,
    find_equilibrium_flow,
    solve_equilibrium_newton,
)
from .reach import backward_reach, forward_reach, monte_carlo_reach
from .system import SamplingPlan, validate_decomposition

EXIT_OK, EXIT_REFUSED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class Context:
    """Resolved system, fixture and decomposition for one invocation."""

    def __init__(self, cfg):
        self.cfg = cfg
        s = cfg.system
        if s.fixture is not None:
            try:
                self.fixture = get_fixture(s.fixture)
            except KeyError as exc:
                raise ConfigError(exc.args[0]) from None
            self.system = self.fixture.system
        else:
            self.fixture = None
            self.system = build_system(s)
        self.defaults = self.fixture.defaults if self.fixture else {}
        self.integrator = cfg.integrator.build()

    @property
    def backward(self):
        return self.cfg.decomposition.backward

    def analysis_system(self):
        """Forward system, restricted to a variant's validity domain if it has one."""
        variant = self.cfg.decomposition.variant
        dom = self.defaults.get(f"{variant}_domain") if variant else None
        return self.system.with_domain(dom) if dom is not None else self.system

    def decomposition(self):
        """Decomposition for the target dynamics (``-F`` when backward)."""
        d = self.cfg.decomposition
        sys_ = self.analysis_system()
        target = sys_.backward() if d.backward else sys_
        if d.mode == "user":
            if self.fixture is None:
                raise ConfigError("mode 'user' needs a fixture")
            try:
                return self.fixture.decomposition(d.backward, d.variant)
            except KeyError as exc:
                raise ConfigError(exc.args[0]) from None
        if d.mode == "monotone":
            return build_monotone_decomposition(target)
        if d.mode == "polynomial":
            return build_polynomial_decomposition(target)
        n, m = sys_.n, sys_.m
        bounds = JacobianBounds(
            as_matrix(d.jx_lo, n, n, "jx_lo"), as_matrix(d.jx_hi, n, n, "jx_hi"),
            as_matrix(d.jw_lo, n, m, "jw_lo"), as_matrix(d.jw_hi, n, m, "jw_hi"),
        )
        flags = None
        if d.flags_x is not None:
            fw = d.flags_w if d.flags_w is not None else np.zeros((n, m), dtype=int)
            flags = SelectionFlags(d.flags_x, fw)
        if d.bounds_domain:
            sys_ = sys_.with_domain(parse_rect(d.bounds_domain, "bounds_domain", True, n))
        dj = build_jacobian_decomposition(sys_, bounds, flags)
        return build_backward_decomposition(dj, sys_) if d.backward else dj

    def rect(self, keys):
        c = self.cfg.command
        n = self.system.n
        if c.x0 is not None:
            return parse_rect(c.x0, "x0", dim=n)
        for k in keys:
            if k in self.defaults:
                return self.defaults[k]
        raise ConfigError("no initial rectangle given (use --x0)")

    def horizon(self):
        T = self.cfg.command.T if self.cfg.command.T is not None else self.defaults.get("T")
        if T is None:
            raise ConfigError("no time horizon given (use --T)")
        if T < 0:
            raise ConfigError("T must be nonnegative")
        return float(T)

    def given_point(self):
        c = self.cfg.command
        if c.start_x is None:
            return None
        try:
            p = EmbeddingPoint(c.start_x, c.start_xhat)
        except ValueError as exc:
            raise ConfigError(f"start point: {exc}") from None
        if p.dim != self.system.n:
            raise ConfigError(f"start point has dimension {p.dim}, expected {self.system.n}")
        return p


def _system_info(ctx):
    info = {"name": ctx.system.name, "n": ctx.system.n, "m": ctx.system.m}
    d = ctx.cfg.decomposition
    info["decomposition"] = {"mode": d.mode, "backward": d.backward, "variant": d.variant}
    return info


def _equilibria(ctx, E, method):
    """Run the requested equilibrium search; returns a list of results."""
    c = ctx.cfg.command
    pre = "backward_" if ctx.backward else ""
    given = ctx.given_point()
    start = given or ctx.defaults.get(f"{pre}start") or ctx.defaults.get(f"{pre}flow_start")
    guess = given or ctx.defaults.get(f"{pre}guess")
    if method == "auto":
        method = "flow" if (given or ctx.defaults.get(f"{pre}start")) is not None else "newton"
    runs = ["flow", "newton"] if method == "both" else [method]
    out = []
    for r in runs:
        if r == "flow":
            if start is None:
                raise ConfigError("flow needs a start point (start_x, start_xhat)")
            out.append(find_equilibrium_flow(E, start, ctx.integrator, tol_eq=c.tol_eq))
        else:
            if guess is None:
                raise ConfigError("newton needs an initial guess (start_x, start_xhat)")
            out.append(solve_equilibrium_newton(E, guess, tol_eq=c.tol_eq))
    return out


def _target_embedding(ctx):
    sys_ = ctx.analysis_system()
    return make_embedding(sys_.backward() if ctx.backward else sys_, ctx.decomposition())


def cmd_reach(ctx, backward=False):
    T = ctx.horizon()
    d = ctx.decomposition()
    sys_ = ctx.analysis_system()
    if backward:
        res = backward_reach(sys_, d, ctx.rect(["x1", "x0"]), T, ctx.integrator)
    else:
        res = forward_reach(sys_, d, ctx.rect(["x0"]), T, ctx.integrator)
    payload = {"command": "backreach" if backward else "reach", "system": _system_info(ctx),
               "result": res.to_dict()}
    artifacts = {"tube.csv": res.tube_csv}
    status = EXIT_OK
    if not res.hypothesis_ok:
        payload["error"] = "NumericError: embedding state left the domain; no bound is claimed"
        status = EXIT_NUMERIC
    return payload, artifacts, status


def cmd_equilibrium(ctx):
    E = _target_embedding(ctx)
    results = _equilibria(ctx, E, ctx.cfg.command.method)
    payload = {"command": "equilibrium", "system": _system_info(ctx),
               "results": [r.to_dict() for r in results]}
    if len(results) == 2:
        payload["agreement"] = float(np.max(np.abs(results[0].point.as_array()
                                                   - results[1].point.as_array())))
    return payload, {}, EXIT_OK


def cmd_certify(ctx):
    c = ctx.cfg.command
    kind = c.kind
    if kind == "monotone-corollary":
        res = check_monotone_corollary(ctx.analysis_system(), ctx.decomposition(), ctx.integrator,
                                       tol_eq=c.tol_eq)
        cert = res.certificate
    elif kind == "invariant-complement":
        if not ctx.backward:
            ctx.cfg.decomposition.backward = True
        sys_ = ctx.analysis_system()
        D = ctx.decomposition()
        E = make_embedding(sys_.backward(), D)
        a, tol = _certify_point(ctx, E)
        cert = certify_complement_invariant(sys_, D, a, tol)
    else:
        if ctx.backward:
            raise ConfigError(f"{kind} certificates use the forward decomposition")
        E = _target_embedding(ctx)
        if kind == "invariant-rect":
            a, tol = _certify_point(ctx, E)
            cert = certify_invariant_rect(E, a, tol)
        else:
            if c.method == "point":
                raise ConfigError("attractive-rect needs an equilibrium, not a point")
            eq = _equilibria(ctx, E, c.method)[0]
            cert = certify_attractive_rect(
                E, eq, tol=max(c.tol, eq.residual), sample_count=c.attractivity_samples,
                T_max=c.T_max, ball_radius=c.ball_radius, seed=c.seed,
            )
    cert.metadata.setdefault("system", ctx.system.name)
    return {"command": "certify", "certificate": cert.to_dict()}, {}, EXIT_OK


def _certify_point(ctx, E):
    """The point to certify and the slack to use.

    A numerically found equilibrium is tested with slack ``max(tol, residual)``;
    a user-given point (``method = "point"``) with ``tol`` alone.
    """
    c = ctx.cfg.command
    if c.method == "point":
        a = ctx.given_point()
        if a is None:
            raise ConfigError("method 'point' needs start_x and start_xhat")
        return a, c.tol
    eq = _equilibria(ctx, E, c.method)[0]
    if not eq.in_triangle:
        raise CertificationRefused("equilibrium is not in the triangle", "triangle")
    return eq.point, max(c.tol, eq.residual)


def cmd_validate(ctx):
    c = ctx.cfg.command
    sys_ = ctx.analysis_system()
    target = sys_.backward() if ctx.backward else sys_
    rep = validate_decomposition(target, ctx.decomposition(), SamplingPlan(samples=c.samples, seed=c.seed))
    payload = {"command": "validate", "system": _system_info(ctx), "report": rep.to_dict()}
    return payload, {}, EXIT_OK if rep.passed else EXIT_REFUSED


def cmd_montecarlo(ctx):
    c = ctx.cfg.command
    sys_ = ctx.system.backward() if ctx.backward else ctx.system
    X0 = ctx.rect(["x1", "x0"] if ctx.backward else ["x0"])
    res = monte_carlo_reach(sys_, X0, ctx.horizon(), c.count, seed=c.seed,
                            n_switches=c.n_switches, max_step=c.max_step)
    payload = {"command": "montecarlo", "system": _system_info(ctx), "result": res.to_dict()}
    return payload, {"cloud.csv": res.cloud_csv}, EXIT_OK


def cmd_fixtures(_cfg):
    return {"command": "fixtures", "fixtures": list_fixtures()}, {}, EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="mmreach", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"mmreach {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("reach", "backreach", "equilibrium", "certify", "validate", "montecarlo", "fixtures"):
        sp = sub.add_parser(name)
        if name == "fixtures":
            continue
        sp.add_argument("--config", help="TOML analysis config")
        sp.add_argument("--fixture", help="built-in system name")
        sp.add_argument("--mode", choices=["user", "jacobian", "monotone", "polynomial"])
        sp.add_argument("--variant", help="named fixture decomposition")
        sp.add_argument("--backward", action="store_true", default=None,
                        help="use the decomposition of the backward dynamics")
        sp.add_argument("--x0", "--x1", dest="x0", help='rectangle "[a,b]x[c,d]"')
        sp.add_argument("--T", type=float)
        sp.add_argument("--method", choices=["auto", "flow", "newton", "both", "point"])
        sp.add_argument("--start-x", type=_floats)
        sp.add_argument("--start-xhat", type=_floats)
        sp.add_argument("--kind", choices=["invariant-rect", "attractive-rect",
                                           "invariant-complement", "monotone-corollary"])
        sp.add_argument("--tol", type=float)
        sp.add_argument("--samples", type=int)
        sp.add_argument("--count", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="directory for JSON/CSV artifacts")
    return p


def _floats(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def config_from_args(args):
    cfg = load(args.config) if args.config else AnalysisConfig(
        system=SystemBlock(fixture=args.fixture or "example1"), command=CommandBlock(name=args.command)
    )
    cfg.command.name = args.command
    if args.fixture:
        cfg.system = SystemBlock(fixture=args.fixture)
    d, c = cfg.decomposition, cfg.command
    for attr, target, key in [
        ("mode", d, "mode"), ("variant", d, "variant"), ("backward", d, "backward"),
        ("x0", c, "x0"), ("T", c, "T"), ("method", c, "method"), ("start_x", c, "start_x"),
        ("start_xhat", c, "start_xhat"), ("kind", c, "kind"), ("tol", c, "tol"),
        ("samples", c, "samples"), ("count", c, "count"), ("seed", c, "seed"),
    ]:
        v = getattr(args, attr)
        if v is not None:
            setattr(target, key, v)
    if args.out:
        cfg.output.dir = args.out
    cfg.check()
    return cfg


COMMAND_TABLE = {
    "reach": cmd_reach,
    "backreach": lambda ctx: cmd_reach(ctx, backward=True),
    "equilibrium": cmd_equilibrium,
    "certify": cmd_certify,
    "validate": cmd_validate,
    "montecarlo": cmd_montecarlo,
}


def run(cfg):
    """Execute one configured command; returns ``(payload, artifacts, status)``."""
    if cfg.command.name == "fixtures":
        return cmd_fixtures(cfg)
    ctx = Context(cfg)
    if cfg.command.name == "backreach":
        cfg.decomposition.backward = True
    return COMMAND_TABLE[cfg.command.name](ctx)


def write_outputs(cfg, payload, artifacts):
    text = json.dumps(payload, indent=2, sort_keys=True)
    print(text)
    out = cfg.output.dir
    if out:
        os.makedirs(out, exist_ok=True)
        pre = cfg.output.prefix
        with open(os.path.join(out, f"{pre}{cfg.command.name}.json"), "w") as fh:
            fh.write(text + "\n")
        for fname, writer in artifacts.items():
            writer(os.path.join(out, pre + fname))


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "fixtures":
            cfg = AnalysisConfig(command=CommandBlock(name="fixtures"), system=SystemBlock(fixture="example1"))
        else:
            cfg = config_from_args(args)
        payload, artifacts, status = run(cfg)
    except CertificationRefused as exc:
        return _fail(exc, EXIT_REFUSED)
    except PreconditionError as exc:
        return _fail(exc, EXIT_REFUSED)
    except (ConfigError, DimensionError, NotARectangleError, DomainError, ConstructionError) as exc:
        return _fail(exc, EXIT_CONFIG)
    except NumericError as exc:
        return _fail(exc, EXIT_NUMERIC)
    except MMReachError as exc:
        return _fail(exc, EXIT_CONFIG)
    except ValueError as exc:
        return _fail(exc, EXIT_CONFIG)
    write_outputs(cfg, payload, artifacts)
    if "error" in payload:
        print(f"error: {payload['error']}", file=sys.stderr)
    return status


def _fail(exc, status):
    print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
