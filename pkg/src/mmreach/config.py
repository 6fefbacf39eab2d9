"""Analysis configuration: TOML file <-> :class:`AnalysisConfig`.

Layout::

    [system]
    fixture = "example2"          # or n, m, field, domain, dist_box
    [decomposition]
    mode = "user"                 # user | jacobian | monotone | polynomial
    backward = false
    [command]
    name = "reach"
    x0 = "[-0.1,0.1]x[-0.1,0.1]"
    T = 3.0
    [integrator]
    method = "rkf45"
    [output]
    dir = "out"

Polynomial fields are ``field = [[{coeff = 1.0, exponents = [0, 2]}, ...], ...]``,
one list of terms per component, exponents over ``x1..xn, w1..wm``.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .errors import ConfigError
from .geometry import HyperRect
from .integrate import IntegratorConfig
from .polynomial import PolyExpr
from .system import SystemDef

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

COMMANDS = ("reach", "backreach", "equilibrium", "certify", "validate", "montecarlo", "fixtures")
MODES = ("user", "jacobian", "monotone", "polynomial")
KINDS = ("invariant-rect", "attractive-rect", "invariant-complement", "monotone-corollary")
METHODS = ("auto", "flow", "newton", "both", "point")


def format_rect(rect):
    return "x".join(f"[{float(a)!r},{float(b)!r}]" for a, b in zip(rect.lo, rect.hi))


def parse_rect(text, what, allow_infinite=False, dim=None):
    try:
        rect = HyperRect([], []) if text == "" else HyperRect.parse(text, allow_infinite)
    except ValueError as exc:
        raise ConfigError(f"{what}: {exc}") from None
    if dim is not None and rect.dim != dim:
        raise ConfigError(f"{what} has dimension {rect.dim}, expected {dim}")
    return rect


@dataclass
class SystemBlock:
    fixture: Optional[str] = None
    name: str = "custom"
    n: Optional[int] = None
    m: Optional[int] = None
    field: Optional[list] = None
    domain: Optional[str] = None
    dist_box: Optional[str] = None


@dataclass
class DecompositionBlock:
    mode: str = "user"
    backward: bool = False
    variant: Optional[str] = None
    jx_lo: Optional[list] = None
    jx_hi: Optional[list] = None
    jw_lo: Optional[list] = None
    jw_hi: Optional[list] = None
    flags_x: Optional[list] = None
    flags_w: Optional[list] = None
    bounds_domain: Optional[str] = None


@dataclass
class CommandBlock:
    name: str = "reach"
    x0: Optional[str] = None
    T: Optional[float] = None
    method: str = "auto"
    start_x: Optional[list] = None
    start_xhat: Optional[list] = None
    kind: str = "invariant-rect"
    tol: float = 0.0
    tol_eq: float = 1e-9
    samples: int = 10000
    seed: int = 0
    count: int = 10000
    n_switches: int = 8
    max_step: float = 1e-2
    attractivity_samples: int = 100
    T_max: float = 20.0
    ball_radius: float = 0.05


@dataclass
class IntegratorBlock:
    method: str = "rkf45"
    step: float = 1e-2
    rtol: float = 1e-8
    atol: float = 1e-10
    max_steps: int = 200000

    def build(self):
        return IntegratorConfig(method=self.method, step=self.step, rtol=self.rtol,
                                atol=self.atol, max_steps=self.max_steps)


@dataclass
class OutputBlock:
    dir: Optional[str] = None
    prefix: str = ""


@dataclass
class AnalysisConfig:
    system: SystemBlock = field(default_factory=SystemBlock)
    decomposition: DecompositionBlock = field(default_factory=DecompositionBlock)
    command: CommandBlock = field(default_factory=CommandBlock)
    integrator: IntegratorBlock = field(default_factory=IntegratorBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    def to_dict(self):
        def strip(d):
            return {k: v for k, v in d.items() if v is not None}
        return {f.name: strip(asdict(getattr(self, f.name))) for f in fields(self)}

    @classmethod
    def from_dict(cls, data):
        blocks = {f.name: f.default_factory for f in fields(cls)}
        unknown = set(data) - set(blocks)
        if unknown:
            raise ConfigError(f"unknown config table(s): {', '.join(sorted(unknown))}")
        kwargs = {}
        for name, factory in blocks.items():
            raw = data.get(name, {})
            if not isinstance(raw, dict):
                raise ConfigError(f"[{name}] must be a table")
            allowed = {f.name for f in fields(factory)}
            bad = set(raw) - allowed
            if bad:
                raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(bad))}")
            kwargs[name] = factory(**raw)
        cfg = cls(**kwargs)
        cfg.check()
        return cfg

    def check(self):
        c, d = self.command, self.decomposition
        if c.name not in COMMANDS:
            raise ConfigError(f"unknown command {c.name!r}; choose from {', '.join(COMMANDS)}")
        if d.mode not in MODES:
            raise ConfigError(f"unknown decomposition mode {d.mode!r}")
        if c.kind not in KINDS:
            raise ConfigError(f"unknown certificate kind {c.kind!r}")
        if c.method not in METHODS:
            raise ConfigError(f"unknown equilibrium method {c.method!r}")
        if self.integrator.method not in ("rkf45", "rk4"):
            raise ConfigError(f"unknown integrator {self.integrator.method!r}")
        s = self.system
        if s.fixture is None and (s.n is None or s.field is None):
            raise ConfigError("[system] needs either fixture or n, m and field")
        if (c.start_x is None) != (c.start_xhat is None):
            raise ConfigError("start_x and start_xhat must be given together")

    def dumps(self):
        return tomli_w.dumps(self.to_dict())


def loads(text):
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    return AnalysisConfig.from_dict(data)


def load(path):
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode("utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return loads(text)


def dump(cfg, path):
    with open(path, "w") as fh:
        fh.write(cfg.dumps())


def build_system(block):
    """Polynomial system from a ``[system]`` table without a fixture."""
    n, m = block.n, block.m or 0
    if len(block.field) != n:
        raise ConfigError(f"field has {len(block.field)} components, expected {n}")
    try:
        exprs = [PolyExpr.from_terms(n, m, row) for row in block.field]
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad polynomial field: {exc}") from None
    domain = (parse_rect(block.domain, "domain", allow_infinite=True, dim=n)
              if block.domain else HyperRect.full(n))
    if m and not block.dist_box:
        raise ConfigError("dist_box is required when m > 0")
    box = parse_rect(block.dist_box or "", "dist_box", dim=m)
    return SystemDef.from_polynomial(exprs, domain, box, name=block.name)


def as_matrix(v, rows, cols, what):
    a = np.zeros((rows, cols)) if v is None and cols == 0 else np.asarray(v, dtype=float)
    if a.shape != (rows, cols):
        raise ConfigError(f"{what} must have shape ({rows}, {cols}), got {a.shape}")
    return a
