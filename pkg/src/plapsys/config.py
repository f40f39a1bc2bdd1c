"""Flat ``key = value`` run configuration.

Blank lines and lines starting with ``#`` are ignored. Every key is optional;
defaults reproduce the shipped golden preset:

=================  ===========================  ============================
key                default                      meaning
=================  ===========================  ============================
p, q               2, 2                         operator exponents
N                  3                            ambient dimension
alpha1, beta1      -0.5, 0.5                    exponents of the u-equation
alpha2, beta2      0.5, -0.5                    exponents of the v-equation
mesh.kind          radial                       ``interval`` or ``radial``
mesh.n             256                          interior node count
mesh.L             1.0                          length or ball radius
mesh.delta         mesh.L / 50                  boundary strip width
solver.tol         1e-10                        residual / fixed-point tolerance
solver.max_iter    500                          iteration cap
solver.damping     0.5                          line-search backtracking factor
eps.schedule       1e-1,1e-2,1e-3,1e-4          decreasing regularization levels
seed               0                            seed of every random draw
=================  ===========================  ============================
"""

from dataclasses import dataclass, field, replace

from .barriers import DEFAULT_EPS_SCHEDULE, ExponentConfig
from .errors import ConfigError
from .mesh import build_mesh
from .plaplace import SolverOptions


def _float(s):
    return float(s)


def _int(s):
    v = float(s)
    if v != int(v):
        raise ValueError(f"expected an integer, got {s}")
    return int(v)


def _schedule(s):
    vals = tuple(float(x) for x in s.split(",") if x.strip())
    if not vals:
        raise ValueError("empty schedule")
    return vals


def _kind(s):
    s = s.strip()
    if s not in ("interval", "radial", "radial-ball", "ball"):
        raise ValueError(f"unknown mesh kind {s!r}")
    return "interval" if s == "interval" else "radial"


PARSERS = {
    "p": _float, "q": _float, "N": _int,
    "alpha1": _float, "beta1": _float, "alpha2": _float, "beta2": _float,
    "mesh.kind": _kind, "mesh.n": _int, "mesh.L": _float, "mesh.delta": _float,
    "solver.tol": _float, "solver.max_iter": _int, "solver.damping": _float,
    "eps.schedule": _schedule, "seed": _int,
}


@dataclass(frozen=True)
class RunConfig:
    p: float = 2.0
    q: float = 2.0
    N: int = 3
    alpha1: float = -0.5
    beta1: float = 0.5
    alpha2: float = 0.5
    beta2: float = -0.5
    mesh_kind: str = "radial"
    mesh_n: int = 256
    mesh_L: float = 1.0
    mesh_delta: float = None
    solver_tol: float = 1e-10
    solver_max_iter: int = 500
    solver_damping: float = 0.5
    eps_schedule: tuple = field(default=DEFAULT_EPS_SCHEDULE)
    seed: int = 0

    @property
    def exponents(self):
        return ExponentConfig(self.p, self.q, self.N, self.alpha1, self.beta1, self.alpha2, self.beta2)

    @property
    def delta(self):
        return self.mesh_L / 50.0 if self.mesh_delta is None else self.mesh_delta

    def solver_options(self):
        return SolverOptions(newton_tol=self.solver_tol, max_iter=self.solver_max_iter, damping=self.solver_damping)

    def build_mesh(self):
        return build_mesh(self.mesh_kind, self.mesh_n, self.mesh_L, self.delta,
                          self.N if self.mesh_kind == "radial" else None)

    def items(self):
        """Canonical ``(key, value-text)`` pairs in file order, defaults resolved."""
        out = []
        for key in PARSERS:
            val = getattr(self, key.replace(".", "_"))
            if key == "mesh.delta":
                val = self.delta
            if key == "eps.schedule":
                text = ",".join(repr(float(e)) for e in val)
            elif isinstance(val, float):
                text = repr(val)
            else:
                text = str(val)
            out.append((key, text))
        return out

    def echo(self):
        return "\n".join(f"{k} = {v}" for k, v in self.items())


def parse_config(text):
    """Parse configuration text; raises ``ConfigError`` naming the offending line."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw!r}", lineno)
        key, _, val = (s.strip() for s in line.partition("="))
        if key not in PARSERS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        if not val:
            raise ConfigError(f"missing value for {key!r}", lineno)
        try:
            values[key] = (PARSERS[key](val), lineno)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", lineno) from None
    cfg = RunConfig(**{k.replace(".", "_"): v for k, (v, _) in values.items()})
    _validate(cfg, {k: ln for k, (_, ln) in values.items()})
    return cfg


def _validate(cfg, lines):
    def fail(key, msg):
        raise ConfigError(msg, lines.get(key))

    if cfg.mesh_n < 3:
        fail("mesh.n", "mesh.n must be >= 3")
    if cfg.mesh_L <= 0:
        fail("mesh.L", "mesh.L must be positive")
    if not 0 < cfg.delta < cfg.mesh_L / 2:
        fail("mesh.delta", "mesh.delta must lie in (0, mesh.L/2)")
    if cfg.mesh_kind == "radial" and cfg.N < 2:
        fail("N", "radial meshes need N >= 2")
    if cfg.solver_tol <= 0:
        fail("solver.tol", "solver.tol must be positive")
    if cfg.solver_max_iter < 1:
        fail("solver.max_iter", "solver.max_iter must be >= 1")
    if not 0 < cfg.solver_damping < 1:
        fail("solver.damping", "solver.damping must lie in (0, 1)")
    sched = cfg.eps_schedule
    if any(not 0 < e < 1 for e in sched) or any(b >= a for a, b in zip(sched, sched[1:])):
        fail("eps.schedule", "eps.schedule must be strictly decreasing inside (0, 1)")


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def with_seed(cfg, seed):
    return cfg if seed is None else replace(cfg, seed=int(seed))
