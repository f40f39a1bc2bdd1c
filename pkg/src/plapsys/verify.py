"""Post-hoc certificates: residuals, rectangle membership, boundary rates, comparison fuzz."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRate
from .mesh import distance_field, strip_mask
from .plaplace import SolverOptions, solve_dirichlet
from .system import system_residual


@dataclass
class CheckEntry:
    name: str
    anchor: str
    passed: bool
    worst_coordinate: float
    slack: float
    detail: str = ""

    def line(self):
        status = "pass" if self.passed else "fail"
        return "\t".join((self.name, self.anchor, status, f"{self.worst_coordinate:.17g}", f"{self.slack:.17g}"))


@dataclass
class CertificateReport:
    """Append-only list of checks plus the echoed run context."""

    config: dict = field(default_factory=dict)
    mesh: dict = field(default_factory=dict)
    ledger: list = field(default_factory=list)
    checks: list = field(default_factory=list)

    def add(self, entry):
        self.checks.append(entry)
        return entry

    def extend(self, entries):
        for e in entries:
            self.add(e)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def lines(self):
        out = [f"# config {k} = {v}" for k, v in self.config.items()]
        out += [f"# mesh {k} = {v}" for k, v in self.mesh.items()]
        out += [f"# ledger {name} = {value:.17g}" for name, value, _ in self.ledger]
        out.append("name\tanchor\tstatus\tworst_node_coordinate\tslack")
        out += [c.line() for c in self.checks]
        return out

    def text(self):
        return "\n".join(self.lines()) + "\n"


def _positive(u, v):
    if np.any(np.asarray(u) <= 0) or np.any(np.asarray(v) <= 0):
        raise ValueError("invalid input: the source is undefined unless u, v > 0 at interior nodes")


def weak_residual(sol, cfg, mesh):
    """Max-norm nodal residuals of both equations at ``sol``.

    The ``eps``-regularized sources are used when ``sol.eps > 0``.

    Raises
    ------
    ValueError
        If ``u`` or ``v`` is not positive at every interior node.
    """
    _positive(sol.u, sol.v)
    return system_residual(sol.u, sol.v, sol.eps, cfg, mesh)


def check_rectangle(sol, env, margin=1e-12):
    """Nodewise ``u_lo <= u <= u_hi``, ``v_lo <= v <= v_hi`` and strict ``u < u_hat``, ``v < v_hat``.

    Non-strict bounds tolerate ``margin`` relative to the bound, strict ones
    require a gap of at least ``margin`` relative to the hat value.
    """
    mesh = env.mesh
    u, v = np.asarray(sol.u), np.asarray(sol.v)
    parts = {
        "u >= u_lo": u - env.u_lo + margin * np.abs(env.u_lo),
        "u <= u_hi": env.u_hi - u + margin * np.abs(env.u_hi),
        "v >= v_lo": v - env.v_lo + margin * np.abs(env.v_lo),
        "v <= v_hi": env.v_hi - v + margin * np.abs(env.v_hi),
        "u < u_hat": env.u_hat - u - margin * np.abs(env.u_hat),
        "v < v_hat": env.v_hat - v - margin * np.abs(env.v_hat),
    }
    worst_name, worst_slack, worst_k = None, np.inf, 0
    failed = []
    for name, s in parts.items():
        k = int(np.argmin(s))
        strict = "<" in name and "=" not in name
        bad = s[k] <= 0 if strict else s[k] < 0
        if bad:
            failed.append(name)
        if s[k] < worst_slack:
            worst_name, worst_slack, worst_k = name, float(s[k]), k
    detail = "failed: " + ", ".join(failed) if failed else f"tightest: {worst_name}"
    return CheckEntry("rectangle membership", "ordered sub/supersolution pair with hat domination",
                      not failed, float(mesh.nodes[worst_k]), worst_slack, detail)


def boundary_rate(sol, mesh, floor=0.0):
    """Extreme ratios ``u/d`` over the boundary strip.

    ``sol`` may be a solution pair (its ``u`` is used) or a nodal array.

    Raises
    ------
    DegenerateRate
        If the lower rate is not finite or does not exceed ``floor``.
    """
    u = np.asarray(getattr(sol, "u", sol), dtype=float)
    mask = strip_mask(mesh)
    if not mask.any():
        raise DegenerateRate("boundary strip holds no grid nodes")
    r = u[mask] / distance_field(mesh)[mask]
    k_lo, k_hi = float(r.min()), float(r.max())
    if not (np.isfinite(k_lo) and np.isfinite(k_hi)) or k_lo <= floor:
        raise DegenerateRate(f"boundary rate degenerate: k_lo={k_lo:.3e}, k_hi={k_hi:.3e}")
    return k_lo, k_hi


def _random_source(rng, x, L):
    modes = np.arange(1, 5)
    coef = rng.normal(size=modes.size) / modes
    return rng.uniform(0.5, 2.0) + np.sin(np.pi * np.outer(x / L, modes)) @ coef


def _random_bump(rng, x, L):
    c = rng.uniform(0.0, L)
    w = rng.uniform(0.02, 0.3) * L
    return rng.uniform(0.0, 3.0) * np.exp(-(((x - c) / w) ** 2))


def comparison_fuzz(p, mesh, trials=100, opts=None, seed=0, slack=1e-10):
    """Solve ``-Delta_p u = f`` and ``-Delta_p u = f + bump`` and count ordering violations.

    ``bump >= 0`` is a random Gaussian; a violation is a node where
    ``u_f > u_g + slack``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    opts = opts or SolverOptions()
    rng = np.random.default_rng(seed)
    violations = 0
    worst, worst_k = np.inf, 0
    for _ in range(trials):
        f = _random_source(rng, mesh.nodes, mesh.L)
        g = f + _random_bump(rng, mesh.nodes, mesh.L)
        uf = solve_dirichlet(f, p, mesh, opts)
        ug = solve_dirichlet(g, p, mesh, opts)
        gap = ug - uf
        violations += int(np.any(gap < -slack))
        k = int(np.argmin(gap))
        if gap[k] < worst:
            worst, worst_k = float(gap[k]), k
    return CheckEntry(f"comparison fuzz p={p:g}", "weak comparison principle", violations == 0,
                      float(mesh.nodes[worst_k]), worst + slack, f"{violations} violations in {trials} trials")


def des_fuzz(samples=100_000, seed=0, scale=1e3):
    """Fuzz ``|max(a,b) - max(c,d)| <= max(|a-c|, |b-d|)``; returns the violation count."""
    rng = np.random.default_rng(seed)
    a, b, c, d = (rng.uniform(-scale, scale, samples) for _ in range(4))
    lhs = np.abs(np.maximum(a, b) - np.maximum(c, d))
    rhs = np.maximum(np.abs(a - c), np.abs(b - d))
    return int(np.count_nonzero(lhs > rhs))
