"""Auxiliary problems, certified constants and the sub/supersolution envelope.

Pipeline: ``check_exponents`` -> ``solve_auxiliaries`` -> ``fit_envelope_constants``
-> ``select_constants`` -> ``build_envelope``.
"""

from dataclasses import dataclass, field
from math import inf

import numpy as np

from .errors import EnvelopeViolation, FitFailure, NonConvergence, SelectionDiverged
from .mesh import distance_field, strip_mask
from .plaplace import (
    SingularSource,
    SolverOptions,
    apply_p_laplacian,
    newton_solve,
    principal_eigenpair,
    solve_dirichlet,
)

DEFAULT_EPS_SCHEDULE = (1e-1, 1e-2, 1e-3, 1e-4)
T_SAMPLES = (0.0, 0.5, 1.0)


@dataclass(frozen=True)
class ExponentConfig:
    """Exponents of the system ``-Delta_p u = u^a1 v^b1``, ``-Delta_q v = u^a2 v^b2``."""

    p: float
    q: float
    N: int
    alpha1: float
    beta1: float
    alpha2: float
    beta2: float

    @property
    def p_star(self):
        return self.N * self.p / (self.N - self.p) if self.p < self.N else inf

    @property
    def q_star(self):
        return self.N * self.q / (self.N - self.q) if self.q < self.N else inf

    @property
    def symmetric(self):
        return self.p == self.q and self.alpha1 == self.beta2 and self.beta1 == self.alpha2

    def as_dict(self):
        return {k: getattr(self, k) for k in ("p", "q", "N", "alpha1", "beta1", "alpha2", "beta2")}


@dataclass
class ExponentReport:
    passed: bool
    margins: dict
    beta1_bound: float
    alpha2_bound: float


def check_exponents(cfg):
    """Evaluate every strict inequality of the singular exponent condition.

    Each margin is the slack of one strict inequality; the report passes iff
    all margins are positive.
    """
    margins = {
        "p > 1": cfg.p - 1.0,
        "p < N": cfg.N - cfg.p,
        "q > 1": cfg.q - 1.0,
        "q < N": cfg.N - cfg.q,
    }
    if cfg.p < cfg.N and cfg.q < cfg.N and cfg.p > 1 and cfg.q > 1:
        b1 = min(cfg.p - 1.0, cfg.q_star / cfg.p_star * (cfg.p - 1.0 - cfg.alpha1))
        a2 = min(cfg.q - 1.0, cfg.p_star / cfg.q_star * (cfg.q - 1.0 - cfg.beta2))
    else:
        b1 = a2 = -inf
    margins.update(
        {
            "alpha1 > -1": cfg.alpha1 + 1.0,
            "alpha1 < 0": -cfg.alpha1,
            "beta1 > 0": cfg.beta1,
            "beta1 < bound": b1 - cfg.beta1,
            "beta2 > -1": cfg.beta2 + 1.0,
            "beta2 < 0": -cfg.beta2,
            "alpha2 > 0": cfg.alpha2,
            "alpha2 < bound": a2 - cfg.alpha2,
        }
    )
    passed = all(v > 0 for v in margins.values())
    return ExponentReport(passed, margins, b1, a2)


@dataclass
class BarrierSet:
    """Solutions of the six auxiliary Dirichlet problems and their data."""

    w1: np.ndarray
    w2: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    h1_field: np.ndarray
    h2_field: np.ndarray
    eigen_p: object
    eigen_q: object
    cfg: ExponentConfig
    mesh: object
    residuals: dict = field(default_factory=dict)


def signed_source(phi, expo, mask):
    """``+phi^expo`` off the strip and ``-phi^expo`` on it."""
    out = phi**expo
    return np.where(mask, -out, out)


def solve_singular_self(alpha, p, mesh, opts, method="newton", relax=0.5):
    """Positive solution of ``-Delta_p w = w^alpha`` with ``-1 < alpha < 0``.

    ``method="newton"`` minimizes the convex energy by damped Newton.
    ``method="picard"`` iterates ``-Delta_p w_{k+1} = w_k^alpha`` with
    under-relaxation ``relax`` from a positive seed; it serves as a cross-check.
    """
    seed = solve_dirichlet(np.ones(mesh.n), p, mesh, opts)
    if method == "newton":
        w, _, _ = newton_solve(np.zeros(mesh.n), p, mesh, opts, shift=SingularSource(alpha), u0=seed,
                               stage=f"singular-self(alpha={alpha})")
        return w
    w = seed
    for k in range(opts.max_iter):
        nxt = solve_dirichlet(w**alpha, p, mesh, opts, u0=w)
        new = (1.0 - relax) * w + relax * nxt
        diff = float(np.max(np.abs(new - w)))
        w = new
        if diff <= opts.newton_tol:
            return w
    raise NonConvergence(f"singular-self(alpha={alpha}): picard did not settle", diff)


def solve_auxiliaries(cfg, mesh, opts=None):
    """Solve the eigenproblems and the six auxiliary problems on ``mesh``.

    Raises
    ------
    NonConvergence
        With the offending subproblem named in the message.
    """
    opts = opts or SolverOptions()
    rep = check_exponents(cfg)
    if not rep.passed:
        bad = [k for k, v in rep.margins.items() if v <= 0]
        raise ValueError(f"exponent condition fails: {', '.join(bad)}")
    mask = strip_mask(mesh)

    def stage(name, fn, *args):
        try:
            return fn(*args)
        except NonConvergence as exc:
            raise NonConvergence(f"auxiliary {name}: {exc}", exc.residual) from exc

    eig_p = stage("eigen_p", principal_eigenpair, cfg.p, mesh, opts)
    eig_q = eig_p if cfg.q == cfg.p else stage("eigen_q", principal_eigenpair, cfg.q, mesh, opts)
    phi_p, phi_q = eig_p.phi, eig_q.phi

    w1 = stage("w1", solve_singular_self, cfg.alpha1, cfg.p, mesh, opts)
    if cfg.q == cfg.p and cfg.beta2 == cfg.alpha1:
        w2 = w1.copy()
    else:
        w2 = stage("w2", solve_singular_self, cfg.beta2, cfg.q, mesh, opts)
    xi1 = stage("xi1", solve_dirichlet, phi_p**cfg.alpha1, cfg.p, mesh, opts)
    xi2 = stage("xi2", solve_dirichlet, phi_q**cfg.beta2, cfg.q, mesh, opts)
    h1 = signed_source(phi_p, cfg.alpha1, mask)
    h2 = signed_source(phi_q, cfg.beta2, mask)
    z1 = stage("z1", solve_dirichlet, h1, cfg.p, mesh, opts)
    z2 = stage("z2", solve_dirichlet, h2, cfg.q, mesh, opts)

    residuals = {
        "w1": _res(w1, w1**cfg.alpha1, cfg.p, mesh),
        "w2": _res(w2, w2**cfg.beta2, cfg.q, mesh),
        "xi1": _res(xi1, phi_p**cfg.alpha1, cfg.p, mesh),
        "xi2": _res(xi2, phi_q**cfg.beta2, cfg.q, mesh),
        "z1": _res(z1, h1, cfg.p, mesh),
        "z2": _res(z2, h2, cfg.q, mesh),
    }
    for name, arr in (("w1", w1), ("w2", w2), ("xi1", xi1), ("xi2", xi2), ("z1", z1), ("z2", z2)):
        if np.any(arr <= 0):
            raise FitFailure(f"auxiliary {name} is not positive at every interior node")
    return BarrierSet(w1, w2, xi1, xi2, z1, z2, h1, h2, eig_p, eig_q, cfg, mesh, residuals)


def _res(u, f, p, mesh):
    return float(np.max(np.abs(apply_p_laplacian(u, p, mesh) - f)))


@dataclass(frozen=True)
class EnvelopeFit:
    c0: float
    c1: float
    c0p: float
    c1p: float
    c2: float
    c3: float
    c2p: float
    c3p: float
    l: float
    M: float
    mu: float

    def as_dict(self):
        return dict(self.__dict__)


def offstrip_floor(phi, mesh):
    """Minimum of the piecewise-linear interpolant of ``phi`` over ``{d >= delta}``.

    Includes the strip edge itself, so the value does not jump with the
    position of the first grid node past the edge.
    """
    off = ~strip_mask(mesh)
    vals = [float(phi[off].min())] if off.any() else []
    if mesh.kind == "interval":
        x = np.concatenate(([0.0], mesh.nodes, [mesh.L]))
        y = np.concatenate(([0.0], phi, [0.0]))
        edges = (mesh.delta, mesh.L - mesh.delta)
    else:
        x = np.concatenate((mesh.nodes, [mesh.L]))
        y = np.concatenate((phi, [0.0]))
        edges = (mesh.L - mesh.delta,)
    vals.extend(float(np.interp(e, x, y)) for e in edges)
    return min(vals)


def fit_envelope_constants(bar, mesh):
    """Tightest grid constants for the two-sided eigenfunction bounds.

    ``c2 phi_p <= w1 <= c3 phi_p``, ``c0 phi_p <= xi1 <= c1 phi_p`` and
    ``(c0/2) phi_p <= z1 <= c1 phi_p`` (primed analogues with ``phi_q``);
    ``l = min min(phi_p, phi_q)/d``, ``M = max(phi_p + phi_q)`` and ``mu`` the
    minimum of both eigenfunctions off the strip (see ``offstrip_floor``).
    """
    phi_p, phi_q = bar.eigen_p.phi, bar.eigen_q.phi
    d = distance_field(mesh)
    with np.errstate(divide="ignore", invalid="ignore"):
        r_w1, r_w2 = bar.w1 / phi_p, bar.w2 / phi_q
        r_xi1, r_xi2 = bar.xi1 / phi_p, bar.xi2 / phi_q
        r_z1, r_z2 = bar.z1 / phi_p, bar.z2 / phi_q
        vals = dict(
            c0=min(r_xi1.min(), 2.0 * r_z1.min()),
            c1=max(r_xi1.max(), r_z1.max()),
            c0p=min(r_xi2.min(), 2.0 * r_z2.min()),
            c1p=max(r_xi2.max(), r_z2.max()),
            c2=r_w1.min(),
            c3=r_w1.max(),
            c2p=r_w2.min(),
            c3p=r_w2.max(),
            l=float(np.min(np.minimum(phi_p, phi_q) / d)),
            M=float(np.max(np.abs(phi_p) + np.abs(phi_q))),
            mu=min(offstrip_floor(phi_p, mesh), offstrip_floor(phi_q, mesh)),
        )
    for k, v in vals.items():
        if not (np.isfinite(v) and v > 0):
            raise FitFailure(f"fitted constant {k} = {v} is not finite and positive")
    return EnvelopeFit(**{k: float(v) for k, v in vals.items()})


@dataclass
class Inequality:
    """One grid-checked inequality: ``slack > 0`` (or ``>= 0`` if not strict) means it holds."""

    name: str
    constant: str
    slack: float
    strict: bool = True
    worst_node: int = -1

    @property
    def holds(self):
        return self.slack > 0 if self.strict else self.slack >= 0


@dataclass
class ConstantLedger:
    C: float
    Lambda: float
    rho: float
    m: float
    eta: float
    R: float
    fit: EnvelopeFit
    eps_schedule: tuple
    C_u: float
    C_v: float
    Lambda_u: float
    Lambda_v: float
    rho_u: float
    rho_v: float
    R_margin: float
    inequalities: list = field(default_factory=list)

    @property
    def mu(self):
        return self.fit.mu

    @property
    def M(self):
        return self.fit.M

    @property
    def l(self):
        return self.fit.l

    def rows(self):
        """``(constant, value, slack)`` rows; slack is the worst slack among its inequalities."""
        worst = {}
        for ineq in self.inequalities:
            worst[ineq.constant] = min(worst.get(ineq.constant, inf), ineq.slack)
        out = []
        for name in ("C", "Lambda", "rho", "m", "eta", "R"):
            out.append((name, getattr(self, name), worst.get(name, float("nan"))))
        for name, value in self.fit.as_dict().items():
            out.append((name, value, float("nan")))
        return out


def _min_slack(diff, nodes=None):
    """Minimum of ``diff`` over ``nodes``; ``(inf, -1)`` for an empty set."""
    if nodes is not None:
        idx = np.flatnonzero(nodes)
        if idx.size == 0:
            return inf, -1
        k = int(np.argmin(diff[idx]))
        return float(diff[idx][k]), int(idx[k])
    k = int(np.argmin(diff))
    return float(diff[k]), k


def _c_family(C, cfg, bar, fit, eps_list, side):
    """Inequalities certifying the scale ``C`` for one equation."""
    mesh = bar.mesh
    strip = strip_mask(mesh)
    off = ~strip
    phi_p, phi_q = bar.eigen_p.phi, bar.eigen_q.phi
    ulo, vlo = bar.z1 / C, bar.z2 / C
    uhi, vhi = C * bar.xi1, C * bar.xi2
    out = []
    if side == "u":
        a, b, pm1, phi, own_lo, own_hi = cfg.alpha1, cfg.beta1, cfg.p - 1.0, phi_p, ulo, uhi
        lhs_sub = C ** (-pm1) * phi**a
        s, k = _min_slack(ulo**a * vlo**b + lhs_sub, strip)
        out.append(Inequality("strip subsolution u", "C", s, worst_node=k))
        lhs = C ** (a + b - pm1) * (fit.M * fit.c1) ** (-a)
        out.append(Inequality("scalar subsolution bound u", "C", (fit.c0p * fit.mu) ** b - lhs))
        for eps in (0.0,) + tuple(eps_list):
            s, k = _min_slack((ulo + eps) ** a * vlo**b - lhs_sub, off)
            out.append(Inequality(f"interior subsolution u eps={eps:g}", "C", s, worst_node=k))
        s, k = _min_slack(C**pm1 * phi**a - uhi**a * vhi**b)
        out.append(Inequality("supersolution u", "C", s, strict=False, worst_node=k))
    else:
        a, b, pm1, phi, own_lo, own_hi = cfg.beta2, cfg.alpha2, cfg.q - 1.0, phi_q, vlo, vhi
        lhs_sub = C ** (-pm1) * phi**a
        s, k = _min_slack(ulo**b * vlo**a + lhs_sub, strip)
        out.append(Inequality("strip subsolution v", "C", s, worst_node=k))
        lhs = C ** (a + b - pm1) * (fit.M * fit.c1p) ** (-a)
        out.append(Inequality("scalar subsolution bound v", "C", (fit.c0 * fit.mu) ** b - lhs))
        for eps in (0.0,) + tuple(eps_list):
            s, k = _min_slack(ulo**b * (vlo + eps) ** a - lhs_sub, off)
            out.append(Inequality(f"interior subsolution v eps={eps:g}", "C", s, worst_node=k))
        s, k = _min_slack(C**pm1 * phi**a - uhi**b * vhi**a)
        out.append(Inequality("supersolution v", "C", s, strict=False, worst_node=k))
    s, k = _min_slack(own_hi - own_lo)
    out.append(Inequality(f"ordering {side}_hi >= {side}_lo", "C", s, strict=False, worst_node=k))
    return out


def _lambda_family(Lam, C, cfg, bar, side):
    ulo, vlo = bar.z1 / C, bar.z2 / C
    uhi, vhi = C * bar.xi1, C * bar.xi2
    if side == "u":
        diff = Lam ** (cfg.p - 1.0) * bar.w1**cfg.alpha1 - ulo**cfg.alpha1 * vhi**cfg.beta1
        name = "hat domination u"
    else:
        diff = Lam ** (cfg.q - 1.0) * bar.w2**cfg.beta2 - uhi**cfg.alpha2 * vlo**cfg.beta2
        name = "hat domination v"
    s, k = _min_slack(diff)
    return [Inequality(name, "Lambda", s, worst_node=k)]


def _m_family(m, C, cfg, bar, eps_list):
    off = ~strip_mask(bar.mesh)
    ulo, vlo = bar.z1 / C, bar.z2 / C
    lam_max = max(bar.eigen_p.lam, bar.eigen_q.lam)
    out = [Inequality("m > max principal eigenvalue", "m", m - lam_max)]
    for eps in eps_list:
        fu = (ulo + eps) ** cfg.alpha1 * vlo**cfg.beta1
        fv = ulo**cfg.alpha2 * (vlo + eps) ** cfg.beta2
        for t in T_SAMPLES:
            su, ku = _min_slack(t * fu + (1 - t) * m * ulo ** (cfg.p - 1.0) - fu, off)
            sv, kv = _min_slack(t * fv + (1 - t) * m * vlo ** (cfg.q - 1.0) - fv, off)
            out.append(Inequality(f"homotopy weight u eps={eps:g} t={t:g}", "m", su, strict=False, worst_node=ku))
            out.append(Inequality(f"homotopy weight v eps={eps:g} t={t:g}", "m", sv, strict=False, worst_node=kv))
    return out


def _eta_family(eta, C, cfg, bar, eps_list):
    off = ~strip_mask(bar.mesh)
    ulo, vlo = bar.z1 / C, bar.z2 / C
    phi_p, phi_q = bar.eigen_p.phi, bar.eigen_q.phi
    out = []
    for eps in eps_list:
        fu = (ulo + eps) ** cfg.alpha1 * vlo**cfg.beta1
        fv = ulo**cfg.alpha2 * (vlo + eps) ** cfg.beta2
        gu = eta * (phi_p + eps) ** cfg.alpha1
        gv = eta * (phi_q + eps) ** cfg.beta2
        for t in T_SAMPLES:
            su, ku = _min_slack(t * fu + (1 - t) * gu - fu, off)
            sv, kv = _min_slack(t * fv + (1 - t) * gv - fv, off)
            out.append(Inequality(f"forcing weight u eps={eps:g} t={t:g}", "eta", su, strict=False, worst_node=ku))
            out.append(Inequality(f"forcing weight v eps={eps:g} t={t:g}", "eta", sv, strict=False, worst_node=kv))
    return out


def shift_slope_unit(s, a, p):
    """Derivative of ``max(a s, s^{p-1})`` in ``s > 0`` per unit ``rho`` (ties go to the power branch)."""
    power_active = s ** (p - 1.0) >= a * s
    return np.where(power_active, (p - 1.0) * s ** (p - 2.0), a)


def _box_samples(lo, hi, k=5):
    """``k`` evenly spaced samples per node between ``lo`` and ``hi`` (endpoints included)."""
    hi = np.broadcast_to(hi, lo.shape)
    frac = np.linspace(0.0, 1.0, k)
    return lo[None, :] + frac[:, None] * (hi - lo)[None, :]


def _rho_family(rho, C, Lam, R, cfg, bar, eps_list):
    ulo, vlo = bar.z1 / C, bar.z2 / C
    uhat, vhat = Lam * bar.w1, Lam * bar.w2
    out = []
    boxes = {"f": (R, R), "g": (uhat, vhat)}
    for fam, (uup, vup) in boxes.items():
        S1 = _box_samples(ulo, uup)
        S2 = _box_samples(vlo, vup)
        for eps in eps_list:
            au = (ulo + eps) ** (cfg.alpha1 - 1.0) * R**cfg.beta1
            av = R**cfg.alpha2 * (vlo + eps) ** (cfg.beta2 - 1.0)
            du = shift_slope_unit(S1, au[None, :], cfg.p)
            dv = shift_slope_unit(S2, av[None, :], cfg.q)
            for t in T_SAMPLES:
                # all (s1, s2) pairs: axis 0 -> s1 sample, axis 1 -> s2 sample
                gu = t * cfg.alpha1 * (S1[:, None, :] + eps) ** (cfg.alpha1 - 1.0) * S2[None, :, :] ** cfg.beta1
                gu = gu + rho * du[:, None, :]
                gv = t * cfg.beta2 * (S2[None, :, :] + eps) ** (cfg.beta2 - 1.0) * S1[:, None, :] ** cfg.alpha2
                gv = gv + rho * dv[None, :, :]
                su = float(gu.min())
                sv = float(gv.min())
                ku = int(np.unravel_index(np.argmin(gu), gu.shape)[2])
                kv = int(np.unravel_index(np.argmin(gv), gv.shape)[2])
                out.append(Inequality(f"rho monotone u [{fam}-box] eps={eps:g} t={t:g}", "rho", su, strict=False, worst_node=ku))
                out.append(Inequality(f"rho monotone v [{fam}-box] eps={eps:g} t={t:g}", "rho", sv, strict=False, worst_node=kv))
    return out


def _double_until(family, cap, what, start=1.0):
    value = start
    while value <= cap:
        ineqs = family(value)
        if all(i.holds for i in ineqs):
            return value, ineqs
        value *= 2.0
    failing = [i.name for i in family(value / 2.0) if not i.holds]
    raise SelectionDiverged(f"{what} exceeded cap {cap:g}; still failing: {', '.join(failing[:5])}")


def select_constants(cfg, bar, mesh, fit=None, eps_schedule=DEFAULT_EPS_SCHEDULE, cap=2.0**64, R_margin=0.1):
    """Certify every scalar constant by doubling from 1.

    Order of selection: ``C`` (sub/supersolution scale), ``m``, ``eta``,
    ``Lambda``, ``R`` (from the envelope sup-norms with a relative margin) and
    finally ``rho``. Each constant's ledger entries are re-evaluated at the
    final value of ``C``.
    """
    fit = fit or fit_envelope_constants(bar, mesh)
    eps_list = tuple(float(e) for e in eps_schedule)
    C_u, _ = _double_until(lambda c: _c_family(c, cfg, bar, fit, eps_list, "u"), cap, "C (u-side)")
    C_v, _ = _double_until(lambda c: _c_family(c, cfg, bar, fit, eps_list, "v"), cap, "C (v-side)")
    C = max(C_u, C_v)
    ineqs = _c_family(C, cfg, bar, fit, eps_list, "u") + _c_family(C, cfg, bar, fit, eps_list, "v")
    if not all(i.holds for i in ineqs):
        raise SelectionDiverged("C families are not jointly satisfied at the common scale")

    m, m_ineqs = _double_until(lambda v: _m_family(v, C, cfg, bar, eps_list), cap, "m")
    eta, eta_ineqs = _double_until(lambda v: _eta_family(v, C, cfg, bar, eps_list), cap, "eta")
    L_u, _ = _double_until(lambda v: _lambda_family(v, C, cfg, bar, "u"), cap, "Lambda (u-side)")
    L_v, _ = _double_until(lambda v: _lambda_family(v, C, cfg, bar, "v"), cap, "Lambda (v-side)")
    Lam = max(L_u, L_v)
    lam_ineqs = _lambda_family(Lam, C, cfg, bar, "u") + _lambda_family(Lam, C, cfg, bar, "v")

    sups = [np.max(bar.z1 / C), np.max(bar.z2 / C), np.max(C * bar.xi1), np.max(C * bar.xi2),
            np.max(Lam * bar.w1), np.max(Lam * bar.w2)]
    R = (1.0 + R_margin) * float(max(sups))
    r_ineq = Inequality("R > envelope sup-norms", "R", R - float(max(sups)))

    def rho_side(side):
        def fam(v):
            return [i for i in _rho_family(v, C, Lam, R, cfg, bar, eps_list) if f"monotone {side}" in i.name]
        return fam

    rho_u, _ = _double_until(rho_side("u"), cap, "rho (u-side)")
    rho_v, _ = _double_until(rho_side("v"), cap, "rho (v-side)")
    rho = max(rho_u, rho_v)
    rho_ineqs = _rho_family(rho, C, Lam, R, cfg, bar, eps_list)

    return ConstantLedger(
        C=C, Lambda=Lam, rho=rho, m=m, eta=eta, R=R, fit=fit, eps_schedule=eps_list,
        C_u=C_u, C_v=C_v, Lambda_u=L_u, Lambda_v=L_v, rho_u=rho_u, rho_v=rho_v, R_margin=R_margin,
        inequalities=ineqs + m_ineqs + eta_ineqs + lam_ineqs + [r_ineq] + rho_ineqs,
    )


@dataclass
class Envelope:
    u_lo: np.ndarray
    v_lo: np.ndarray
    u_hi: np.ndarray
    v_hi: np.ndarray
    u_hat: np.ndarray
    v_hat: np.ndarray
    cfg: ExponentConfig = None
    mesh: object = None
    phi_p: np.ndarray = None
    phi_q: np.ndarray = None
    sign_checks: dict = field(default_factory=dict)


def envelope_members(ledger, bar):
    C, Lam = ledger.C, ledger.Lambda
    return Envelope(bar.z1 / C, bar.z2 / C, C * bar.xi1, C * bar.xi2, Lam * bar.w1, Lam * bar.w2,
                    cfg=bar.cfg, mesh=bar.mesh, phi_p=bar.eigen_p.phi, phi_q=bar.eigen_q.phi)


def build_envelope(ledger, bar, sign_tol=1e-8, check_eps=True):
    """Assemble the envelope and verify the discrete sub/supersolution inequalities.

    The nodal residual of the discrete operator is compared against the
    source: the lower pair must satisfy ``-Delta_p u_lo <= f(u_lo, v_lo)`` and
    the upper pair ``-Delta_p u_hi >= f(u_hi, v_hi)`` at every interior node,
    up to ``sign_tol``. With ``check_eps`` the regularized sources of every
    schedule entry are checked as well.

    Raises
    ------
    EnvelopeViolation
        Lists the failing nodes per check.
    """
    cfg, mesh = bar.cfg, bar.mesh
    env = envelope_members(ledger, bar)
    Au_lo = apply_p_laplacian(env.u_lo, cfg.p, mesh)
    Av_lo = apply_p_laplacian(env.v_lo, cfg.q, mesh)
    Au_hi = apply_p_laplacian(env.u_hi, cfg.p, mesh)
    Av_hi = apply_p_laplacian(env.v_hi, cfg.q, mesh)
    eps_list = (0.0,) + (tuple(ledger.eps_schedule) if check_eps else ())
    bad = {}
    checks = {}
    for eps in eps_list:
        fu_lo = (env.u_lo + eps) ** cfg.alpha1 * env.v_lo**cfg.beta1
        fv_lo = env.u_lo**cfg.alpha2 * (env.v_lo + eps) ** cfg.beta2
        fu_hi = (env.u_hi + eps) ** cfg.alpha1 * env.v_hi**cfg.beta1
        fv_hi = env.u_hi**cfg.alpha2 * (env.v_hi + eps) ** cfg.beta2
        for name, excess in (
            (f"sub u eps={eps:g}", Au_lo - fu_lo),
            (f"sub v eps={eps:g}", Av_lo - fv_lo),
            (f"super u eps={eps:g}", fu_hi - Au_hi),
            (f"super v eps={eps:g}", fv_hi - Av_hi),
        ):
            viol = np.flatnonzero(excess > sign_tol)
            checks[name] = (float(np.mean(excess <= sign_tol)), float(np.max(excess)))
            if viol.size:
                bad[name] = viol.tolist()
    for name, lo, hi in (("order u", env.u_lo, env.u_hi), ("order v", env.v_lo, env.v_hi)):
        viol = np.flatnonzero(lo > hi)
        checks[name] = (float(np.mean(lo <= hi)), float(np.max(lo - hi)))
        if viol.size:
            bad[name] = viol.tolist()
    env.sign_checks = checks
    if bad:
        exc = EnvelopeViolation(f"envelope checks failed: {sorted(bad)}", bad)
        exc.envelope = env
        raise exc
    return env
