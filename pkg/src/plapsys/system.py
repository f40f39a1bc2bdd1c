"""Regularized system: monotone iteration, epsilon continuation, second-solution search.

The regularized system at level ``eps`` and homotopy parameter ``t`` reads

    T_p(u) = f1(u~, v~),    T_q(v) = f2(u~, v~)

with ``T_p(u) = -Delta_p u + rho max(a u, u^{p-1})`` and ``u~, v~`` the
truncations of ``u, v`` to a box. The f-family truncates to ``[u_lo, R]``, the
g-family to ``[u_lo, u_hat]``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from . import kernels as kern
from .errors import MonotonicityLoss, NonConvergence, PlapsysError, RectangleEscape
from .plaplace import Shift, SolverOptions, apply_p_laplacian, newton_solve, residual_floor, shift_weight

INSIDE = "inside_hat_rectangle"
OUTSIDE = "outside_hat_rectangle"
F_FAMILY = "f"
G_FAMILY = "g"


@dataclass
class SolutionPair:
    u: np.ndarray
    v: np.ndarray
    eps: float
    residual_u: float
    residual_v: float
    iterations: int
    classification: str
    tol: float = float("nan")
    t: float = 1.0
    history: list = field(default_factory=list)


@dataclass
class ContinuationTrace:
    """Per-eps entries ``(eps, pair, diff_to_previous)``; the first diff is ``nan``."""

    entries: list
    final_residual_u: float = float("nan")
    final_residual_v: float = float("nan")

    @property
    def diffs(self):
        return [d for _, _, d in self.entries]

    @property
    def final(self):
        return self.entries[-1][1]


@dataclass
class NotFound:
    """Outcome of an unsuccessful second-solution search."""

    attempts: list
    eps: float

    def summary(self):
        return f"no second solution at eps={self.eps:g} after {len(self.attempts)} attempts"


def truncate(w, lower, upper):
    """Clamp ``w`` nodewise to ``[lower, upper]``; ``upper`` may be a scalar."""
    return np.minimum(np.maximum(w, lower), upper)


def truncation_box(env, ledger, variant):
    if variant == F_FAMILY:
        return env.u_lo, env.v_lo, ledger.R, ledger.R
    if variant == G_FAMILY:
        return env.u_lo, env.v_lo, env.u_hat, env.v_hat
    raise ValueError(f"unknown variant {variant!r}")


def shift_weights(env, ledger, eps, lower=None, upper=None):
    """Nodal weights ``(a_u, a_v)`` of the shift terms.

    By default ``a_u = (u_lo + eps)^{alpha1-1} R^{beta1}``. Passing the pair
    ``lower`` (and ``upper``) evaluates the weight at those states instead,
    never exceeding the default.
    """
    cfg, R = env.cfg, ledger.R
    lu, lv = (env.u_lo, env.v_lo) if lower is None else (np.maximum(lower[0], env.u_lo), np.maximum(lower[1], env.v_lo))
    ru, rv = (R, R) if upper is None else (np.minimum(upper[0], R), np.minimum(upper[1], R))
    return shift_weight(lu, eps, rv, cfg, "u"), shift_weight(lv, eps, ru, cfg, "v")


def _shifts(env, ledger, eps, weights=None):
    cfg = env.cfg
    au, av = shift_weights(env, ledger, eps) if weights is None else weights
    return Shift(ledger.rho, au, cfg.p), Shift(ledger.rho, av, cfg.q)


def rhs_homotopy(u, v, t, eps, ledger, env, variant=F_FAMILY, weights=None):
    """Right-hand sides ``(f1, f2)`` (or ``(g1, g2)``) at ``(u, v)``, truncation included.

    ``weights`` overrides the nodal shift weights ``(a_u, a_v)``.
    """
    cfg = env.cfg
    lu, lv, hu, hv = truncation_box(env, ledger, variant)
    ut, vt = truncate(u, lu, hu), truncate(v, lv, hv)
    su, sv = _shifts(env, ledger, eps, weights)
    f1 = t * (ut + eps) ** cfg.alpha1 * vt**cfg.beta1 + su.value(ut)
    f2 = t * ut**cfg.alpha2 * (vt + eps) ** cfg.beta2 + sv.value(vt)
    if variant == F_FAMILY:
        f1 = f1 + (1.0 - t) * ledger.m * ut ** (cfg.p - 1.0)
        f2 = f2 + (1.0 - t) * ledger.m * vt ** (cfg.q - 1.0)
    else:
        f1 = f1 + (1.0 - t) * ledger.eta * (env.phi_p + eps) ** cfg.alpha1
        f2 = f2 + (1.0 - t) * ledger.eta * (env.phi_q + eps) ** cfg.beta2
    return f1, f2


def system_residual(u, v, eps, cfg, mesh):
    """Max-norm nodal residuals of the system with ``(u + eps)^alpha1``, ``(v + eps)^beta2``.

    ``eps = 0`` gives the singular system.
    """
    ru = apply_p_laplacian(u, cfg.p, mesh) - (u + eps) ** cfg.alpha1 * v**cfg.beta1
    rv = apply_p_laplacian(v, cfg.q, mesh) - u**cfg.alpha2 * (v + eps) ** cfg.beta2
    return float(np.max(np.abs(ru))), float(np.max(np.abs(rv)))


def residual_excess(u, v, eps, cfg, mesh, tol):
    """Largest ratio of nodal residual to ``max(tol, rounding floor)`` over both equations.

    Values ``<= 1`` mean every node meets the tolerance.
    """
    out = 0.0
    for w, p, f in ((u, cfg.p, (u + eps) ** cfg.alpha1 * v**cfg.beta1),
                    (v, cfg.q, u**cfg.alpha2 * (v + eps) ** cfg.beta2)):
        r = np.abs(apply_p_laplacian(w, p, mesh) - f)
        out = max(out, float(np.max(r / np.maximum(tol, residual_floor(w, f, p, mesh)))))
    return out


def classify(u, v, env):
    return INSIDE if np.all(u < env.u_hat) and np.all(v < env.v_hat) else OUTSIDE


def monotone_iterate(env, ledger, eps, t=1.0, variant=F_FAMILY, opts=None, start="lower",
                     init=None, tol=None, monitor=None, shift="adaptive"):
    """Fixed-point iteration ``(u, v) <- (T_p^{-1} f1, T_q^{-1} f2)``.

    Parameters
    ----------
    start : {"lower", "upper"}
        Which sequence is returned: the one from the subsolution pair
        (nondecreasing) or from the supersolution pair (nonincreasing).
    init : tuple of ndarray, optional
        Replaces the starting pair of the returned sequence; it must be a sub-
        (or super-) solution at this ``eps``.
    tol : float, optional
        Tolerance for both the successive max-norm difference and the nodal
        residual (at ``t = 1``; nodes limited by rounding use their floor
        instead). Defaults to ``opts.newton_tol``.
    shift : {"adaptive", "fixed"}
        ``"fixed"`` evaluates the shift weight at ``(u_lo, R)`` for every step
        and iterates only the requested sequence. ``"adaptive"`` runs the
        lower and upper sequences side by side and evaluates the weight at the
        current lower iterate and upper partner; every later iterate of both
        sequences stays between them, so the shifted sources remain
        nondecreasing where they are used while the shift shrinks. The
        upper start is a supersolution only at ``t = 1``; other ``t`` always
        use the fixed weight.

    Raises
    ------
    MonotonicityLoss
        An iterate moved against its expected direction by more than the
        solve tolerance.
    RectangleEscape
        The untruncated image left the sub/supersolution rectangle (``t = 1``)
        or the truncation box (``t < 1``).
    NonConvergence
        ``opts.max_iter`` iterations without settling.
    """
    opts = opts or SolverOptions()
    tol = opts.newton_tol if tol is None else tol
    if shift not in ("adaptive", "fixed"):
        raise ValueError(f"shift must be 'adaptive' or 'fixed', got {shift!r}")
    if start not in ("lower", "upper"):
        raise ValueError(f"start must be 'lower' or 'upper', got {start!r}")
    cfg, mesh = env.cfg, env.mesh
    if t != 1.0:
        shift = "fixed"
    if t == 1.0:
        bounds = (env.u_lo, env.u_hi, env.v_lo, env.v_hi)
    else:
        lu, lv, hu, hv = truncation_box(env, ledger, variant)
        bounds = (lu, hu, lv, hv)
    inner = SolverOptions(newton_tol=min(opts.newton_tol, 0.01 * tol), max_iter=opts.max_iter,
                          damping=opts.damping, regularization_floor=opts.regularization_floor)

    seqs = {}
    if start == "lower" or shift == "adaptive":
        seqs["lower"] = (env.u_lo.copy(), env.v_lo.copy())
    if start == "upper" or shift == "adaptive":
        hu_, hv_ = bounds[1], bounds[3]
        seqs["upper"] = (np.broadcast_to(hu_, env.u_lo.shape).copy(), np.broadcast_to(hv_, env.v_lo.shape).copy())
    if init is not None:
        seqs[start] = tuple(np.array(x, dtype=float) for x in init)

    def step(u, v, weights, name):
        su, sv = _shifts(env, ledger, eps, weights)
        f1, f2 = rhs_homotopy(u, v, t, eps, ledger, env, variant, weights=weights)
        un, _, _ = newton_solve(f1, cfg.p, mesh, inner, shift=su, u0=u, stage=f"{name} u-step eps={eps:g}")
        vn, _, _ = newton_solve(f2, cfg.q, mesh, inner, shift=sv, u0=v, stage=f"{name} v-step eps={eps:g}")
        return un, vn

    history = []
    diff = np.inf
    for k in range(1, opts.max_iter + 1):
        if shift == "adaptive":
            weights = shift_weights(env, ledger, eps, seqs["lower"], seqs["upper"])
        else:
            weights = shift_weights(env, ledger, eps)
        new = {name: step(u, v, weights, name) for name, (u, v) in seqs.items()}
        for name, (un, vn) in new.items():
            u, v = seqs[name]
            sign = 1.0 if name == "lower" else -1.0
            scale = max(1.0, float(np.max(np.abs(un))), float(np.max(np.abs(vn))))
            slack = max(tol, 1e-9 * scale)
            back = max(float(np.max(sign * (u - un))), float(np.max(sign * (v - vn))))
            if back > slack:
                raise MonotonicityLoss(f"eps={eps:g} t={t:g}: {name} iterate {k} moved back by {back:.3e}")
            lo_u, hi_u, lo_v, hi_v = bounds
            esc = max(float(np.max(lo_u - un)), float(np.max(un - hi_u)),
                      float(np.max(lo_v - vn)), float(np.max(vn - hi_v)))
            if esc > slack:
                raise RectangleEscape(f"eps={eps:g} t={t:g}: {name} iterate {k} left the box by {esc:.3e}")
        u, v = seqs[start]
        un, vn = new[start]
        diff = max(float(np.max(np.abs(un - u))), float(np.max(np.abs(vn - v))))
        seqs = new
        history.append(diff)
        if monitor is not None:
            monitor(k, un, vn, diff)
        if diff <= tol and (t != 1.0 or residual_excess(un, vn, eps, cfg, mesh, tol) <= 1.0):
            ru, rv = system_residual(un, vn, eps, cfg, mesh)
            return SolutionPair(un, vn, eps, ru, rv, k, classify(un, vn, env), tol, t, history)
    raise NonConvergence(f"monotone iteration eps={eps:g} t={t:g}: {opts.max_iter} iterations", diff)


def continue_epsilon(env, ledger, schedule, t=1.0, opts=None, tol=None, singular=True):
    """Warm-started monotone iteration along a strictly decreasing ``eps`` schedule.

    The solution at ``eps`` is a subsolution at every smaller ``eps`` (the
    source is decreasing in ``eps``), so each stage starts from the previous
    one and keeps the nondecreasing property. With ``singular`` a last stage
    at ``eps = 0`` follows; on the grid the singular sources are finite because
    every iterate stays above the positive subsolution. The final residuals are
    measured against the singular system.
    """
    schedule = [float(e) for e in schedule]
    if not schedule or any(e <= 0 for e in schedule):
        raise ValueError("eps schedule must be non-empty and positive")
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("eps schedule must be strictly decreasing")
    if singular:
        schedule.append(0.0)
    entries = []
    prev = None
    for eps in schedule:
        init = None if prev is None else (prev.u, prev.v)
        try:
            pair = monotone_iterate(env, ledger, eps, t, F_FAMILY, opts, "lower", init=init, tol=tol)
        except PlapsysError as exc:
            exc.args = (f"continuation failed at eps={eps:g}: {exc}",)
            raise
        d = float("nan") if prev is None else max(float(np.max(np.abs(pair.u - prev.u))),
                                                   float(np.max(np.abs(pair.v - prev.v))))
        entries.append((eps, pair, d))
        prev = pair
    ru, rv = system_residual(prev.u, prev.v, 0.0, env.cfg, env.mesh)
    return ContinuationTrace(entries, ru, rv)


class CoupledSystem:
    """The truncated system ``G(u, v) = (T_p u - f1, T_q v - f2)`` with its Jacobian."""

    def __init__(self, env, ledger, eps, t=1.0, variant=F_FAMILY, floor=1e-12):
        self.env, self.ledger, self.eps, self.t, self.variant = env, ledger, eps, t, variant
        self.cfg, self.mesh = env.cfg, env.mesh
        self.floor = floor
        self.su, self.sv = _shifts(env, ledger, eps)
        self.box = truncation_box(env, ledger, variant)
        self.n = self.mesh.n

    def residual(self, x):
        n, cfg, mesh = self.n, self.cfg, self.mesh
        u, v = x[:n], x[n:]
        f1, f2 = rhs_homotopy(u, v, self.t, self.eps, self.ledger, self.env, self.variant)
        gu = apply_p_laplacian(u, cfg.p, mesh, self.floor) + self.su.value(u) - f1
        gv = apply_p_laplacian(v, cfg.q, mesh, self.floor) + self.sv.value(v) - f2
        return np.concatenate((gu, gv))

    def _block(self, w, p, shift):
        mesh = self.mesh
        _, c = kern.operator_and_conductance(np.ascontiguousarray(w), float(p), self.floor, mesh.h, mesh.edge_weights)
        V = mesh.volumes
        diag = (c[:-1] + c[1:]) / V + shift.slope(w)
        lower = -c[1:-1] / V[1:]
        upper = -c[1:-1] / V[:-1]
        return sp.diags([lower, diag, upper], [-1, 0, 1], format="csr")

    def jacobian(self, x):
        n, cfg, t, eps, led = self.n, self.cfg, self.t, self.eps, self.ledger
        u, v = x[:n], x[n:]
        lu, lv, hu, hv = self.box
        ut, vt = truncate(u, lu, hu), truncate(v, lv, hv)
        iu = ((u > lu) & (u < hu)).astype(float)
        iv = ((v > lv) & (v < hv)).astype(float)
        a1, b1, a2, b2 = cfg.alpha1, cfg.beta1, cfg.alpha2, cfg.beta2
        with np.errstate(divide="ignore", invalid="ignore"):
            d11 = t * a1 * (ut + eps) ** (a1 - 1.0) * vt**b1 + self.su.slope(ut)
            d12 = t * b1 * (ut + eps) ** a1 * vt ** (b1 - 1.0)
            d21 = t * a2 * ut ** (a2 - 1.0) * (vt + eps) ** b2
            d22 = t * b2 * ut**a2 * (vt + eps) ** (b2 - 1.0) + self.sv.slope(vt)
            if self.variant == F_FAMILY:
                d11 = d11 + (1.0 - t) * led.m * (cfg.p - 1.0) * ut ** (cfg.p - 2.0)
                d22 = d22 + (1.0 - t) * led.m * (cfg.q - 1.0) * vt ** (cfg.q - 2.0)
        d11, d12, d21, d22 = (np.nan_to_num(d, posinf=0.0, neginf=0.0) for d in (d11, d12, d21, d22))
        Ju = self._block(u, cfg.p, self.su) - sp.diags(d11 * iu)
        Jv = self._block(v, cfg.q, self.sv) - sp.diags(d22 * iv)
        return sp.bmat([[Ju, sp.diags(-d12 * iv)], [sp.diags(-d21 * iu), Jv]], format="csc")


def _admissible(x, n, eps):
    return np.all(np.isfinite(x)) and np.all(x[:n] + eps > 0) and np.all(x[n:] > 0)


def newton_coupled(system, x0, tol=1e-8, max_iter=100, deflate=(), shift=1.0, damping=0.5):
    """Damped Newton on ``G`` with optional deflation.

    Deflation multiplies ``G`` by ``prod_k (1/|x - x_k|^2 + shift)``. With
    ``b = grad M / M`` the deflated step is ``d / (1 - b.d)`` where ``d`` is
    the undeflated Newton step. Convergence is judged on the undeflated
    residual.

    Returns
    -------
    dict
        ``converged``, ``x``, ``residual``, ``iterations``, ``reason``.
    """
    n = system.n
    x = np.array(x0, dtype=float)
    if not _admissible(x, n, system.eps):
        return dict(converged=False, x=x, residual=np.inf, iterations=0, reason="inadmissible start")

    def merit(y):
        g = system.residual(y)
        m = 1.0
        for z in deflate:
            m *= 1.0 / float(np.dot(y - z, y - z) / y.size) + shift
        return g, m

    g, m = merit(x)
    res = float(np.max(np.abs(g)))
    for it in range(max_iter):
        if not np.isfinite(res):
            return dict(converged=False, x=x, residual=res, iterations=it, reason="non-finite residual")
        if res <= tol:
            return dict(converged=True, x=x, residual=res, iterations=it, reason="converged")
        try:
            d = spsolve(system.jacobian(x), -g)
        except (RuntimeError, ValueError) as exc:
            return dict(converged=False, x=x, residual=res, iterations=it, reason=f"linear solve: {exc}")
        if not np.all(np.isfinite(d)):
            return dict(converged=False, x=x, residual=res, iterations=it, reason="singular Jacobian")
        if deflate:
            b = np.zeros_like(x)
            for z in deflate:
                r = x - z
                nr = float(np.dot(r, r) / x.size)
                b += (-2.0 * r / x.size / nr**2) / (1.0 / nr + shift)
            denom = 1.0 - float(np.dot(b, d))
            if abs(denom) < 1e-14:
                return dict(converged=False, x=x, residual=res, iterations=it, reason="deflation singular")
            d = d / denom
        step = 1.0
        cur = res * m
        for _ in range(40):
            trial = x + step * d
            if _admissible(trial, n, system.eps):
                gt, mt = merit(trial)
                rt = float(np.max(np.abs(gt)))
                if np.isfinite(rt) and rt * mt < (1.0 - 1e-4 * step) * cur:
                    break
            step *= damping
        else:
            return dict(converged=False, x=x, residual=res, iterations=it, reason="line search failed")
        x, g, m, res = trial, gt, mt, rt
    conv = res <= tol
    return dict(converged=conv, x=x, residual=res, iterations=max_iter,
                reason="converged" if conv else "iteration cap")


def _inside_OR(u, v, R):
    return bool(np.all(u > 0) and np.all(v > 0) and np.max(u) < R and np.max(v) < R)


def find_second_solution(env, ledger, first, eps=None, opts=None, betas=(1.5, 2.0, 4.0, 8.0),
                         tol=1e-8, max_iter=100, separation=0.1):
    """Search for a solution outside the hat rectangle at the same ``eps``.

    Strategy (a): Newton on the truncated system deflated at ``first``, from
    ``first`` itself pushed outward and from each scaled hat state. Strategy
    (b): plain Newton from each scaled hat state ``beta * (u_hat, v_hat)``.
    A candidate counts when its residual is below ``tol``, it lies outside the
    hat rectangle, inside the radius ``R`` and differs from ``first`` by more
    than ``separation`` relative to ``|u_1|_inf``.

    Returns
    -------
    SolutionPair or NotFound
    """
    eps = first.eps if eps is None else eps
    system = CoupledSystem(env, ledger, eps, 1.0, F_FAMILY)
    x1 = np.concatenate((first.u, first.v))
    n = system.n
    starts = [("deflated", "first*1.5", 1.5 * x1)]
    starts += [("deflated", f"hat*{b:g}", b * np.concatenate((env.u_hat, env.v_hat))) for b in betas]
    starts += [("plain", f"hat*{b:g}", b * np.concatenate((env.u_hat, env.v_hat))) for b in betas]
    attempts = []
    norm1 = max(float(np.max(np.abs(first.u))), float(np.max(np.abs(first.v))))
    for mode, label, x0 in starts:
        out = newton_coupled(system, x0, tol=tol, max_iter=max_iter, deflate=(x1,) if mode == "deflated" else ())
        u, v = out["x"][:n], out["x"][n:]
        sep = max(float(np.max(np.abs(u - first.u))), float(np.max(np.abs(v - first.v)))) / norm1
        cls = classify(u, v, env)
        rec = dict(mode=mode, start=label, converged=out["converged"], residual=out["residual"],
                   iterations=out["iterations"], reason=out["reason"], separation=sep,
                   classification=cls, inside_OR=_inside_OR(u, v, ledger.R))
        attempts.append(rec)
        if out["converged"] and cls == OUTSIDE and sep > separation and rec["inside_OR"]:
            ru, rv = system_residual(u, v, eps, env.cfg, env.mesh)
            return SolutionPair(u, v, eps, ru, rv, out["iterations"], cls, tol, 1.0, attempts)
    return NotFound(attempts, eps)


@dataclass
class NonexistenceReport:
    eps: float
    monotone_outcome: str
    attempts: list
    control_found: bool
    control_residual: float

    @property
    def converged_inside(self):
        return sum(1 for a in self.attempts if a["converged"] and a["inside_OR"])

    @property
    def passed(self):
        return self.converged_inside == 0 and self.control_found


def verify_no_solution_t0(env, ledger, eps, opts=None, seed=0, starts=10, tol=1e-8, max_iter=100):
    """Negative test at ``t = 0``: no solution of the truncated f-family inside ``O_R``.

    Runs the monotone iteration from the subsolution pair, then Newton from
    ``starts`` seeded random states in ``O_R``; the same sweep at ``t = 1``
    is the control and must find the known solution.
    """
    opts = opts or SolverOptions()
    try:
        pair = monotone_iterate(env, ledger, eps, 0.0, F_FAMILY, opts, "lower")
        mono = "converged inside O_R" if _inside_OR(pair.u, pair.v, ledger.R) else "converged outside O_R"
    except RectangleEscape as exc:
        mono = f"escaped: {exc}"
    except (NonConvergence, MonotonicityLoss) as exc:
        mono = f"diverged: {exc}"
    rng = np.random.default_rng(seed)
    lo = np.concatenate((env.u_lo, env.v_lo))
    x0s = [lo + rng.uniform(0.0, 1.0, lo.size) * (ledger.R - lo) for _ in range(starts)]
    n = env.mesh.n
    attempts = []
    for k, x0 in enumerate(x0s):
        out = newton_coupled(CoupledSystem(env, ledger, eps, 0.0, F_FAMILY), x0, tol=tol, max_iter=max_iter)
        attempts.append(dict(start=k, converged=out["converged"], residual=out["residual"],
                             reason=out["reason"], inside_OR=_inside_OR(out["x"][:n], out["x"][n:], ledger.R)))
    control = CoupledSystem(env, ledger, eps, 1.0, F_FAMILY)
    found, best = False, np.inf
    for x0 in x0s:
        out = newton_coupled(control, x0, tol=tol, max_iter=max_iter)
        best = min(best, out["residual"])
        if out["converged"] and _inside_OR(out["x"][:n], out["x"][n:], ledger.R):
            found = True
            break
    return NonexistenceReport(eps, mono, attempts, found, best)
