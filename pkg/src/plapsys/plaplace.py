"""Discrete p-Laplacian, Dirichlet solves, principal eigenpairs and shifted solves.

All nodal fields are plain ``numpy`` arrays of length ``mesh.n``; the zero
Dirichlet trace is implicit.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import LinAlgError

from . import kernels as kern
from .errors import DegenerateJacobian, NonConvergence, SignViolation


@dataclass(frozen=True)
class SolverOptions:
    """Knobs shared by every nonlinear solve.

    Attributes
    ----------
    newton_tol : float
        Max-norm tolerance on nodal residuals (and on successive differences
        for fixed-point loops).
    max_iter : int
        Iteration cap for Newton and for outer fixed-point loops.
    damping : float
        Backtracking factor of the energy line search, in (0, 1).
    regularization_floor : float
        Smoothing of ``|Du|^{p-2}`` near ``Du = 0``.
    """

    newton_tol: float = 1e-10
    max_iter: int = 500
    damping: float = 0.5
    regularization_floor: float = 1e-12

    def __post_init__(self):
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if not 0 < self.damping < 1:
            raise ValueError("damping must lie in (0, 1)")
        if self.regularization_floor < 0:
            raise ValueError("regularization_floor must be >= 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class EigenPair:
    lam: float
    phi: np.ndarray
    iterations: int = 0
    residual: float = float("nan")


def _check_p(p):
    if not p > 1:
        raise ValueError(f"exponent p must exceed 1, got {p}")


def apply_p_laplacian(u, p, mesh, floor=0.0):
    """Nodal values of the discrete ``-Delta_p u`` in flux-difference form."""
    _check_p(p)
    u = np.ascontiguousarray(u, dtype=float)
    return kern.weighted_operator(u, float(p), float(floor), mesh.h, mesh.edge_weights) / mesh.volumes


def p_energy(u, p, mesh, floor=0.0):
    """Discrete ``int |grad u|^p dx / p`` (sphere factor included for the ball)."""
    u = np.ascontiguousarray(u, dtype=float)
    e = kern.gradient_energy(u, float(p), float(floor), mesh.h, mesh.edge_weights)
    return e * mesh.quad_weights[0] / mesh.volumes[0]


def dirichlet_energy(u, f, p, mesh, floor=0.0):
    """``int |grad u|^p / p - int f u``, the functional minimized by ``solve_dirichlet``."""
    return p_energy(u, p, mesh, floor) - mesh.integrate(f * u)


class Shift:
    """Monotone nodal term ``rho * max(a*u, |u|^{p-2} u)``.

    ``a`` is a positive nodal weight. Where the two branches tie, the power
    branch is taken.
    """

    def __init__(self, rho, a, p):
        self.rho = float(rho)
        self.a = np.asarray(a, dtype=float)
        self.p = float(p)

    def _power(self, u):
        return np.abs(u) ** (self.p - 1.0) * np.sign(u)

    def value(self, u):
        return self.rho * np.maximum(self.a * u, self._power(u))

    def slope(self, u):
        lin = self.a * u
        pw = self._power(u)
        with np.errstate(divide="ignore", invalid="ignore"):
            dpow = (self.p - 1.0) * np.abs(u) ** (self.p - 2.0) if self.p != 2.0 else np.ones_like(u)
        dpow = np.where(np.isfinite(dpow), dpow, 0.0)
        return self.rho * np.where(pw >= lin, dpow, self.a)

    def primitive(self, u):
        """Nodal antiderivative from 0, used by the line-search energy."""
        x = np.abs(u)
        a, p = self.a, self.p
        lin = 0.5 * a * x * x
        pw = x**p / p
        if p == 2.0:
            big = np.maximum(a, 1.0) * 0.5 * x * x
            small = np.minimum(a, 1.0) * 0.5 * x * x
        else:
            t = a ** (1.0 / (p - 2.0))
            lin_t = 0.5 * a * t * t
            pw_t = t**p / p
            before = x <= t
            # below t the linear branch dominates when p > 2, the power branch when p < 2
            hi_first = lin if p > 2.0 else pw
            lo_first = pw if p > 2.0 else lin
            hi_t = lin_t if p > 2.0 else pw_t
            lo_t = pw_t if p > 2.0 else lin_t
            big = np.where(before, hi_first, hi_t + (pw - pw_t if p > 2.0 else lin - lin_t))
            small = np.where(before, lo_first, lo_t + (lin - lin_t if p > 2.0 else pw - pw_t))
        return self.rho * np.where(u >= 0, big, small)


class SingularSource:
    """Nodal term ``-u^alpha`` (``alpha < 0``) moved to the operator side.

    ``-Delta_p u - u^alpha`` is monotone for ``alpha < 0``; the energy is
    ``+inf`` off the positive cone so the line search keeps iterates positive.
    """

    def __init__(self, alpha):
        self.alpha = float(alpha)

    def value(self, u):
        return -(u**self.alpha)

    def slope(self, u):
        return -self.alpha * u ** (self.alpha - 1.0)

    def primitive(self, u):
        if np.any(u <= 0):
            return np.full_like(u, np.inf)
        return -(u ** (1.0 + self.alpha)) / (1.0 + self.alpha)


def _initial_guess(f, p, mesh, floor):
    """Solve the linear (p = 2) problem, then rescale along the ray to minimize the p-energy."""
    h, w, V = mesh.h, mesh.edge_weights, mesh.volumes
    c = w / h
    u2 = kern.solve_tridiag(c[:-1] + c[1:], -c[1:-1].copy(), V * f)
    if p == 2.0:
        return u2
    F = float(np.dot(V * f, u2))
    Kp = p * kern.gradient_energy(u2, float(p), float(floor), h, w)
    if F > 0 and Kp > 0:
        return u2 * (F / Kp) ** (1.0 / (p - 1.0))
    return u2


def _rounding_floor(u, f, diag, V):
    """Residual level below which rounding in the flux differences dominates."""
    eps = np.finfo(float).eps
    return 16.0 * eps * (diag / V * float(np.max(np.abs(u))) + np.abs(f))


def residual_floor(u, f, p, mesh, floor=0.0):
    """Rounding floor of the nodal residual of ``-Delta_p u = f`` at state ``u``."""
    u = np.ascontiguousarray(u, dtype=float)
    _, c = kern.operator_and_conductance(u, float(p), float(floor), mesh.h, mesh.edge_weights)
    return _rounding_floor(u, np.asarray(f, dtype=float), c[:-1] + c[1:], mesh.volumes)


def newton_solve(f, p, mesh, opts, shift=None, u0=None, stage="dirichlet", monitor=None):
    """Damped Newton for ``-Delta_p u + shift(u) = f``.

    The discrete problem is the Euler-Lagrange equation of a strictly convex
    energy, so each step is accepted only if it passes an Armijo test on that
    energy. ``monitor(u, energy)`` is called on every accepted iterate.

    For ``p < 2`` the flux has an infinite slope at ``Du = 0`` and Newton
    crawls near flat spots. Cold starts (and warm starts that fail) are
    therefore first run with a coarse regularization that is then tightened
    in three steps.

    Returns
    -------
    u : ndarray
    iterations : int
    residual : float
        Final nodal residual max-norm.
    """
    _check_p(p)
    p = float(p)
    floor = float(opts.regularization_floor)
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError(f"{stage}: right-hand side has non-finite entries")
    cold = u0 is None
    if cold:
        u0 = _initial_guess(f, p, mesh, floor)
    scale = float(np.max(np.abs(np.diff(u0)))) / mesh.h if u0.size > 1 else 0.0
    ladder = [c * scale for c in (1e-3, 1e-6, 1e-9) if c * scale > floor]
    if p >= 2.0 or not ladder:
        return _newton(f, p, mesh, opts, shift, u0, stage, monitor)
    if not cold:
        try:
            return _newton(f, p, mesh, opts, shift, u0, stage, monitor)
        except NonConvergence:
            pass
    for coarse in ladder:
        loose = replace(opts, regularization_floor=coarse)
        u0, _, _ = _newton(f, p, mesh, loose, shift, u0, stage, None)
    return _newton(f, p, mesh, opts, shift, u0, stage, monitor)


def _newton(f, p, mesh, opts, shift, u0, stage, monitor):
    floor = float(opts.regularization_floor)
    h, w, V = mesh.h, mesh.edge_weights, mesh.volumes
    u = np.array(u0, dtype=float)

    def energy(x):
        e = kern.gradient_energy(x, p, floor, h, w) - float(np.dot(V * f, x))
        if shift is not None:
            e += float(np.dot(V, shift.primitive(x)))
        return e

    def gradient(x):
        K, c = kern.operator_and_conductance(x, p, floor, h, w)
        g = K - V * f
        diag = c[:-1] + c[1:]
        if shift is not None:
            g += V * shift.value(x)
            diag = diag + V * shift.slope(x)
        return g, diag, c

    E = energy(u)
    if monitor is not None:
        monitor(u, E)
    res = np.inf
    for it in range(opts.max_iter + 1):
        g, diag, c = gradient(u)
        r = np.abs(g / V)
        res = float(np.max(r))
        if not np.isfinite(res):
            raise NonConvergence(f"{stage}: residual became non-finite", res)
        if np.all(r <= np.maximum(opts.newton_tol, _rounding_floor(u, f, diag, V))):
            return u, it, res
        if it == opts.max_iter:
            break
        try:
            d = kern.solve_tridiag(np.ascontiguousarray(diag), -c[1:-1].copy(), -g)
        except LinAlgError as exc:
            if floor == 0.0:
                raise DegenerateJacobian(f"{stage}: singular Newton matrix at iteration {it}") from exc
            raise NonConvergence(f"{stage}: Newton matrix lost definiteness", res) from exc
        slope = float(np.dot(g, d))
        t = 1.0
        accepted = False
        for _ in range(60):
            trial = u + t * d
            Et = energy(trial)
            if Et <= E + 1e-4 * t * slope:
                accepted = True
                break
            # energy differences drown in rounding near the minimizer; fall back to the residual
            if abs(Et - E) <= 1e-12 * (abs(E) + 1e-300) + 1e-300:
                gt, _, _ = gradient(trial)
                if np.max(np.abs(gt / V)) < res:
                    accepted = True
                    break
            t *= opts.damping
        if not accepted:
            raise NonConvergence(f"{stage}: line search stalled", res)
        if p < 2.0:
            # the full step overshoots by about 1/(p-1); keep shrinking while the energy drops
            while t > 1e-3:
                t *= opts.damping
                shorter = u + t * d
                Es = energy(shorter)
                if not Es < Et:
                    break
                trial, Et = shorter, Es
        u, E = trial, min(Et, E)
        if monitor is not None:
            monitor(u, Et)
    raise NonConvergence(f"{stage}: {opts.max_iter} Newton iterations exceeded", res)


def solve_dirichlet(f, p, mesh, opts=None, u0=None):
    """Solve ``-Delta_p u = f`` with zero Dirichlet data; returns ``u``."""
    opts = opts or SolverOptions()
    u, _, _ = newton_solve(f, p, mesh, opts, u0=u0, stage=f"dirichlet(p={p})")
    return u


def _lp_norm(u, p, mesh):
    return mesh.integrate(np.abs(u) ** p) ** (1.0 / p)


def rayleigh_quotient(u, p, mesh, floor=0.0):
    return p * p_energy(u, p, mesh, floor) / mesh.integrate(np.abs(u) ** p)


def eigen_residual(phi, lam, p, mesh, floor=0.0):
    return float(np.max(np.abs(apply_p_laplacian(phi, p, mesh, floor) - lam * np.abs(phi) ** (p - 1.0))))


def principal_eigenpair(p, mesh, opts=None):
    """First Dirichlet eigenpair of ``-Delta_p`` by inverse power iteration.

    Each step solves ``-Delta_p u = lam_k phi_k^{p-1}``, renormalizes in
    ``L^p`` and updates ``lam`` by the Rayleigh quotient.

    Returns
    -------
    EigenPair
        ``phi > 0`` with ``int phi^p = 1``.
    """
    _check_p(p)
    opts = opts or SolverOptions()
    floor = opts.regularization_floor
    x = mesh.nodes
    if mesh.kind == "interval":
        phi = np.sin(np.pi * x / mesh.L)
    else:
        phi = np.cos(0.5 * np.pi * x / mesh.L)
    phi = phi / _lp_norm(phi, p, mesh)
    lam = rayleigh_quotient(phi, p, mesh, floor)
    res = np.inf
    for k in range(1, opts.max_iter + 1):
        u, _, _ = newton_solve(lam * phi ** (p - 1.0), p, mesh, opts, u0=phi, stage=f"eigen(p={p})")
        if np.any(u <= 0):
            raise SignViolation(f"eigen(p={p}): iterate {k} lost positivity")
        phi = u / _lp_norm(u, p, mesh)
        lam_new = rayleigh_quotient(phi, p, mesh, floor)
        r = np.abs(apply_p_laplacian(phi, p, mesh, floor) - lam_new * phi ** (p - 1.0))
        res = float(np.max(r))
        target = np.maximum(opts.newton_tol * max(1.0, lam_new), residual_floor(phi, lam_new * phi ** (p - 1.0), p, mesh, floor))
        converged = abs(lam_new - lam) <= opts.newton_tol * max(1.0, lam_new) and np.all(r <= target)
        lam = lam_new
        if converged:
            return EigenPair(lam, phi, k, res)
    raise NonConvergence(f"eigen(p={p}): inverse iteration did not settle", res)


def shift_weight(lower, eps, R, exponents, component="u"):
    """Nodal weight ``a`` of the shift term for the u- or v-equation.

    u-equation: ``(lower + eps)^{alpha1 - 1} R^{beta1}``;
    v-equation: ``R^{alpha2} (lower + eps)^{beta2 - 1}``.
    """
    lower = np.asarray(lower, dtype=float)
    if component == "u":
        return (lower + eps) ** (exponents.alpha1 - 1.0) * R**exponents.beta1
    return R**exponents.alpha2 * (lower + eps) ** (exponents.beta2 - 1.0)


def apply_shifted(u, p, rho, eps, u_lower, R, exponents, mesh, component="u", floor=0.0):
    """Forward map ``T(u) = -Delta_p u + rho max(a u, |u|^{p-2} u)``."""
    shift = Shift(rho, shift_weight(u_lower, eps, R, exponents, component), p)
    return apply_p_laplacian(u, p, mesh, floor) + shift.value(np.asarray(u, dtype=float))


def solve_shifted(rhs, p, rho, eps, u_lower, R, exponents, mesh, opts=None, component="u", u0=None):
    """Invert ``T(u) = rhs``; the unique solution by strict monotonicity of ``T``."""
    opts = opts or SolverOptions()
    if rho < 0:
        raise ValueError("rho must be non-negative")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if np.any(np.asarray(u_lower) <= 0):
        raise ValueError("u_lower must be positive at interior nodes")
    shift = None
    if rho > 0:
        shift = Shift(rho, shift_weight(u_lower, eps, R, exponents, component), p)
    u, _, _ = newton_solve(rhs, p, mesh, opts, shift=shift, u0=u0, stage=f"shifted-{component}(p={p})")
    return u
