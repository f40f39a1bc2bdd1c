import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from plapsys import kernels as kern
from plapsys.barriers import ExponentConfig
from plapsys.errors import NonConvergence
from plapsys.mesh import build_mesh
from plapsys.plaplace import (
    Shift,
    SingularSource,
    SolverOptions,
    apply_p_laplacian,
    apply_shifted,
    dirichlet_energy,
    newton_solve,
    principal_eigenpair,
    solve_dirichlet,
    solve_shifted,
)

# Frozen output of the shooting oracle below (DOP853, rtol 1e-12).
LAMBDA_P3_SHOOTING = 28.28876197600541


def shooting_eigenvalue(p):
    """First Dirichlet eigenvalue of -(|u'|^{p-2}u')' on (0, 1) by shooting.

    With lambda = 1 and u(0) = 0, |u'(0)|^{p-2}u'(0) = 1, the first zero of
    the flux marks the symmetric maximum at x*. Scaling gives lambda = (2 x*)^p.
    """

    def rhs(_, y):
        u, psi = y
        return [np.sign(psi) * abs(psi) ** (1.0 / (p - 1.0)), -max(u, 0.0) ** (p - 1.0)]

    top = lambda _, y: y[1]
    top.terminal = True
    top.direction = -1
    sol = solve_ivp(rhs, (0.0, 50.0), [0.0, 1.0], method="DOP853", events=top, rtol=1e-12, atol=1e-14)
    return (2.0 * sol.t_events[0][0]) ** p


def closed_form_eigenvalue(p):
    return (p - 1.0) * (2.0 * np.pi / p / np.sin(np.pi / p)) ** p


def test_shooting_oracle_is_frozen():
    lam = shooting_eigenvalue(3.0)
    assert lam == pytest.approx(LAMBDA_P3_SHOOTING, rel=1e-10)
    assert lam == pytest.approx(closed_form_eigenvalue(3.0), rel=1e-10)


def test_eigen_linear_interval():
    pair = principal_eigenpair(2.0, build_mesh("interval", 1024, 1.0))
    assert abs(pair.lam - np.pi**2) / np.pi**2 < 1e-5
    assert np.all(pair.phi > 0)


def test_eigen_p3_interval():
    pair = principal_eigenpair(3.0, build_mesh("interval", 1024, 1.0))
    assert abs(pair.lam - LAMBDA_P3_SHOOTING) / LAMBDA_P3_SHOOTING < 1e-4


@pytest.mark.parametrize("p", [1.5, 2.5])
def test_eigen_other_p(p):
    pair = principal_eigenpair(p, build_mesh("interval", 1024, 1.0))
    lam = closed_form_eigenvalue(p)
    assert abs(pair.lam - lam) / lam < 1e-3


def test_eigen_ball_linear():
    mesh = build_mesh("radial", 1024, 1.0, N=3)
    pair = principal_eigenpair(2.0, mesh)
    assert pair.lam == pytest.approx(np.pi**2, rel=1e-4)
    assert mesh.integrate(pair.phi**2) == pytest.approx(1.0, rel=1e-12)
    # normalized sin(pi r)/r has phi(0) = sqrt(pi / 2)
    assert pair.phi[0] == pytest.approx(np.sqrt(np.pi / 2), rel=1e-3)


def test_eigen_scales_with_length():
    a = principal_eigenpair(3.0, build_mesh("interval", 256, 1.0)).lam
    b = principal_eigenpair(3.0, build_mesh("interval", 256, 2.0)).lam
    assert b == pytest.approx(a / 2**3, rel=1e-8)


def _errors(p, exact, source, ns):
    out = []
    for n in ns:
        mesh = build_mesh("interval", n, 1.0)
        x = mesh.nodes
        u = solve_dirichlet(source(x), p, mesh)
        out.append(np.max(np.abs(u - exact(x))))
    return np.array(out)


def test_quadratic_is_reproduced_exactly():
    err = _errors(2.0, lambda x: x * (1 - x), lambda x: np.full_like(x, 2.0), [64, 128, 256])
    assert np.all(err < 1e-12)


def test_manufactured_sine_second_order():
    err = _errors(2.0, lambda x: np.sin(np.pi * x), lambda x: np.pi**2 * np.sin(np.pi * x), [64, 128, 256])
    orders = np.log2(err[:-1] / err[1:])
    assert np.all(orders > 1.9)


def test_manufactured_p3_sympy():
    x = sp.symbols("x", real=True)
    u = sp.sin(sp.pi * x)
    du = sp.diff(u, x)
    f = sp.simplify(-sp.diff(sp.Abs(du) * du, x))
    source = sp.lambdify(x, f, "numpy")
    exact = sp.lambdify(x, u, "numpy")
    err = _errors(3.0, exact, lambda t: np.asarray(source(t), dtype=float) + 0 * t, [64, 128, 256])
    orders = np.log2(err[:-1] / err[1:])
    assert err[-1] < 1e-3
    assert np.all(orders > 1.5)


def test_singular_source_analytic():
    # -u'' = x^{-1/2} has u = 4/3 (x - x^{3/2})
    exact = lambda x: 4.0 / 3.0 * (x - x**1.5)
    err = _errors(2.0, exact, lambda x: x**-0.5, [128, 256, 512, 1024])
    assert np.all(np.diff(err) < 0)
    assert err[-1] < 1e-3


@settings(max_examples=25, deadline=None)
@given(c=st.floats(0.2, 5.0), p=st.sampled_from([1.5, 2.0, 3.0]))
def test_homogeneity(c, p):
    mesh = build_mesh("interval", 64, 1.0)
    f = 1.0 + np.sin(3 * mesh.nodes)
    u = solve_dirichlet(f, p, mesh)
    uc = solve_dirichlet(c ** (p - 1.0) * f, p, mesh)
    np.testing.assert_allclose(uc, c * u, rtol=1e-7, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), p=st.sampled_from([1.5, 2.0, 3.0]), kind=st.sampled_from(["interval", "radial"]))
def test_comparison_principle(seed, p, kind):
    mesh = build_mesh(kind, 64, 1.0, N=3 if kind == "radial" else None)
    rng = np.random.default_rng(seed)
    f = rng.normal(size=mesh.n)
    g = f + rng.uniform(0, 2, size=mesh.n)
    assert np.all(solve_dirichlet(f, p, mesh) <= solve_dirichlet(g, p, mesh) + 1e-10)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_energy_decreases_along_newton(p):
    mesh = build_mesh("interval", 128, 1.0)
    energies = []
    # a start far from the solution so that several steps are taken
    u0 = 5.0 * np.sin(np.pi * mesh.nodes)
    opts = SolverOptions(regularization_floor=1e-4 if p < 2 else 1e-12)
    newton_solve(np.ones(mesh.n), p, mesh, opts, u0=u0, monitor=lambda u, e: energies.append(e))
    assert len(energies) > 1
    assert np.all(np.diff(energies) <= 1e-12 * np.abs(energies[:-1]))


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
@pytest.mark.parametrize("kind", ["interval", "radial"])
def test_conductance_is_jacobian(p, kind):
    mesh = build_mesh(kind, 20, 1.0, N=3 if kind == "radial" else None)
    rng = np.random.default_rng(3)
    u = rng.normal(size=mesh.n)
    floor = 1e-3
    K, c = kern.operator_and_conductance(u, p, floor, mesh.h, mesh.edge_weights)
    J = np.diag(c[:-1] + c[1:]) - np.diag(c[1:-1], 1) - np.diag(c[1:-1], -1)
    step = 1e-6
    for j in range(mesh.n):
        e = np.zeros(mesh.n)
        e[j] = step
        col = (kern.weighted_operator(u + e, p, floor, mesh.h, mesh.edge_weights)
               - kern.weighted_operator(u - e, p, floor, mesh.h, mesh.edge_weights)) / (2 * step)
        np.testing.assert_allclose(col, J[:, j], rtol=1e-4, atol=1e-6 * np.max(np.abs(J)))


def test_operator_is_flux_difference():
    mesh = build_mesh("interval", 4, 1.0)
    u = np.array([1.0, 2.0, 0.5, -1.0])
    D = np.diff(np.concatenate([[0.0], u, [0.0]])) / mesh.h
    expected = -(D[1:] - D[:-1]) / mesh.h
    np.testing.assert_allclose(apply_p_laplacian(u, 2.0, mesh), expected)


@settings(max_examples=60, deadline=None)
@given(
    u=st.floats(-4, 4).filter(lambda s: abs(s) > 1e-3),
    a=st.floats(0.1, 10.0),
    p=st.sampled_from([1.5, 2.0, 2.5, 3.0]),
)
def test_shift_primitive_derivative(u, a, p):
    sh = Shift(1.7, np.array([a]), p)
    k = 1e-6
    fd = (sh.primitive(np.array([u + k])) - sh.primitive(np.array([u - k])))[0] / (2 * k)
    assert fd == pytest.approx(sh.value(np.array([u]))[0], rel=1e-4, abs=1e-6)
    lo, hi = sh.value(np.array([u - 1e-3])), sh.value(np.array([u + 1e-3]))
    assert hi[0] >= lo[0]
    assert sh.slope(np.array([u]))[0] >= 0


def test_shift_ties_take_power_branch():
    sh = Shift(1.0, np.array([1.0]), 3.0)
    # a*u == u^2 at u = 1; the power slope is 2, the linear one 1
    assert sh.slope(np.array([1.0]))[0] == pytest.approx(2.0)


def test_singular_source_primitive():
    s = SingularSource(-0.5)
    assert np.all(np.isinf(s.primitive(np.array([1.0, -0.1]))))
    u = np.array([0.3])
    fd = (s.primitive(u + 1e-7) - s.primitive(u - 1e-7)) / 2e-7
    assert fd[0] == pytest.approx(s.value(u)[0], rel=1e-6)


def test_shifted_solve_round_trip():
    mesh = build_mesh("interval", 128, 1.0)
    expo = ExponentConfig(3.0, 3.0, 1, -0.5, 0.5, 0.5, -0.5)
    lower = 0.05 * np.sin(np.pi * mesh.nodes)
    rhs = 2.0 + np.cos(mesh.nodes)
    u = solve_shifted(rhs, 3.0, 2.0, 0.1, lower, 4.0, expo, mesh, SolverOptions(newton_tol=1e-11))
    back = apply_shifted(u, 3.0, 2.0, 0.1, lower, 4.0, expo, mesh, floor=1e-12)
    np.testing.assert_allclose(back, rhs, atol=1e-8)


def test_shifted_solve_validates():
    mesh = build_mesh("interval", 16, 1.0)
    expo = ExponentConfig(2.0, 2.0, 1, -0.5, 0.5, 0.5, -0.5)
    lower = np.ones(mesh.n)
    with pytest.raises(ValueError):
        solve_shifted(np.ones(mesh.n), 2.0, -1.0, 0.1, lower, 1.0, expo, mesh)
    with pytest.raises(ValueError):
        solve_shifted(np.ones(mesh.n), 2.0, 1.0, 1.5, lower, 1.0, expo, mesh)
    with pytest.raises(ValueError):
        solve_shifted(np.ones(mesh.n), 2.0, 1.0, 0.1, -lower, 1.0, expo, mesh)


def test_dirichlet_solution_minimizes_energy():
    mesh = build_mesh("interval", 64, 1.0)
    f = np.ones(mesh.n)
    u = solve_dirichlet(f, 3.0, mesh)
    rng = np.random.default_rng(0)
    e0 = dirichlet_energy(u, f, 3.0, mesh)
    for _ in range(5):
        assert dirichlet_energy(u + 1e-2 * rng.normal(size=mesh.n), f, 3.0, mesh) > e0


def test_bad_inputs():
    mesh = build_mesh("interval", 16, 1.0)
    with pytest.raises(ValueError):
        apply_p_laplacian(np.ones(16), 1.0, mesh)
    with pytest.raises(ValueError):
        solve_dirichlet(np.full(16, np.nan), 2.0, mesh)
    with pytest.raises(ValueError):
        SolverOptions(damping=1.5)
    with pytest.raises(NonConvergence):
        newton_solve(np.ones(16), 3.0, mesh, SolverOptions(max_iter=1, newton_tol=1e-14))
