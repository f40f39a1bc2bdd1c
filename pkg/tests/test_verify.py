import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plapsys.errors import DegenerateRate
from plapsys.mesh import build_mesh, distance_field
from plapsys.plaplace import principal_eigenpair, solve_dirichlet
from plapsys.system import SolutionPair
from plapsys.verify import (
    CertificateReport,
    CheckEntry,
    boundary_rate,
    check_rectangle,
    comparison_fuzz,
    des_fuzz,
    weak_residual,
)


def pair(u, v, eps=0.0):
    return SolutionPair(np.asarray(u), np.asarray(v), eps, np.nan, np.nan, 0, "")


def test_weak_residual_on_exact_pair(golden):
    # u = v = (1 - r^2)/6 solves the golden singular system; the flux form is exact on quadratics
    mesh = golden.mesh
    w = (1 - mesh.nodes**2) / 6
    ru, rv = weak_residual(pair(w, w), golden.cfg, mesh)
    assert max(ru, rv) < 1e-9


def test_weak_residual_on_perturbed_pair(golden):
    mesh = golden.mesh
    w = (1 - mesh.nodes**2) / 6
    ru, _ = weak_residual(pair(w * 1.01, w), golden.cfg, mesh)
    assert ru > 1e-3


def test_weak_residual_rejects_zero(golden):
    z = np.zeros(golden.mesh.n)
    with pytest.raises(ValueError, match="invalid input"):
        weak_residual(pair(z, z), golden.cfg, golden.mesh)


def test_rectangle_accepts_solution(golden, golden_trace):
    entry = check_rectangle(golden_trace.final, golden.env)
    assert entry.passed
    assert entry.slack > 0


def test_rectangle_lower_bound_is_tight_at_subsolution(golden):
    env = golden.env
    entry = check_rectangle(pair(env.u_lo, env.v_lo), env)
    assert entry.passed
    assert entry.detail.endswith("u >= u_lo") or entry.detail.endswith("v >= v_lo")


def test_rectangle_rejects_scaled_hat(golden):
    env = golden.env
    entry = check_rectangle(pair(2 * env.u_hat, 2 * env.v_hat), env)
    assert not entry.passed
    assert "u < u_hat" in entry.detail


def test_boundary_rate_of_eigenfunction():
    mesh = build_mesh("interval", 512, 1.0, 0.02)
    phi = principal_eigenpair(2.0, mesh).phi
    k_lo, k_hi = boundary_rate(phi, mesh)
    # phi = sqrt(2) sin(pi x): the ratio phi/d tends to sqrt(2) pi at the wall
    assert k_hi == pytest.approx(np.sqrt(2) * np.pi, rel=1e-3)
    assert 0 < k_lo <= k_hi


def test_boundary_rate_of_quadratic_decay():
    lows = []
    for n in (128, 256, 512):
        mesh = build_mesh("radial", n, 1.0, 0.02, 3)
        lows.append(boundary_rate(distance_field(mesh) ** 2, mesh)[0])
    # d^2/d is smallest at the first node, so k_lo shrinks with h
    assert lows[0] / lows[1] == pytest.approx(2.0, rel=0.05)
    assert lows[1] / lows[2] == pytest.approx(2.0, rel=0.05)
    mesh = build_mesh("radial", 512, 1.0, 0.02, 3)
    with pytest.raises(DegenerateRate):
        boundary_rate(distance_field(mesh) ** 2, mesh, floor=1e-2)


def test_boundary_rate_rejects_zero():
    mesh = build_mesh("interval", 64, 1.0, 0.1)
    with pytest.raises(DegenerateRate):
        boundary_rate(np.zeros(mesh.n), mesh)


def test_boundary_rate_of_golden_solution(golden, golden_trace):
    k_lo, k_hi = boundary_rate(golden_trace.final, golden.mesh)
    # the exact solution has (1 - r^2)/(6 (1 - r)) = (1 + r)/6 near r = 1
    assert k_lo == pytest.approx(2 / 6, rel=0.02)
    assert k_hi / k_lo < 1.05


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_comparison_fuzz_clean(p):
    entry = comparison_fuzz(p, build_mesh("interval", 64, 1.0), trials=20)
    assert entry.passed
    assert entry.detail.startswith("0 violations")


def test_comparison_equal_data_equal_solutions():
    mesh = build_mesh("radial", 64, 1.0, N=3)
    f = 1 + mesh.nodes
    np.testing.assert_array_equal(solve_dirichlet(f, 2.5, mesh), solve_dirichlet(f.copy(), 2.5, mesh))


def test_comparison_fuzz_validates():
    with pytest.raises(ValueError):
        comparison_fuzz(2.0, build_mesh("interval", 16, 1.0), trials=0)


def test_des_fuzz_clean():
    assert des_fuzz(10_000, seed=3) == 0


@settings(max_examples=200)
@given(*(st.floats(-1e6, 1e6) for _ in range(4)))
def test_max_is_nonexpansive(a, b, c, d):
    assert abs(max(a, b) - max(c, d)) <= max(abs(a - c), abs(b - d))


def test_report_text_layout():
    rep = CertificateReport({"p": "2.0"}, {"n": 8}, [("C", 4.0, 1.0)])
    rep.add(CheckEntry("one", "anchor", True, 0.5, 1.0, "ok"))
    rep.add(CheckEntry("two", "anchor", False, 0.25, -1.0, "bad"))
    assert not rep.passed
    assert [c.name for c in rep.failures()] == ["two"]
    lines = rep.text().splitlines()
    assert lines[:3] == ["# config p = 2.0", "# mesh n = 8", "# ledger C = 4"]
    assert lines[3].split("\t")[0] == "name"
    assert lines[5].split("\t")[:3] == ["two", "anchor", "fail"]
