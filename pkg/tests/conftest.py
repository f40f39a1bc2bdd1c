from types import SimpleNamespace

import pytest

from plapsys.barriers import (
    ExponentConfig,
    build_envelope,
    fit_envelope_constants,
    select_constants,
    solve_auxiliaries,
)
from plapsys.mesh import build_mesh
from plapsys.plaplace import SolverOptions
from plapsys.system import continue_epsilon

GOLDEN = ExponentConfig(2.0, 2.0, 3, -0.5, 0.5, 0.5, -0.5)
SCHEDULE = (1e-1, 1e-2, 1e-3, 1e-4)

_ACCEPTANCE = {}


def build_golden(n, cfg=GOLDEN, kind="radial", delta=0.02):
    mesh = build_mesh(kind, n, 1.0, delta, cfg.N if kind == "radial" else None)
    opts = SolverOptions()
    bar = solve_auxiliaries(cfg, mesh, opts)
    fit = fit_envelope_constants(bar, mesh)
    ledger = select_constants(cfg, bar, mesh, fit, SCHEDULE)
    env = build_envelope(ledger, bar)
    return SimpleNamespace(cfg=cfg, mesh=mesh, opts=opts, bar=bar, fit=fit, ledger=ledger, env=env)


@pytest.fixture(scope="session")
def golden():
    return build_golden(256)


@pytest.fixture(scope="session")
def golden512():
    return build_golden(512)


@pytest.fixture(scope="session")
def golden_trace(golden):
    return continue_epsilon(golden.env, golden.ledger, SCHEDULE, 1.0, golden.opts)


@pytest.fixture(scope="session")
def golden512_trace(golden512):
    return continue_epsilon(golden512.env, golden512.ledger, SCHEDULE, 1.0, golden512.opts)


@pytest.fixture
def record():
    """Store one acceptance outcome; the terminal summary prints them all."""

    def _record(number, title, ok, detail=""):
        _ACCEPTANCE[number] = (title, bool(ok), detail)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok, detail = _ACCEPTANCE[number]
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} [{status}] {title}: {detail}")
