"""Command line entry point ``plapsys <eigen|solve|second|certify> --config PATH``.

Exit codes: 0 success, 1 usage or configuration error, 2 pipeline failure,
3 second solution not found.
"""

import argparse
import csv
import os
import sys

import numpy as np

from . import __version__
from .barriers import (
    build_envelope,
    check_exponents,
    fit_envelope_constants,
    select_constants,
    solve_auxiliaries,
)
from .errors import ConfigError, EnvelopeViolation, PlapsysError
from .config import load_config, with_seed
from .mesh import distance_field
from .plaplace import apply_p_laplacian, principal_eigenpair, residual_floor
from .system import (
    NotFound,
    continue_epsilon,
    find_second_solution,
    residual_excess,
    verify_no_solution_t0,
)
from .verify import CertificateReport, CheckEntry, boundary_rate, check_rectangle, comparison_fuzz, des_fuzz

EXIT_OK, EXIT_USAGE, EXIT_PIPELINE, EXIT_NOT_FOUND = 0, 1, 2, 3


class StageFailure(Exception):
    def __init__(self, stage, exc):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


class Writer:
    """Writes artifacts into one directory, each with the same comment header."""

    def __init__(self, out_dir, command, cfg):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.header = [f"# plapsys {__version__}", f"# command = {command}"]
        self.header += [f"# {k} = {v}" for k, v in cfg.items()]
        self.written = []

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def csv(self, name, columns, rows):
        with open(self.path(name), "w", newline="", encoding="utf-8") as fh:
            fh.write("\n".join(self.header) + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([fmt(x) for x in row])
        self.written.append(name)

    def text(self, name, body):
        with open(self.path(name), "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.header) + "\n" + body)
        self.written.append(name)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (PlapsysError, ValueError, np.linalg.LinAlgError) as exc:
        raise StageFailure(name, exc) from exc


class Pipeline:
    """Exponent gate, auxiliaries, constants and envelope for one run configuration."""

    def __init__(self, cfg, report):
        self.cfg = cfg
        self.exps = cfg.exponents
        self.opts = cfg.solver_options()
        self.report = report
        self.mesh = _stage("mesh", cfg.build_mesh)
        rep = check_exponents(self.exps)
        worst = min(rep.margins, key=rep.margins.get)
        report.add(CheckEntry("exponent gate", "singular exponent condition", rep.passed, float("nan"),
                              rep.margins[worst], f"tightest: {worst}"))
        if not rep.passed:
            bad = ", ".join(k for k, v in rep.margins.items() if v <= 0)
            raise StageFailure("exponent gate", f"condition violated: {bad}")
        self.bar = _stage("auxiliaries", solve_auxiliaries, self.exps, self.mesh, self.opts)
        self._aux_checks()
        self.fit = _stage("envelope fit", fit_envelope_constants, self.bar, self.mesh)
        self.ledger = _stage("constant selection", select_constants, self.exps, self.bar, self.mesh, self.fit,
                             cfg.eps_schedule)
        report.ledger = self.ledger.rows()
        for name, value, slack in self.ledger.rows()[:6]:
            ineqs = [i for i in self.ledger.inequalities if i.constant == name]
            ok = all(i.holds for i in ineqs)
            report.add(CheckEntry(f"constant {name}", "certified by doubling search", ok, float("nan"), slack,
                                  f"{len(ineqs)} inequalities"))
        try:
            self.env = build_envelope(self.ledger, self.bar)
        except EnvelopeViolation as exc:
            self._envelope_checks(exc.envelope)
            raise StageFailure("envelope", exc) from exc
        self._envelope_checks(self.env)

    def _aux_checks(self):
        b, e, m, tol = self.bar, self.exps, self.mesh, self.opts.newton_tol
        worst, worst_name, worst_k = 0.0, "", 0
        for name, w, p, f in (("w1", b.w1, e.p, b.w1**e.alpha1), ("w2", b.w2, e.q, b.w2**e.beta2),
                              ("xi1", b.xi1, e.p, b.eigen_p.phi**e.alpha1), ("xi2", b.xi2, e.q, b.eigen_q.phi**e.beta2),
                              ("z1", b.z1, e.p, b.h1_field), ("z2", b.z2, e.q, b.h2_field)):
            ratio = np.abs(apply_p_laplacian(w, p, m) - f) / np.maximum(tol, residual_floor(w, f, p, m))
            k = int(np.argmax(ratio))
            if ratio[k] >= worst:
                worst, worst_name, worst_k = float(ratio[k]), name, k
        self.report.add(CheckEntry("auxiliary residuals", "auxiliary Dirichlet problems", worst <= 1.0,
                                   float(m.nodes[worst_k]), 1.0 - worst, f"worst: {worst_name}"))

    def _envelope_checks(self, env):
        for name, (frac, worst) in env.sign_checks.items():
            self.report.add(CheckEntry(f"envelope {name}", "discrete sub/supersolution inequality",
                                       frac == 1.0, float("nan"), -worst, f"fraction passing {frac:.6f}"))


def _fail(writer, report, exc):
    report_text = report.text() + f"# FAILED at {exc}\n"
    writer.text("certificate.txt", report_text)
    writer.text("FAILED", f"{exc}\n")
    print(f"plapsys: {exc}", file=sys.stderr)
    return EXIT_PIPELINE


def _continuation(pipe):
    return _stage("continuation", continue_epsilon, pipe.env, pipe.ledger, pipe.cfg.eps_schedule, 1.0, pipe.opts)


def _solution_checks(pipe, trace, report):
    final = trace.final
    report.add(check_rectangle(final, pipe.env))
    excess = residual_excess(final.u, final.v, final.eps, pipe.exps, pipe.mesh, pipe.opts.newton_tol)
    report.add(CheckEntry("regularized residual", "weak form at the final eps", excess <= 1.0, float("nan"),
                          1.0 - excess, f"eps={final.eps:g}"))
    try:
        k_lo, k_hi = boundary_rate(final, pipe.mesh)
        report.add(CheckEntry("boundary rate", "linear growth from the boundary", True, float("nan"), k_lo,
                              f"k_lo={k_lo:.6g} k_hi={k_hi:.6g}"))
    except PlapsysError as exc:
        report.add(CheckEntry("boundary rate", "linear growth from the boundary", False, float("nan"), 0.0, str(exc)))
    diffs = trace.diffs[1:]
    dec = all(b < a for a, b in zip(diffs, diffs[1:]))
    gaps = [a - b for a, b in zip(diffs, diffs[1:])]
    report.add(CheckEntry("continuation diffs decreasing", "Cauchy behaviour in eps", dec, float("nan"),
                          min(gaps) if gaps else float("nan")))


def _write_solution(writer, pipe, trace):
    final, env, mesh = trace.final, pipe.env, pipe.mesh
    d = distance_field(mesh)
    rows = zip(mesh.nodes, final.u, final.v, env.u_lo, env.u_hi, env.u_hat, d)
    writer.csv("solution.csv", ["node", "u", "v", "u_lo", "u_hi", "u_hat", "d"], rows)
    trows = [(eps, diff, p.residual_u, p.residual_v, p.iterations) for eps, p, diff in trace.entries]
    writer.csv("trace.csv", ["eps", "diff", "residual_u", "residual_v", "iters"], trows)


def cmd_eigen(cfg, out_dir):
    writer = Writer(out_dir, "eigen", cfg)
    try:
        mesh = _stage("mesh", cfg.build_mesh)
        opts = cfg.solver_options()
        ep = _stage("eigen_p", principal_eigenpair, cfg.p, mesh, opts)
        eq = ep if cfg.q == cfg.p else _stage("eigen_q", principal_eigenpair, cfg.q, mesh, opts)
    except StageFailure as exc:
        print(f"plapsys: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    writer.csv("eigen.csv", ["node_coordinate", "phi_p", "phi_q"], zip(mesh.nodes, ep.phi, eq.phi))
    writer.csv("eigen_summary.csv", ["lambda_p", "lambda_q"], [(ep.lam, eq.lam)])
    print(f"lambda_p={ep.lam:.10g} lambda_q={eq.lam:.10g}")
    return EXIT_OK


def cmd_solve(cfg, out_dir):
    writer = Writer(out_dir, "solve", cfg)
    report = CertificateReport(dict(cfg.items()))
    try:
        pipe = Pipeline(cfg, report)
        report.mesh = pipe.mesh.describe()
        writer.csv("ledger.csv", ["constant", "value", "slack"], pipe.ledger.rows())
        trace = _continuation(pipe)
    except StageFailure as exc:
        if report.ledger:
            writer.csv("ledger.csv", ["constant", "value", "slack"], report.ledger)
        return _fail(writer, report, exc)
    _write_solution(writer, pipe, trace)
    _solution_checks(pipe, trace, report)
    writer.text("certificate.txt", report.text())
    final = trace.final
    print(f"solved: eps={final.eps:g} residual_u={final.residual_u:.3e} residual_v={final.residual_v:.3e} "
          f"singular_residual={max(trace.final_residual_u, trace.final_residual_v):.3e}")
    if not report.passed:
        names = ", ".join(c.name for c in report.failures())
        print(f"plapsys: certificate checks failed: {names}", file=sys.stderr)
        return EXIT_PIPELINE
    return EXIT_OK


def cmd_second(cfg, out_dir):
    if not os.path.exists(os.path.join(out_dir, "solution.csv")):
        print(f"plapsys: no solution.csv in {out_dir}; run solve first", file=sys.stderr)
        return EXIT_USAGE
    writer = Writer(out_dir, "second", cfg)
    report = CertificateReport(dict(cfg.items()))
    try:
        pipe = Pipeline(cfg, report)
        trace = _continuation(pipe)
    except StageFailure as exc:
        print(f"plapsys: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    rows, attempts, found = [], [], None
    for eps, first, _ in trace.entries:
        res = find_second_solution(pipe.env, pipe.ledger, first, eps, pipe.opts)
        recs = res.attempts if isinstance(res, NotFound) else res.history
        for a in recs:
            attempts.append((eps, a["mode"], a["start"], a["converged"], a["residual"], a["iterations"],
                             a["reason"], a["separation"], a["classification"], a["inside_OR"]))
        if isinstance(res, NotFound):
            rows.append((eps, False, float("nan"), float("nan"), float("nan"), ""))
            found = None
        else:
            norm = max(np.max(np.abs(first.u)), np.max(np.abs(first.v)))
            sep = max(np.max(np.abs(res.u - first.u)), np.max(np.abs(res.v - first.v))) / norm
            rows.append((eps, True, res.residual_u, res.residual_v, sep, res.classification))
            found = (res, first)
    writer.csv("second.csv", ["eps", "found", "residual_u", "residual_v", "separation", "classification"], rows)
    writer.csv("second_attempts.csv", ["eps", "mode", "start", "converged", "residual", "iterations", "reason",
                                       "separation", "classification", "inside_OR"], attempts)
    if found is None:
        print(f"plapsys: no second solution at eps={trace.final.eps:g}; diagnostics in second_attempts.csv",
              file=sys.stderr)
        return EXIT_NOT_FOUND
    res, _ = found
    env = pipe.env
    writer.csv("second_solution.csv", ["node", "u", "v", "u_hat", "v_hat"],
               zip(pipe.mesh.nodes, res.u, res.v, env.u_hat, env.v_hat))
    print(f"second solution found at eps={res.eps:g}")
    return EXIT_OK


def cmd_certify(cfg, out_dir):
    writer = Writer(out_dir, "certify", cfg)
    report = CertificateReport(dict(cfg.items()))
    try:
        pipe = Pipeline(cfg, report)
        report.mesh = pipe.mesh.describe()
        trace = _continuation(pipe)
    except StageFailure as exc:
        return _fail(writer, report, exc)
    _solution_checks(pipe, trace, report)
    for k, p in enumerate(sorted({cfg.p, cfg.q})):
        report.add(comparison_fuzz(p, pipe.mesh, 100, pipe.opts, seed=cfg.seed + k))
    bad = des_fuzz(100_000, seed=cfg.seed)
    report.add(CheckEntry("max inequality fuzz", "max-difference inequality", bad == 0, float("nan"), 0.0 - bad,
                          f"{bad} violations in 100000 samples"))
    eps = cfg.eps_schedule[min(1, len(cfg.eps_schedule) - 1)]
    t0 = verify_no_solution_t0(pipe.env, pipe.ledger, eps, pipe.opts, seed=cfg.seed)
    report.add(CheckEntry("no solution at t=0", "homotopy start has no solution", t0.passed, float("nan"),
                          0.0 - t0.converged_inside, f"monotone: {t0.monotone_outcome.split(':')[0]}; "
                          f"control found: {t0.control_found}"))
    writer.text("certificate.txt", report.text())
    print(f"certificate: {sum(c.passed for c in report.checks)}/{len(report.checks)} checks pass")
    return EXIT_OK if report.passed else EXIT_PIPELINE


COMMANDS = {"eigen": cmd_eigen, "solve": cmd_solve, "second": cmd_second, "certify": cmd_certify}


def main(argv=None):
    parser = _Parser(prog="plapsys", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default="plapsys-out")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)
    try:
        cfg = with_seed(load_config(args.config), args.seed)
    except ConfigError as exc:
        print(f"plapsys: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"plapsys: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    with np.errstate(over="ignore"):
        return COMMANDS[args.command](cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
