"""Command line front end.

    supersol <mode> --config <path> [--out <dir>] [--h <real>] [--lambda <real>]

Modes: validate, certify, solve, mms, eigenbench. Exit codes: 0 success,
2 certificate/check failure, 3 hypothesis validation failure, 4 config or
parse error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import expr as ex
from .construct import build_certificate
from .domain import build_grid, measure, parse_domain, tubular_mask
from .eigen import component_eigenpairs, connected_components, faber_krahn_bound
from .errors import (DegenerateBand, DomainError, EpsilonNotFound, ExprSyntaxError, KSearchDiverged, MonotonicityBroken,
                     NoConvergence, SupersolError, ValidationFailed)
from .problem import ProblemSpec, ScalarField, validate_problem
from .solve import mms_solve, solve_both
from .verify import check_ordering, check_subsolution, check_supersolution

MODES = ("validate", "certify", "solve", "mms", "eigenbench")
EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_CONFIG = 0, 2, 3, 4


class ConfigError(Exception):
    pass


def _number(text, key):
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{key}: not a number: {text!r}") from None


def _expr(text, key):
    try:
        return ex.parse(text)
    except ExprSyntaxError as err:
        raise ConfigError(f"{key}: {err}") from None


class RunConfig:
    """Parsed INI config with command-line overrides applied."""

    def __init__(self, path, mode=None, out=None, h=None, lam=None):
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
        except configparser.Error as err:
            raise ConfigError(f"malformed config: {err}") from None
        self.raw = parser
        run = parser["run"] if parser.has_section("run") else {}
        self.mode = mode or run.get("mode")
        if self.mode not in MODES:
            raise ConfigError(f"run.mode: unrecognised mode {self.mode!r} (choose from {', '.join(MODES)})")
        self.out = Path(out or run.get("out", "out"))
        self.certify_with = run.get("certify_with", "computed")
        if self.certify_with not in ("computed", "faber_krahn"):
            raise ConfigError(f"run.certify_with: unknown value {self.certify_with!r}")
        self.samples = int(_number(run.get("samples", "64"), "run.samples"))
        self.seed = int(_number(run.get("seed", "0"), "run.seed"))
        self.eig_tol = _number(run.get("eig_tol", "1e-10"), "run.eig_tol")
        self.solve_tol = _number(run.get("solve_tol", "1e-10"), "run.solve_tol")
        self.check_tol = _number(run["check_tol"], "run.check_tol") if "check_tol" in run else None

        if self.mode == "eigenbench":
            self.problem = None
            self.h = h
            self.rows = self._bench_rows(parser)
            return
        if not parser.has_section("problem"):
            raise ConfigError("missing [problem] section")
        prob = parser["problem"]
        for key in ("domain", "lambda", "m", "a", "f", "g"):
            if key not in prob:
                raise ConfigError(f"problem.{key}: required key missing")
        try:
            domain = parse_domain(prob["domain"])
        except ValueError as err:
            raise ConfigError(f"problem.domain: {err}") from None
        lam_value = lam if lam is not None else _number(prob["lambda"], "problem.lambda")
        try:
            self.problem = ProblemSpec(domain, lam_value, _expr(prob["m"], "problem.m"), _expr(prob["a"], "problem.a"),
                                       _expr(prob["g"], "problem.g"), _expr(prob["f"], "problem.f"))
        except ValueError as err:
            raise ConfigError(f"problem: {err}") from None
        if h is None:
            if not parser.has_section("grid") or "h" not in parser["grid"]:
                raise ConfigError("grid.h: required key missing")
            h = _number(parser["grid"]["h"], "grid.h")
        if not h > 0:
            raise ConfigError("grid.h must be positive")
        self.h = h
        if self.mode == "mms":
            mms = parser["mms"] if parser.has_section("mms") else {}
            if "u_star" not in mms:
                raise ConfigError("mms.u_star: required key missing")
            self.u_star = _expr(mms["u_star"], "mms.u_star")
            self.levels = int(_number(mms.get("levels", "1"), "mms.levels"))

    def _bench_rows(self, parser):
        if not parser.has_section("eigenbench") or "rows" not in parser["eigenbench"]:
            raise ConfigError("eigenbench.rows: required key missing")
        rows = []
        for line in parser["eigenbench"]["rows"].strip().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [s.strip() for s in line.split(";")]
            if len(parts) not in (2, 3):
                raise ConfigError(f"eigenbench row {line!r}: expected 'domain; eps; h'")
            try:
                domain = parse_domain(parts[0])
            except ValueError as err:
                raise ConfigError(f"eigenbench row {line!r}: {err}") from None
            eps = None if parts[1] in ("-", "") else _number(parts[1], "eigenbench eps")
            if len(parts) == 3:
                row_h = _number(parts[2], "eigenbench h")
            elif self.h is not None:
                row_h = self.h
            elif parser.has_section("grid") and "h" in parser["grid"]:
                row_h = _number(parser["grid"]["h"], "grid.h")
            else:
                raise ConfigError(f"eigenbench row {line!r}: no grid spacing")
            rows.append((domain, eps, row_h))
        if not rows:
            raise ConfigError("eigenbench.rows is empty")
        return rows


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, tuple):
        return "(" + ", ".join(_fmt(x) for x in v) + ")"
    return str(v)


def write_report(path, items):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in items:
            fh.write(f"{key} = {_fmt(value)}\n")


def write_field(path, grid, values, nodes):
    """CSV with header x,y,value (x,value in 1-D) for the selected nodes."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "value"] if grid.dimension == 2 else ["x", "value"])
        for node in np.flatnonzero(nodes):
            w.writerow([repr(float(c)) for c in grid.coords[node]] + [repr(float(values[node]))])


def _validation_items(report):
    items = [("validation_seed", report.seed), ("validation_samples", report.samples)]
    for c in report.checks:
        items.append((f"hypothesis.{c.name}", f"{'PASS' if c.passed else 'FAIL'} worst={_fmt(c.worst)} "
                                             f"at={_fmt(c.witness)}"))
    return items


def _header(cfg):
    p = cfg.problem
    return [("mode", cfg.mode), ("domain", str(p.domain)), ("lambda", p.lam), ("m", ex.to_source(p.m)),
            ("a", ex.to_source(p.a)), ("f", ex.to_source(p.f)), ("g", ex.to_source(p.g)), ("h", cfg.h)]


def _certify(cfg, grid, items):
    p = cfg.problem
    cert = build_certificate(p, grid, cfg.certify_with, validate=False, tol=cfg.check_tol, eig_tol=cfg.eig_tol)
    U = cert.supersolution
    zero = ScalarField.constant(grid.closure_mask(), 0.0)
    sub = check_subsolution(p, zero, cfg.check_tol)
    order = check_ordering(zero, U)
    col = cert.collar
    items += [("certify_with", cfg.certify_with), ("epsilon", col.eps), ("sigma_eps", col.sigma_eps),
              ("fk_bound", col.fk.bound), ("max_lambda_m", col.max_lambda_m), ("K", cert.K),
              ("K_boundary", cert.K_boundary), ("K_interior", cert.K_interior), ("tau", cert.tau),
              ("min_interior_margin", cert.interior_margin.on_mask().min()),
              ("boundary_margin", cert.boundary_margin),
              ("check_supersolution", cert.check.verdict), ("check_tolerance", cert.check.tol),
              ("check_subsolution_zero", sub.verdict), ("check_ordering", order.verdict),
              ("ordering_gap", min(order.worst_interior_margin, order.worst_boundary_margin)),
              ("certificate", cert.status)]
    out = cfg.out
    write_field(out / "phi.csv", grid, cert.Phi.values, grid.closure)
    write_field(out / "supersolution.csv", grid, U.values, grid.closure)
    write_field(out / "margin.csv", grid, cert.interior_margin.values, grid.interior)
    ok = cert.passed and sub.passed and order.passed
    return cert, zero, ok


def _run_problem(cfg):
    p = cfg.problem
    grid = build_grid(p.domain, cfg.h)
    items = _header(cfg)
    report = validate_problem(p, grid, cfg.samples, cfg.seed, raise_on_failure=False)
    items += _validation_items(report)
    if not report.passed:
        items.append(("verdict", "INVALID"))
        write_report(cfg.out / "report.txt", items)
        raise ValidationFailed(report)
    if cfg.mode == "validate":
        items.append(("verdict", "PASS"))
        write_report(cfg.out / "report.txt", items)
        return EXIT_OK, "hypotheses hold"

    if cfg.mode == "mms":
        return _mms(cfg, items)

    try:
        cert, zero, ok = _certify(cfg, grid, items)
    except (EpsilonNotFound, DegenerateBand, KSearchDiverged) as err:
        items += [("error", f"{type(err).__name__}: {err}"), ("verdict", "FAIL")]
        write_report(cfg.out / "report.txt", items)
        return EXIT_FAIL, f"{type(err).__name__}: {err}"
    if cfg.mode == "certify" or not ok:
        items.append(("verdict", "PASS" if ok else "FAIL"))
        write_report(cfg.out / "report.txt", items)
        return (EXIT_OK if ok else EXIT_FAIL), f"K={cert.K:.6g} eps={cert.collar.eps:g}"

    try:
        above, below = solve_both(p, zero, cert.supersolution, cfg.solve_tol)
    except (MonotonicityBroken, NoConvergence) as err:
        items += [("error", f"{type(err).__name__}: {err}"), ("verdict", "FAIL")]
        write_report(cfg.out / "report.txt", items)
        return EXIT_FAIL, str(err)
    gap = float(np.abs(above.u.values - below.u.values).max())
    rel_gap = gap / max(above.u.norm_inf(), 1e-300)
    res_ok = max(above.residual, below.residual) <= 1e-8 * (1 + max(above.shift, below.shift))
    agree = rel_gap <= 1e-6
    clean = above.monotone_violations == 0 and below.monotone_violations == 0
    items += [("iterations", above.iterations), ("iterations_from_below", below.iterations),
              ("residual", above.residual), ("residual_from_below", below.residual),
              ("shift", above.shift), ("branch_gap_relative", rel_gap),
              ("monotone_violations", above.monotone_violations + below.monotone_violations),
              ("solution_max", above.u.max()), ("solution_min", above.u.min())]
    verdict = res_ok and agree and clean
    items.append(("verdict", "PASS" if verdict else "FAIL"))
    write_report(cfg.out / "report.txt", items)
    write_field(cfg.out / "u.csv", grid, above.u.values, grid.closure)
    write_field(cfg.out / "u_from_below.csv", grid, below.u.values, grid.closure)
    return (EXIT_OK if verdict else EXIT_FAIL), f"iterations={above.iterations} gap={rel_gap:.2e}"


def _mms(cfg, items):
    p = cfg.problem
    errors = []
    h = cfg.h
    result = grid = None
    for level in range(cfg.levels):
        grid = build_grid(p.domain, h)
        result = mms_solve(p, grid, cfg.u_star, tol=min(cfg.solve_tol, 1e-12))
        errors.append(result.error)
        items += [(f"level{level}.h", h), (f"level{level}.error", result.error),
                  (f"level{level}.iterations", result.iterations), (f"level{level}.residual", result.residual)]
        h /= 2
    orders = [math.log2(errors[i] / errors[i + 1]) for i in range(len(errors) - 1)]
    for i, o in enumerate(orders):
        items.append((f"order{i}", o))
    ok = all(1.8 <= o <= 2.2 for o in orders)
    items += [("u_star", ex.to_source(cfg.u_star)), ("iterations", result.iterations),
              ("residual", result.residual), ("verdict", "PASS" if ok else "FAIL")]
    write_report(cfg.out / "report.txt", items)
    write_field(cfg.out / "u_mms.csv", grid, result.u.values, grid.closure)
    return (EXIT_OK if ok else EXIT_FAIL), "orders=" + ",".join(f"{o:.3f}" for o in orders)


def eigenbench_rows(rows, eig_tol=1e-10):
    """Evaluate each ``(domain, eps, h)`` row; eps=None means the whole domain."""
    table = []
    for domain, eps, h in rows:
        grid = build_grid(domain, h)
        if eps is None:
            mask = grid.interior_mask()
        else:
            ext = grid.embed(int(math.ceil(eps / h)) + 2)
            mask = tubular_mask(domain, ext, eps, "both")
        area = measure(mask)
        fk = faber_krahn_bound(domain.dimension, area)
        sigma = min(e.sigma for e in component_eigenpairs(mask, eig_tol))
        table.append({"domain": str(domain), "eps": "-" if eps is None else eps, "measure": area,
                      "fk_bound": fk.bound, "sigma_computed": sigma, "ratio": sigma / fk.bound,
                      "h": h, "components": len(connected_components(mask)),
                      "ok": sigma >= fk.bound * (1 - 5 * h)})
    return table


def _eigenbench(cfg):
    table = eigenbench_rows(cfg.rows, cfg.eig_tol)
    cfg.out.mkdir(parents=True, exist_ok=True)
    with open(cfg.out / "eigenbench.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["domain", "eps", "measure", "fk_bound", "sigma_computed", "ratio"])
        for r in table:
            w.writerow([r["domain"], _fmt(r["eps"]), _fmt(r["measure"]), _fmt(r["fk_bound"]),
                        _fmt(r["sigma_computed"]), _fmt(r["ratio"])])
    bad = [r for r in table if not r["ok"]]
    items = [("mode", "eigenbench"), ("rows", len(table)), ("violations", len(bad)),
             ("verdict", "FAIL" if bad else "PASS")]
    write_report(cfg.out / "report.txt", items)
    return (EXIT_FAIL if bad else EXIT_OK), f"{len(table)} rows, {len(bad)} below the Faber-Krahn bound"


def run(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="supersol", description=__doc__.splitlines()[0])
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", required=True)
    parser.add_argument("--out")
    parser.add_argument("--h", type=float)
    parser.add_argument("--lambda", dest="lam", type=float)
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig(args.config, args.mode, args.out, args.h, args.lam)
        if cfg.mode == "eigenbench":
            code, note = _eigenbench(cfg)
        else:
            code, note = _run_problem(cfg)
    except ConfigError as err:
        print(f"{args.mode}: config error: {err}")
        return EXIT_CONFIG
    except ValidationFailed as err:
        worst = "; ".join(f"{c.name} (worst {c.worst:.4g} at {_fmt(c.witness)})" for c in err.report.failed())
        print(f"{args.mode}: validation error: hypothesis failed: {worst}")
        return EXIT_INVALID
    except DomainError as err:
        print(f"{args.mode}: validation error: coefficient cannot be evaluated: {err}")
        return EXIT_INVALID
    except SupersolError as err:
        print(f"{args.mode}: verdict=FAIL {type(err).__name__}: {err}")
        return EXIT_FAIL
    verdict = "PASS" if code == EXIT_OK else "FAIL"
    print(f"{cfg.mode}: verdict={verdict} {note} (report: {cfg.out / 'report.txt'})")
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
