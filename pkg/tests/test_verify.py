import ast
import pathlib

import numpy as np
import pytest

import supersol.verify as verify_mod
from supersol.construct import build_certificate
from supersol.domain import DomainSpec, build_grid
from supersol.errors import GridMismatch
from supersol.problem import ProblemSpec, ScalarField
from supersol.solve import residual, solve_both
from supersol.verify import check_ordering, check_subsolution, check_supersolution, default_tolerance


@pytest.fixture(scope="module")
def cert(logistic, interval_grid):
    return build_certificate(logistic, interval_grid)


def field(grid, values):
    return ScalarField(grid.closure_mask(), np.where(grid.closure, values, 0.0))


def test_quadratic_margin_one(unit_interval, interval_grid):
    p = ProblemSpec.from_strings(unit_interval, 0, a="0", g="1")
    x = interval_grid.coords[:, 0]
    u = field(interval_grid, 1 + x * (1 - x) / 2)
    r = check_supersolution(p, u)
    assert r.passed
    assert r.worst_interior_margin == pytest.approx(1.0, rel=1e-9)
    assert abs(r.worst_boundary_margin) < 1e-15
    assert not r.strict


def test_zero_fails_boundary_but_is_subsolution(logistic, interval_grid):
    zero = field(interval_grid, 0.0)
    sup = check_supersolution(logistic, zero)
    assert not sup.passed
    assert sup.worst_boundary_margin == -1.0
    assert sup.worst_boundary_at in ((0.0,), (1.0,))
    sub = check_subsolution(logistic, zero)
    assert sub.passed
    assert sub.worst_interior_margin == 0.0


def test_certificate_supersolution_passes(cert, logistic):
    r = check_supersolution(logistic, cert.supersolution)
    assert r.passed and r.strict


def test_twice_supersolution_is_not_subsolution(cert, logistic):
    r = check_subsolution(logistic, cert.supersolution * 2.0)
    assert not r.passed
    assert r.worst_boundary_margin < 0


def test_tolerance_formula(logistic, interval_grid):
    u = field(interval_grid, 3.0)
    assert default_tolerance(logistic, u) == pytest.approx(10 * interval_grid.h ** 2 * 3 * 11)
    assert default_tolerance(logistic, field(interval_grid, 0.0)) == pytest.approx(10 * interval_grid.h ** 2)


def test_verdict_matches_thresholds(logistic, interval_grid):
    x = interval_grid.coords[:, 0]
    rng = np.random.default_rng(1)
    for _ in range(20):
        u = field(interval_grid, 1 + rng.uniform(0, 2) * np.sin(np.pi * x) + rng.normal(0, 0.01, x.size))
        for check in (check_supersolution, check_subsolution):
            r = check(logistic, u, tol=0.5)
            ok = r.worst_interior_margin >= r.interior_threshold and r.worst_boundary_margin >= r.boundary_threshold
            assert r.passed == ok


def test_ordering_examples(cert, interval_grid):
    zero = field(interval_grid, 0.0)
    U = cert.supersolution
    r = check_ordering(zero, U)
    assert r.passed
    assert min(r.worst_interior_margin, r.worst_boundary_margin) == pytest.approx(U.min())
    assert not check_ordering(U, U).passed
    vals = np.where(interval_grid.closure, 1.0, 0.0)
    k = np.flatnonzero(interval_grid.interior)[40]
    vals[k] = 0.0
    bad = check_ordering(zero, ScalarField(interval_grid.closure_mask(), vals))
    assert not bad.passed
    assert bad.worst_interior_at == interval_grid.locate(k)


def test_grid_mismatch(unit_interval, interval_grid):
    other = build_grid(unit_interval, 1 / 256)
    with pytest.raises(GridMismatch):
        check_ordering(field(interval_grid, 0.0), field(other, 1.0))
    partial = ScalarField(interval_grid.interior_mask(), np.zeros(interval_grid.size))
    with pytest.raises(GridMismatch):
        check_supersolution(ProblemSpec.from_strings(unit_interval, 1), partial)


def test_self_consistency_on_a_solution(cert, logistic):
    zero = field(cert.Phi.grid, 0.0)
    above, _ = solve_both(logistic, zero, cert.supersolution, tol=1e-11)
    r = residual(logistic, above.u)
    for check in (check_supersolution, check_subsolution):
        assert check(logistic, above.u, tol=r).passed
    assert not check_subsolution(logistic, above.u + 1e-3, tol=r).passed
    assert not check_supersolution(logistic, above.u - 1e-3, tol=r).passed


def test_self_consistency_both_way(logistic, interval_grid):
    # a field that is far from a solution fails one of the two checks at small tol
    x = interval_grid.coords[:, 0]
    u = field(interval_grid, 1 + np.sin(np.pi * x))
    both = check_supersolution(logistic, u, tol=1e-6).passed and check_subsolution(logistic, u, tol=1e-6).passed
    assert not both


def test_verify_does_not_import_construct():
    tree = ast.parse(pathlib.Path(verify_mod.__file__).read_text())
    mods = {n.module for n in ast.walk(tree) if isinstance(n, ast.ImportFrom)}
    mods |= {a.name for n in ast.walk(tree) if isinstance(n, ast.Import) for a in n.names}
    assert not any(m and ("construct" in m or "solve" in m) for m in mods)


def test_square_quadratic():
    spec = DomainSpec.rectangle(0, 1, 0, 1)
    grid = build_grid(spec, 1 / 16)
    p = ProblemSpec.from_strings(spec, 0, a="0", g="1")
    x, y = grid.coords[:, 0], grid.coords[:, 1]
    r = check_supersolution(p, field(grid, 1 + x * (1 - x) / 4 + y * (1 - y) / 4))
    assert r.passed
    assert r.worst_interior_margin == pytest.approx(1.0, rel=1e-9)


def test_verify_loads_without_construct():
    import subprocess
    import sys
    code = "import sys, supersol.verify; print(sorted(m for m in sys.modules if m in ('supersol.construct', 'supersol.solve')))"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True).stdout
    assert out.strip() == "[]"
