import math

import numpy as np
import pytest

from supersol.construct import build_certificate
from supersol.domain import DomainSpec, build_grid
from supersol.eigen import assemble_laplacian
from supersol.errors import NoConvergence
from supersol.linalg import conjugate_gradient
from supersol.problem import ProblemSpec, ScalarField
from supersol.solve import mms_solve, monotone_iterate, residual, solve_both, spd_solve


@pytest.fixture(scope="module")
def cert(logistic, interval_grid):
    return build_certificate(logistic, interval_grid)


@pytest.fixture(scope="module")
def branches(cert, logistic):
    zero = ScalarField.constant(cert.Phi.grid.closure_mask(), 0.0)
    return zero, solve_both(logistic, zero, cert.supersolution, tol=1e-10)


def interior(grid):
    return assemble_laplacian(grid, grid.interior_mask())


@pytest.mark.parametrize("method", ["cg", "direct"])
def test_spd_solve_consistency(interval_grid, method):
    L = interior(interval_grid)
    x = interval_grid.coords[L.indices, 0]
    f = np.exp(x) * x * (1 - x)
    u = spd_solve(L, L.matrix @ f, tol=1e-12, method=method)
    assert np.abs(u.values[L.indices] - f).max() <= 1e-9
    assert np.all(u.values[~L.mask.nodes] == 0)


def test_spd_solve_sine():
    errs = []
    for n in (32, 64, 128):
        grid = build_grid(DomainSpec.interval(0, 1), 1 / n)
        L = interior(grid)
        x = grid.coords[L.indices, 0]
        u = spd_solve(L, math.pi ** 2 * np.sin(math.pi * x), tol=1e-13)
        errs.append(np.abs(u.values[L.indices] - np.sin(math.pi * x)).max())
    assert errs[0] < 1e-3
    assert all(1.9 < math.log2(errs[i] / errs[i + 1]) < 2.1 for i in range(2))


def test_spd_solve_large_shift(interval_grid):
    L = interior(interval_grid)
    w = np.cos(interval_grid.coords[L.indices, 0])
    for M, bound in ((1e8, 1e-2), (1e12, 1e-6)):
        u = spd_solve(L, M * w, shift=M, tol=1e-14)
        assert np.abs(u.values[L.indices] - w).max() < bound


def test_spd_solve_rejects_bad_input(interval_grid):
    L = interior(interval_grid)
    with pytest.raises(ValueError):
        spd_solve(L, np.ones(len(L.indices)), shift=-1)
    with pytest.raises(ValueError):
        spd_solve(L, np.ones(len(L.indices)), method="qr")


def test_cg_energy_decreases():
    grid = build_grid(DomainSpec.disk(0, 0, 1), 1 / 16)
    L = interior(grid)
    b = np.random.default_rng(0).standard_normal(len(L.indices))
    x, info = conjugate_gradient(L.matrix, b, tol=1e-12, track_energy=True)
    assert info.relative_residual <= 1e-12
    assert np.all(np.diff(info.energies) <= 1e-12 * abs(info.energies[-1]))
    with pytest.raises(NoConvergence):
        conjugate_gradient(L.matrix, b, tol=1e-14, max_iter=3)


def test_cg_deterministic(interval_grid):
    L = interior(interval_grid)
    b = np.linspace(-1, 1, len(L.indices))
    a = spd_solve(L, b)
    c = spd_solve(L, b)
    assert np.array_equal(a.values, c.values)


def test_harmonic_one_step(unit_interval, interval_grid):
    p = ProblemSpec.from_strings(unit_interval, 0, a="0", g="1")
    closure = interval_grid.closure_mask()
    res = monotone_iterate(p, ScalarField.constant(closure, 0.0), ScalarField.constant(closure, 2.0),
                           branch="from_above")
    assert np.allclose(res.u.on_mask(), 1.0, atol=1e-12)
    assert res.history[0] == pytest.approx(1.0)
    assert res.history[1] <= 1e-12


def test_branch_agreement(branches):
    _, (above, below) = branches
    assert above.branch == "from_above" and below.branch == "from_below"
    gap = np.abs(above.u.values - below.u.values).max()
    assert gap <= 1e-6 * above.u.norm_inf()
    assert above.monotone_violations == below.monotone_violations == 0


def test_fixed_point_and_sandwich(branches, cert, logistic):
    _, (above, below) = branches
    top = cert.supersolution
    for r in (above, below):
        assert r.residual <= 10 * 1e-10 * (1 + r.shift)
        assert r.residual == residual(logistic, r.u)
        assert r.u.min() >= -1e-10
        assert np.all(r.u.values <= top.values + 1e-10 * top.norm_inf())


def test_monotone_history(branches, logistic, cert):
    zero, _ = branches
    r = monotone_iterate(logistic, zero, cert.supersolution, branch="from_below")
    assert r.iterations == len(r.history)
    assert r.history[-1] <= 1e-10
    with pytest.raises(ValueError):
        monotone_iterate(logistic, zero, cert.supersolution, branch="sideways")


def test_no_convergence(branches, logistic, cert):
    zero, _ = branches
    with pytest.raises(NoConvergence):
        monotone_iterate(logistic, zero, cert.supersolution, max_iters=2)


def test_residual_examples(logistic, interval_grid, cert):
    zero = ScalarField.constant(interval_grid.closure_mask(), 0.0)
    assert residual(logistic, zero) == 1.0
    assert residual(logistic, cert.supersolution) > 0


def test_mms_constant(logistic, interval_grid):
    r = mms_solve(logistic, interval_grid, "1")
    assert r.error <= 1e-9


def test_mms_quadratic(unit_interval):
    p = ProblemSpec.from_strings(unit_interval, 0, a="d", f="u^2")
    for n in (16, 32, 64):
        r = mms_solve(p, build_grid(unit_interval, 1 / n), "1 + x*(1-x)")
        assert r.error <= 1e-7


def test_mms_sine_order(unit_interval):
    p = ProblemSpec.from_strings(unit_interval, 10, a="d", f="u^2")
    errs = [mms_solve(p, build_grid(unit_interval, 1 / n), "sin(3*x)").error for n in (64, 128, 256)]
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert all(1.8 <= o <= 2.2 for o in orders)


def test_mms_rejects_u(logistic, interval_grid):
    with pytest.raises(ValueError):
        mms_solve(logistic, interval_grid, "u + x")
