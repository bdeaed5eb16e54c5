import math

import numpy as np
import pytest

import qbsde


@pytest.fixture(scope="module")
def grid():
    return qbsde.Grid(1.0, 40, 121)


def test_grid_shape(grid):
    assert grid.t.shape == (41,)
    assert grid.x.shape == (121,)
    assert grid.x[grid.centre] == 0.0
    lo, hi = grid.core_range
    assert np.all(np.abs(grid.x[lo:hi]) <= 4.0 + 1e-12)


def test_expressions():
    assert qbsde.evaluate("-x^2 + 2^3^2", 3.0) == pytest.approx(503.0)
    assert qbsde.evaluate("sin(pi*t)", 0.0, 0.5) == pytest.approx(1.0)
    with pytest.raises(qbsde.ExpressionError):
        qbsde.evaluate("x +", 0.0)


def test_gaussian_solve(grid):
    # f = c z^2 / 2 with terminal a x: zeta = a, Y = a x + c a^2 (T - t) / 2
    s = qbsde.solve(grid, "x", 2.0, 0.3)
    assert s["y"].shape == (41, 1, 121)
    j = grid.centre
    assert s["y"][:, 0, j] == pytest.approx(0.09 * (1.0 - grid.t), abs=1e-10)
    lo, hi = grid.core_range
    assert np.max(np.abs(s["zeta"][:, 0, lo:hi] - 0.3)) < 1e-10


def test_zero_terminal_gives_zero(grid):
    s = qbsde.solve(grid, "0", 1.0, 0.4)
    assert np.max(np.abs(s["y"])) == 0.0


def test_series_matches_picard(grid):
    e = qbsde.expansion(grid, "sin(x)", 1.0, order=6)
    assert len(e["zeta"]) == 6
    assert all(b < a for a, b in zip(e["norms"], e["norms"][1:]))
    series = e["partial_sum"](0.1)
    picard = qbsde.solve(grid, "sin(x)", 1.0, 0.1, tol=1e-12)
    lo, hi = grid.core_range
    gap = np.max(np.abs(series["y"][:, :, lo:hi] - picard["y"][:, :, lo:hi]))
    assert gap < 1e-6


def test_norms(grid):
    assert qbsde.terminal_bmo_norm(grid, "x") == pytest.approx(1.0, abs=1e-8)
    s = qbsde.solve(grid, "x", 2.0, 0.3)
    assert qbsde.hbmo_norm(s["zeta"], grid, core=True) == pytest.approx(0.3, abs=1e-8)


def test_system_with_tensor_driver(grid):
    tensor = [1.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 1.0]
    s = qbsde.solve(grid, ["sin(x)", "tanh(x)"], tensor, 0.2)
    assert s["y"].shape == (41, 2, 121)
    with pytest.raises(ValueError):
        qbsde.solve(grid, ["x", "x"], [1.0, 0.5, 0.2, 0, 0, 0, 0, 1.0], 0.2)


def test_divergence_is_raised(grid):
    with pytest.raises(qbsde.DivergenceError):
        qbsde.solve(grid, "x^2", 2.0, 0.9, max_iterations=30)


def test_prices_agree_with_oracle():
    g = qbsde.Grid(1.0, 100, 201)
    bsde = qbsde.solve_prices(g, "x", 0.3, breakpoints=[0, 0.5, 1], levels=[[1.0], [-0.5]])
    oracle = qbsde.simple_demand_oracle(g, "x", 0.3, [0, 0.5, 1], [[1.0], [-0.5]])
    lo, hi = g.core_range
    for i in oracle["breakpoint_nodes"]:
        assert np.max(np.abs(bsde["s"][i, :, lo:hi] - oracle["s"][i, :, lo:hi])) < 1e-3


def test_homogeneity():
    g = qbsde.Grid(1.0, 50, 151)
    assert qbsde.homogeneity(g, "sin(x)", 0.2, "0.5 + 0.5*t", 2.0) < 1e-8


def test_counterexample():
    assert qbsde.exp_moment_closed_form(0.5) == pytest.approx(math.sqrt(2.0))
    assert math.isinf(qbsde.exp_moment_closed_form(1.0))
    rows = qbsde.exp_moment([0.25, 0.5], seed=11, paths=10000, dt=1e-3)
    assert all(r["within_3se"] for r in rows)
    assert qbsde.solvability_frontier(0.5, 2.0)["solvable"]
    assert not qbsde.solvability_frontier(1.0, 4.0)["solvable"]
    T = qbsde.frontier_maturity(1.0)
    assert (T - 1.0) / math.sqrt(T) == pytest.approx(1.0)
