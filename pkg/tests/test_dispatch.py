import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loadaug.dispatch import (
    DispatchProblem,
    DispatchSolution,
    clamp_load,
    read_problem_csv,
    solve_dispatch,
    validate_dispatch,
    write_dispatch,
)


def _random_problem(rng, horizon=24):
    load = rng.uniform(0, 20, horizon)
    pv = rng.uniform(0, 15, horizon) * (rng.uniform(size=horizon) > 0.2)
    cg, cp = rng.uniform(0.05, 2.0, 2)
    return DispatchProblem(load, pv, cg, cp)


def test_fixture_182_40():
    prob = DispatchProblem(10.0, 4.0, 1.0, 0.4)
    sol = solve_dispatch(prob)
    np.testing.assert_array_equal(sol.p_pv, 4.0)
    np.testing.assert_array_equal(sol.p_grid, 6.0)
    assert sol.total_cost == pytest.approx(182.40, abs=1e-9)
    v = validate_dispatch(prob, sol)
    assert v.feasible and v.optimal and v.max_residual < 1e-9


def test_fixture_brute_force_at_centikilowatt():
    # independent lattice of 0.01 kW over p_pv in [0, 4]
    p = np.arange(0, 401) * 0.01
    hourly = (1.0 * (10 - p) + 0.4 * p).min()
    assert 24 * hourly == pytest.approx(182.40, abs=1e-9)


def test_all_grid_and_all_pv():
    sol = solve_dispatch(DispatchProblem(5.0, 0.0))
    assert sol.total_cost == pytest.approx(120.0) and np.all(sol.p_pv == 0)
    rng = np.random.default_rng(0)
    load = rng.uniform(0, 5, 24)
    sol = solve_dispatch(DispatchProblem(load, load + 1.0, 1.0, 0.4))
    np.testing.assert_array_equal(sol.p_grid, 0.0)


def test_expensive_pv_unused_and_tie_prefers_pv():
    assert np.all(solve_dispatch(DispatchProblem(10.0, 4.0, 0.3, 0.4)).p_pv == 0)
    np.testing.assert_array_equal(solve_dispatch(DispatchProblem(10.0, 4.0, 0.4, 0.4)).p_pv, 4.0)


def test_balance_violation_reported():
    prob = DispatchProblem(10.0, 4.0)
    sol = solve_dispatch(prob)
    grid = sol.p_grid.copy()
    grid[7] += 0.5
    v = validate_dispatch(prob, DispatchSolution(grid, sol.p_pv, prob.cost(grid, sol.p_pv)))
    assert not v.feasible
    assert v.balance_residual[7] == pytest.approx(0.5)
    assert np.argmax(v.balance_residual) == 7
    assert np.count_nonzero(v.balance_residual) == 1


def test_suboptimal_flagged():
    prob = DispatchProblem(10.0, 4.0)
    grid, pv = np.full(24, 10.0), np.zeros(24)
    v = validate_dispatch(prob, DispatchSolution(grid, pv, prob.cost(grid, pv)))
    assert v.feasible and not v.optimal
    assert v.cost_gap == pytest.approx(24 * 0.6 * 4)


def test_horizon_mismatch():
    prob = DispatchProblem(10.0, 4.0)
    with pytest.raises(ValueError):
        validate_dispatch(prob, DispatchSolution(np.zeros(23), np.zeros(23), 0.0))


def test_input_validation():
    with pytest.raises(ValueError):
        DispatchProblem([-1.0, 2.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        DispatchProblem([1.0], [1.0], cost_grid=-1.0)
    with pytest.raises(ValueError):
        DispatchProblem([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        DispatchProblem([1.0, np.nan], [1.0, 1.0])


def test_negative_forecast_clamped(caplog):
    with caplog.at_level(logging.WARNING, logger="loadaug.dispatch"):
        out = clamp_load([1.0, -0.2, 3.0])
    np.testing.assert_array_equal(out, [1.0, 0.0, 3.0])
    assert "negative" in caplog.text


def test_random_instances_match_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        prob = _random_problem(rng)
        sol = solve_dispatch(prob)
        v = validate_dispatch(prob, sol, steps=2000)
        assert v.feasible and v.optimal, v
        assert sol.total_cost == pytest.approx(float(np.sum(prob.cost_grid * sol.p_grid + prob.cost_pv * sol.p_pv)), abs=1e-9)
        assert v.cost_gap <= 1e-9  # the lattice can never beat the closed form


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 100))
def test_scaling(seed, c):
    prob = _random_problem(np.random.default_rng(seed))
    a = solve_dispatch(prob)
    b = solve_dispatch(DispatchProblem(prob.load, prob.pv_max, c * prob.cost_grid, c * prob.cost_pv))
    np.testing.assert_array_equal(a.p_pv, b.p_pv)
    np.testing.assert_array_equal(a.p_grid, b.p_grid)
    assert b.total_cost == pytest.approx(c * a.total_cost, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31))
def test_monotone_in_pv(seed):
    rng = np.random.default_rng(seed)
    prob = _random_problem(rng)
    more = DispatchProblem(prob.load, prob.pv_max + rng.uniform(0, 5, 24), prob.cost_grid, prob.cost_pv)
    assert solve_dispatch(more).total_cost <= solve_dispatch(prob).total_cost + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_hour_separability(seed):
    prob = _random_problem(np.random.default_rng(seed))
    full = solve_dispatch(prob)
    parts = [solve_dispatch(prob.hour(t)) for t in range(24)]
    np.testing.assert_array_equal(full.p_pv, np.concatenate([p.p_pv for p in parts]))
    np.testing.assert_array_equal(full.p_grid, np.concatenate([p.p_grid for p in parts]))


def test_csv_roundtrip_and_outputs(tmp_path, caplog):
    src = tmp_path / "problem.csv"
    rows = ["hour,load_kw,pv_max_kw"] + [f"{t},{10 if t else -1},{4}" for t in range(24)]
    src.write_text("\n".join(rows[:1] + rows[:0:-1]) + "\n")  # hours out of order
    with caplog.at_level(logging.WARNING):
        prob = read_problem_csv(src)
    assert prob.load[0] == 0.0 and prob.horizon == 24
    sol = solve_dispatch(prob)
    files = write_dispatch(prob, sol, tmp_path / "out")
    assert [f.name for f in files] == ["dispatch_schedule.csv", "dispatch_summary.json", "dispatch.svg"]
    summary = json.loads(files[1].read_text())
    assert summary["total_cost"] == pytest.approx(sol.total_cost)
    assert summary["pv_kwh"] + summary["grid_kwh"] == pytest.approx(prob.load.sum())
    svg = files[2].read_text()
    assert svg.count("<polygon") == 2 and ">grid<" in svg and ">PV<" in svg
    assert len(files[0].read_text().splitlines()) == 25


def test_csv_missing_columns(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("hour,load\n0,1\n")
    with pytest.raises(ValueError):
        read_problem_csv(p)
