import math

import numpy as np
import pytest

from conftest import random_problem, toy_instance
from ddrloc.milp import (DualBounds, LinearExpr, MilpModel, build_dddr,
                         export_lp_text)
from ddrloc.solvers import (branch_and_bound, enumerate_oracle, exact_solve,
                            parse_lp_text, simplex_solve, solve_lp_file)
from ddrloc.transport import h_j_closed_form


def _simplex_max_lp(coeffs):
    m = MilpModel("pick")
    pis = [m.add_variable(f"pi_{k}") for k in range(len(coeffs))]
    m.add_constraint("mass", {p: 1.0 for p in pis}, "=", 1.0)
    m.set_objective(LinearExpr({p: -c for p, c in zip(pis, coeffs)}))
    return m.seal()


def test_max_over_probability_simplex_picks_best_coefficient():
    sol = simplex_solve(_simplex_max_lp([3.0, 7.0, 5.0]))
    assert sol.status == "optimal"
    assert -sol.objective == pytest.approx(7.0)
    assert sol.value("pi_1") == pytest.approx(1.0)


def test_infeasible_and_unbounded_statuses():
    m = MilpModel("bad")
    x = m.add_variable("x", lower=0.0, upper=1.0)
    m.add_constraint("force", {x: 1.0}, ">=", 2.0)
    m.set_objective(LinearExpr({x: 1.0}))
    assert simplex_solve(m.seal()).status == "infeasible"

    m2 = MilpModel("free_fall")
    x2 = m2.add_variable("x")
    m2.set_objective(LinearExpr({x2: -1.0}))
    assert simplex_solve(m2.seal()).status == "unbounded"


def _transport_lp(inst, y, d):
    m = MilpModel("t")
    n_i, n_j = inst.n_facilities, inst.n_customers
    obj = LinearExpr()
    order = []
    for j in range(n_j):
        s = m.add_variable(f"s_{j}")
        obj.add(s, inst.penalty[j])
        bal = {s: 1.0}
        for i in range(n_i):
            x = m.add_variable(f"x_{i}_{j}")
            obj.add(x, inst.cost[i, j])
            bal[x] = 1.0
            m.add_constraint(f"cap_{i}_{j}", {x: 1.0}, "<=",
                             inst.capacity[i] * y[i])
            order.append(("cap", i, j))
        m.add_constraint(f"bal_{j}", bal, "=", d[j])
        order.append(("bal", None, j))
    m.set_objective(obj)
    return m.seal(), order


def test_transport_duals_expose_marginal_source():
    rng = np.random.default_rng(42)
    for trial in range(20):
        inst, _ = random_problem(trial, 3, 2)
        y = rng.integers(0, 2, size=3)
        d = rng.uniform(5, 80, size=2)
        m, order = _transport_lp(inst, y, d)
        sol = simplex_solve(m)
        rhs = np.array([inst.capacity[i] * y[i] if t == "cap" else d[j]
                        for t, i, j in order])
        assert sol.duals @ rhs == pytest.approx(sol.objective, rel=1e-9, abs=1e-9)
        duals = {key: v for key, v in zip(order, sol.duals)}
        for j in range(2):
            _, i_star = h_j_closed_form(inst, y, inst.customer_ids[j], d[j])
            c_star = inst.penalty[j] if i_star == 0 else inst.cost[i_star - 1, j]
            beta = duals[("bal", None, j)]
            assert beta == pytest.approx(c_star, abs=1e-7)
            for i in range(3):
                if y[i]:
                    assert duals[("cap", i, j)] == pytest.approx(
                        min(0.0, inst.cost[i, j] - c_star), abs=1e-7)


def test_simplex_deterministic_pivot_sequence():
    inst, model = random_problem(14, 3, 4, support_size=6)
    m = build_dddr(inst, model)
    relaxed = m.with_bounds({}, relax_binaries=True)
    a = simplex_solve(relaxed)
    b = simplex_solve(relaxed)
    assert a.pivots == b.pivots
    assert a.objective == b.objective


def test_bnb_on_fully_fixed_model_equals_simplex():
    m = MilpModel("fixed")
    y = m.add_variable("y", kind="binary", lower=1.0, upper=1.0)
    x = m.add_variable("x", upper=10.0)
    m.add_constraint("c", {y: 1.0, x: 1.0}, "<=", 4.0)
    m.set_objective(LinearExpr({y: 2.0, x: -1.0}))
    m.seal()
    mip = branch_and_bound(m)
    lp = simplex_solve(m.with_bounds({}, relax_binaries=True))
    assert mip.objective == pytest.approx(lp.objective)
    assert mip.bound <= mip.objective + 1e-6


def test_bnb_backends_agree():
    inst, model = random_problem(25, 4, 4, support_size=6)
    m = build_dddr(inst, model)
    a = branch_and_bound(m, lp_backend="highs")
    b = branch_and_bound(m, lp_backend="simplex")
    assert a.objective == pytest.approx(b.objective, rel=1e-7)


def test_bnb_infeasible_status():
    m = MilpModel("no")
    y = m.add_variable("y", kind="binary")
    m.add_constraint("a", {y: 1.0}, ">=", 0.5)
    m.add_constraint("b", {y: 1.0}, "<=", 0.4)
    m.set_objective(LinearExpr({y: 1.0}))
    assert branch_and_bound(m.seal()).status == "infeasible"


def test_enumerate_single_facility_and_guard():
    inst, model = random_problem(33, 1, 3, support_size=6)
    y, obj, table = enumerate_oracle(inst, model, return_all=True)
    assert len(table) == 2
    assert obj == pytest.approx(min(v for _, v in table))
    big_inst, big_model = random_problem(1, 3, 2)
    with pytest.raises(ValueError):
        object.__setattr__(big_inst, "facility_ids", tuple(range(25)))
        enumerate_oracle(big_inst, big_model)


def test_budget_zero_forces_empty_plan():
    inst, model = random_problem(37, 3, 4, support_size=6)
    y, obj = enumerate_oracle(inst, model, budget=0)
    assert y.tolist() == [0, 0, 0]
    m = build_dddr(inst, model, budget=0)
    sol = branch_and_bound(m)
    assert sol.objective == pytest.approx(obj, rel=1e-9)


def test_exact_solve_matches_oracle_at_default_bounds():
    inst, model = random_problem(12, 3, 4, support_size=7, kappa=0.1)
    sol, y, bounds = exact_solve(inst, model)
    y_ref, obj_ref = enumerate_oracle(inst, model)
    assert sol.objective == pytest.approx(obj_ref, rel=1e-6)
    assert np.array_equal(y, y_ref)


def test_lp_text_round_trip_preserves_optimum(tmp_path):
    inst, model = random_problem(41, 3, 3, support_size=6)
    m = build_dddr(inst, model)
    path = tmp_path / "model.lp"
    path.write_text(export_lp_text(m))
    obj, assignment = solve_lp_file(str(path))
    ref = branch_and_bound(m)
    assert obj == pytest.approx(ref.objective, rel=1e-7)
    # round trip is stable apart from the problem-name comment line
    m2 = parse_lp_text(export_lp_text(m))
    strip = lambda t: t.splitlines()[1:]
    assert strip(export_lp_text(m2)) == strip(export_lp_text(m))


def test_lp_solution_invariants():
    sol = simplex_solve(_simplex_max_lp([1.0, 2.0]))
    x = sol.x
    assert np.all(x >= -1e-8)
    assert abs(x.sum() - 1.0) < 1e-8
    assert sol.assignment()["pi_1"] == pytest.approx(1.0)
