import math
import logging

import numpy as np
import pytest
from hypothesis import given, strategies as st

from riskplan.allocation import ConstraintKey, EdgeStat, RiskAllocation, TrajectorySolution, uniform_allocation
from riskplan.constraints import Halfspace, margin, temporal_obstacle, tighten
from riskplan.dynamics import GaussianState
from riskplan.ira import (
    Classification,
    InfeasibleProblem,
    IraConfig,
    classify,
    delta_min,
    fast_ira,
    ira,
    lower_stage_solve,
    reallocate,
)
from riskplan.milp import Status, constraint_structure
from riskplan.scenario import head_on_scenario, random_scenario

from conftest import make_vehicle, square

K1, K2 = ConstraintKey(0, "obs0", 1), ConstraintKey(0, "obs0", 2)


def fake_solution(edges: dict) -> TrajectorySolution:
    return TrajectorySolution(Status.OPTIMAL, [0], {}, {}, {}, {}, edges, None, 0.0, 0.0)


def edge_on_tightened_boundary(delta, var=0.04, g=1.0):
    return EdgeStat(g, g - margin(var, delta), var, True)


# -- uniform allocation -------------------------------------------------------


def test_uniform_one_obstacle_ten_steps():
    v = make_vehicle()
    structure = constraint_structure([v], [square((5, 5), 1).region()], [], 10)
    alloc = uniform_allocation(structure, 0.05)
    assert len(alloc) == 10
    assert all(d == pytest.approx(0.005, rel=1e-12) for d in alloc.deltas.values())
    assert alloc.total() == pytest.approx(0.05, abs=1e-15)
    assert alloc.total() <= 0.05


def test_uniform_clamps_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        alloc = uniform_allocation([K1], 0.9)
    assert alloc[K1] == 0.5 and "clamp" in caplog.text


def test_uniform_rejects_empty_and_nonpositive():
    with pytest.raises(ValueError):
        uniform_allocation([], 0.05)
    with pytest.raises(ValueError):
        uniform_allocation([K1], 0.0)


@given(st.integers(1, 400), st.floats(1e-6, 0.5))
def test_uniform_never_exceeds_budget(n, budget):
    keys = [ConstraintKey(0, "obs0", k) for k in range(n)]
    alloc = uniform_allocation(keys, budget)
    assert alloc.total() <= budget + 1e-12
    assert len(set(alloc.deltas.values())) == 1


def test_allocation_invariants():
    with pytest.raises(ValueError):
        RiskAllocation({K1: 0.0}, 0.05)
    with pytest.raises(ValueError):
        RiskAllocation({K1: 0.04, K2: 0.02}, 0.05)


def test_ira_config_validation():
    for kw in ({"eta": 0}, {"alpha": 0.0}, {"alpha": 1.0}, {"max_iters": 0}):
        with pytest.raises(ValueError):
            IraConfig(**kw)


# -- classify -----------------------------------------------------------------


def test_delta_min_uses_enabled_edges_only():
    sol = fake_solution({K1: [EdgeStat(1.0, 0.0, 0.01, True), EdgeStat(1.0, 0.99, 0.01, False)]})
    assert delta_min(sol, K1) == pytest.approx(0.5 * math.erfc(1.0 / math.sqrt(0.02)))
    sol = fake_solution({K1: [EdgeStat(1.0, 0.99, 0.01, False)]})
    assert delta_min(sol, K1) == 0.0


def test_classify_examples():
    d = 0.005
    sol = fake_solution({K1: [edge_on_tightened_boundary(d)], K2: [EdgeStat(1.0, 1.0 - 1.4, 0.04, True)]})
    alloc = RiskAllocation({K1: d, K2: d}, 0.05)
    cls, mins = classify(sol, alloc, 1e-4)
    assert mins[K1] == pytest.approx(d, rel=1e-9)
    assert mins[K2] < 1e-11
    assert cls.active == {K1} and cls.inactive == {K2}


def test_tightened_boundary_round_trip_is_active():
    hs = Halfspace(np.array([1.0, 0.0]), 2.0)
    cov = np.diag([0.04, 0.01])
    for d in (0.001, 0.01, 0.2):
        g_t = tighten(hs, cov, d)
        sol = fake_solution({K1: [EdgeStat(hs.g, g_t, 0.04, True)]})
        cls, _ = classify(sol, RiskAllocation({K1: d}, 0.5), 1e-4)
        assert cls.is_active(K1)


# -- reallocate ---------------------------------------------------------------


def test_reallocate_hand_example():
    alloc = RiskAllocation({K1: 0.025, K2: 0.025}, 0.05)
    cls = Classification(frozenset({K1}), frozenset({K2}))
    new, changed = reallocate(alloc, cls, {K1: 0.025, K2: 0.0}, 0.7)
    assert changed
    assert new[K1] == pytest.approx(0.0325, abs=1e-15)
    assert new[K2] == pytest.approx(0.0175, abs=1e-15)
    assert new.total() <= 0.05


def test_reallocate_all_active_is_noop():
    alloc = RiskAllocation({K1: 0.025, K2: 0.025}, 0.05)
    cls = Classification(frozenset({K1, K2}), frozenset())
    new, changed = reallocate(alloc, cls, {K1: 0.025, K2: 0.025}, 0.7)
    assert not changed and new.deltas == alloc.deltas


def test_reallocate_all_inactive_leaves_residual():
    alloc = RiskAllocation({K1: 0.025, K2: 0.025}, 0.05)
    cls = Classification(frozenset(), frozenset({K1, K2}))
    new, changed = reallocate(alloc, cls, {K1: 0.0, K2: 0.01}, 0.7)
    assert changed
    assert new[K1] == pytest.approx(0.0175)
    assert new[K2] == pytest.approx(0.7 * 0.025 + 0.3 * 0.01)
    assert new.total() < 0.05


@given(
    st.lists(st.tuples(st.floats(1e-6, 0.02), st.floats(0.0, 1.0), st.booleans()), min_size=1, max_size=30),
    st.floats(0.05, 0.95),
)
def test_reallocate_budget_and_minimum(items, alpha):
    keys = [ConstraintKey(0, "obs0", k) for k in range(len(items))]
    budget = math.fsum(d for d, _, _ in items)
    alloc = RiskAllocation({k: d for k, (d, _, _) in zip(keys, items)}, budget)
    mins = {k: frac * d for k, (d, frac, _) in zip(keys, items)}
    active = frozenset(k for k, (_, _, a) in zip(keys, items) if a)
    cls = Classification(active, frozenset(keys) - active)
    new, _ = reallocate(alloc, cls, mins, alpha)
    assert new.total() <= budget + 1e-12
    for k in keys:
        assert 0.0 < new[k] <= 0.5
        if k in cls.inactive:
            assert new[k] >= mins[k] - 1e-12
        else:
            assert new[k] >= alloc[k] - 1e-12


# -- ira ----------------------------------------------------------------------


def test_open_space_converges_in_one_iteration():
    v = make_vehicle(start=(1, 1), goal=(6, 3))
    sol = ira([v], [], [], 10, 0.05)
    assert sol.status is Status.OPTIMAL and len(sol.trace) == 1
    lp = lower_stage_solve_plain(v)
    assert sol.objective == pytest.approx(lp, abs=1e-9)


def lower_stage_solve_plain(v):
    from riskplan.ira import _Problem

    return lower_stage_solve(_Problem([v], [], [], 10), None, IraConfig().solver).objective


def skirting_problem():
    v = make_vehicle(start=(1, 5.2), goal=(9, 5.2))
    return v, [square((5, 5), 1.0).region()]


def test_max_iters_one_is_uniform_solve():
    v, obs = skirting_problem()
    sol = ira([v], obs, [], 10, 0.05, IraConfig(max_iters=1))
    assert len(sol.trace) == 1
    uniform = uniform_allocation(constraint_structure([v], obs, [], 10), 0.05)
    assert sol.allocation.deltas == uniform.deltas


def test_skirting_improves_on_uniform():
    v, obs = skirting_problem()
    first = ira([v], obs, [], 10, 0.05, IraConfig(max_iters=1))
    full = ira([v], obs, [], 10, 0.05)
    assert full.objective <= first.objective + 1e-6
    assert full.objective < first.objective - 1e-4
    objs = [row["objective"] for row in full.trace]
    assert all(b <= a + 1e-6 for a, b in zip(objs, objs[1:]))
    assert full.allocation.total() <= 0.05 + 1e-12


def test_returned_solution_satisfies_chance_constraints():
    v, obs = skirting_problem()
    sol = ira([v], obs, [], 10, 0.05)
    for key, edges in sol.edges.items():
        assert any(e.enabled for e in edges)
        assert delta_min(sol, key) <= sol.allocation[key] * (1 + 1e-6) + 1e-12


def test_infeasible_first_iteration_raises():
    v = make_vehicle(start=(1, 1), goal=(5, 5))
    with pytest.raises(InfeasibleProblem):
        ira([v], [square((5, 5), 1.0).region()], [], 10, 0.05)


@pytest.mark.parametrize("seed", range(4))
def test_monotone_on_random_scenarios(seed):
    sc = random_scenario(1 + seed % 2, 1 + seed % 3, seed=100 + seed)
    sol = ira(sc.vehicles, sc.obstacle_regions(), [], sc.T, sc.delta_total, world=sc.world_bounds)
    objs = [row["objective"] for row in sol.trace]
    assert all(b <= a + 1e-6 for a, b in zip(objs, objs[1:]))
    assert sol.objective <= objs[0] + 1e-6


# -- fast_ira -----------------------------------------------------------------


def test_fast_ira_no_neighbours_is_single_lp():
    v = make_vehicle(start=(1, 1), goal=(6, 3))
    sol, alloc = fast_ira(v, [], [], 10, 0.05)
    assert alloc is None
    assert sol.objective == pytest.approx(lower_stage_solve_plain(v), abs=1e-9)


def test_fast_ira_far_obstacle_second_solve_matches_first():
    # an obstacle nowhere near the straight path: every constraint is slack
    v = make_vehicle(start=(1, 1), goal=(6, 1))
    obs = [square((8, 8), 0.5).region()]
    uniform = ira([v], obs, [], 10, 0.05, IraConfig(max_iters=1))
    sol, _ = fast_ira(v, [], obs, 10, 0.05)
    assert sol.objective == pytest.approx(uniform.objective, abs=1e-6)


def test_fast_ira_validates_arguments():
    v = make_vehicle()
    with pytest.raises(ValueError):
        fast_ira(v, [], [], 0, 0.05)
    with pytest.raises(ValueError):
        fast_ira(v, [], [], 5, 0.0)


def test_fast_ira_near_edge_gains_risk_head_on():
    sc = head_on_scenario()
    v0, v1 = sc.vehicles
    blocker = GaussianState(np.array([3.0, 5.0, 0.0, 0.0]), v1.x0_cov, 0)
    tob = temporal_obstacle([blocker], True, owner=1, margin=2 * v1.radius)
    sol, alloc = fast_ira(v0, [tob], [], 10, 0.05, world=sc.world_bounds)
    uniform = 0.05 / len(alloc)
    near = max((k for k in alloc.keys() if k.obj == "veh1"), key=lambda k: alloc[k])
    assert alloc[near] > uniform
    assert alloc.total() <= 0.05 + 1e-12
    # the gaining constraint is the one the plan actually leans on
    assert delta_min(sol, near) == pytest.approx(alloc[near], rel=1e-3)


def test_fast_ira_without_resolve_returns_first_solution():
    sc = head_on_scenario()
    v0, v1 = sc.vehicles
    tob = temporal_obstacle([GaussianState(np.array([3.0, 5.0, 0, 0]), v1.x0_cov, 0)], True, owner=1, margin=0.2)
    cfg = IraConfig(fast_resolve=False)
    sol, alloc = fast_ira(v0, [tob], [], 10, 0.05, cfg, world=sc.world_bounds)
    assert len(sol.trace) == 1
    assert all(d == pytest.approx(0.05 / len(alloc)) for d in alloc.deltas.values())
