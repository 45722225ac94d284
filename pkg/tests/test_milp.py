"""Branch-and-bound selection solver vs exhaustive enumeration."""

import numpy as np
import numpy.testing as npt
import pytest

from bruteforce import brute_matching, brute_milp_objective
from fddmimo.matching import max_matching
from fddmimo.milp import (
    BeamGraph,
    MilpInstance,
    lp_relax_bound,
    read_instance,
    read_solution,
    solve_milp,
    write_instance,
    write_solution,
)


def random_instance(rng, max_beams=8, max_users=6):
    m = int(rng.integers(2, max_beams + 1))
    k = int(rng.integers(1, max_users + 1))
    w = np.abs(rng.normal(size=(m, k))) * (rng.random(size=(m, k)) < 0.7)
    thr = float(rng.uniform(0.05, 0.6))
    graph = BeamGraph.from_weights(w, thr)
    t_dl = int(rng.integers(1, m + 1))
    p0 = float(rng.uniform(0.0, 1.5 * max(w.sum(axis=0).max(), 0.1)))
    return MilpInstance(graph=graph, t_dl=t_dl, p0=p0)


# --- matching ---------------------------------------------------------------


def test_matching_trivial_shapes():
    size, pairs = max_matching(np.zeros((3, 4), dtype=np.int8))
    assert size == 0 and pairs == []
    size, pairs = max_matching(np.eye(3, dtype=np.int8))
    assert size == 3
    assert sorted(pairs) == [(0, 0), (1, 1), (2, 2)]
    size, _ = max_matching(np.ones((2, 5), dtype=np.int8))
    assert size == 2


def test_matching_returns_valid_edge_set():
    rng = np.random.default_rng(1)
    for _ in range(60):
        a = (rng.random(size=(rng.integers(1, 8), rng.integers(1, 8))) < 0.4)
        size, pairs = max_matching(a.astype(np.int8))
        assert size == len(pairs)
        rows = [r for r, _ in pairs]
        cols = [c for _, c in pairs]
        assert len(set(rows)) == len(rows)
        assert len(set(cols)) == len(cols)
        for r, c in pairs:
            assert a[r, c]


def test_matching_equals_bruteforce():
    rng = np.random.default_rng(2)
    for _ in range(100):
        a = (rng.random(size=(rng.integers(1, 8), rng.integers(1, 7))) < 0.45)
        size, _ = max_matching(a.astype(np.int8))
        assert size == brute_matching(a)


# --- graph and instance validation ------------------------------------------


def test_beamgraph_scalar_threshold_broadcast():
    w = np.array([[1.0, 0.2], [0.4, 0.9]])
    g = BeamGraph.from_weights(w, 0.5)
    npt.assert_array_equal(g.adjacency, [[1, 0], [0, 1]])
    npt.assert_array_equal(g.threshold, [0.5, 0.5])
    assert g.num_beams == 2 and g.num_users == 2


def test_beamgraph_per_user_threshold():
    w = np.array([[1.0, 0.2], [0.4, 0.9]])
    g = BeamGraph.from_weights(w, np.array([0.45, 0.1]))
    npt.assert_array_equal(g.adjacency, [[1, 1], [0, 1]])


def test_beamgraph_rejects_inconsistent_adjacency():
    w = np.array([[1.0, 0.2]])
    with pytest.raises(ValueError):
        BeamGraph(adjacency=np.array([[0, 1]], dtype=np.int8),
                  weights=w, threshold=0.5)
    with pytest.raises(ValueError):
        BeamGraph.from_weights(w, -1.0)


def test_instance_validation():
    g = BeamGraph.from_weights(np.ones((3, 2)), 0.5)
    with pytest.raises(ValueError):
        MilpInstance(graph=g, t_dl=0, p0=1.0)
    with pytest.raises(ValueError):
        MilpInstance(graph=g, t_dl=4, p0=1.0)
    with pytest.raises(ValueError):
        MilpInstance(graph=g, t_dl=2, p0=-0.5)
    with pytest.raises(ValueError):
        MilpInstance(graph=g, t_dl=2, p0=1.0, epsilon_obj=0.5)  # eps*M = 1.5
    inst = MilpInstance(graph=g, t_dl=2, p0=1.0)
    npt.assert_allclose(inst.epsilon_obj, 1.0 / 6.0)


# --- solver ------------------------------------------------------------------


def test_single_edge_instance():
    g = BeamGraph.from_weights(np.array([[1.0]]), 0.5)
    inst = MilpInstance(graph=g, t_dl=1, p0=0.8)
    sol = solve_milp(inst)
    assert sol.proven_optimal
    npt.assert_allclose(sol.objective, 1.0 + inst.epsilon_obj)
    npt.assert_array_equal(sol.selected_beams, [0])
    npt.assert_array_equal(sol.selected_users, [0])
    npt.assert_allclose(sol.z.sum(), 1.0)


def test_unreachable_power_floor_selects_nothing():
    g = BeamGraph.from_weights(np.array([[1.0], [0.8]]), 0.5)
    inst = MilpInstance(graph=g, t_dl=2, p0=10.0)
    sol = solve_milp(inst)
    assert sol.proven_optimal
    assert sol.objective == 0.0
    assert sol.selected_beams.size == 0
    assert sol.selected_users.size == 0


def test_degree_budget_binds():
    # both beams needed for power, but t_dl = 1 forbids it
    g = BeamGraph.from_weights(np.array([[0.6], [0.6]]), 0.5)
    tight = solve_milp(MilpInstance(graph=g, t_dl=1, p0=1.0))
    assert tight.objective == 0.0
    loose = solve_milp(MilpInstance(graph=g, t_dl=2, p0=1.0))
    assert loose.objective > 1.0


def test_solution_satisfies_constraints():
    rng = np.random.default_rng(3)
    for _ in range(40):
        inst = random_instance(rng)
        sol = solve_milp(inst)
        g = inst.graph
        x, y = sol.x.astype(bool), sol.y.astype(bool)
        deg = g.adjacency[x].sum(axis=0)
        cap = g.weights[x].sum(axis=0)
        assert np.all(deg[y] <= inst.t_dl)
        assert np.all(cap[y] >= inst.p0)
        # no selected beam without a served neighbor
        assert np.all(g.adjacency[np.ix_(x, y)].sum(axis=1) >= (1 if y.any() else 0))
        # objective recomputes from the matching certificate
        msize, _ = max_matching(g.adjacency * x[:, None] * y[None, :])
        npt.assert_allclose(sol.objective,
                            msize + inst.epsilon_obj * x.sum(), atol=1e-9)


def test_matches_bruteforce_oracle():
    rng = np.random.default_rng(4)
    for _ in range(30):
        inst = random_instance(rng, max_beams=6, max_users=5)
        sol = solve_milp(inst)
        assert sol.proven_optimal
        expected = brute_milp_objective(inst)
        npt.assert_allclose(sol.objective, expected, atol=1e-9)


def test_objective_monotone_in_budgets():
    rng = np.random.default_rng(5)
    for _ in range(10):
        inst = random_instance(rng)
        g = inst.graph
        by_t = [
            solve_milp(MilpInstance(graph=g, t_dl=t, p0=inst.p0)).objective
            for t in range(1, g.num_beams + 1)
        ]
        assert all(b2 >= b1 - 1e-9 for b1, b2 in zip(by_t, by_t[1:]))
        lo = solve_milp(MilpInstance(graph=g, t_dl=inst.t_dl, p0=0.0)).objective
        hi = solve_milp(MilpInstance(graph=g, t_dl=inst.t_dl,
                                     p0=inst.p0 + 1.0)).objective
        assert lo >= hi - 1e-9


def test_lp_relax_bound_dominates_optimum():
    rng = np.random.default_rng(6)
    for _ in range(25):
        inst = random_instance(rng, max_beams=6, max_users=5)
        bound = lp_relax_bound(inst)
        opt = solve_milp(inst).objective
        assert bound >= opt - 1e-7


def test_lp_relax_bound_infeasible_fixing():
    g = BeamGraph.from_weights(np.array([[1.0], [1.0]]), 0.5)
    inst = MilpInstance(graph=g, t_dl=1, p0=0.8)
    # forcing both beams on violates the degree budget for the lone user
    bound = lp_relax_bound(
        inst,
        fix_x=np.array([1, 1], dtype=np.int8),
        fix_y=np.array([1], dtype=np.int8),
    )
    assert bound == -np.inf


def test_timeout_returns_feasible_incumbent_with_gap():
    rng = np.random.default_rng(7)
    w = np.abs(rng.normal(size=(12, 8))) + 0.1
    inst = MilpInstance(graph=BeamGraph.from_weights(w, 0.2), t_dl=4,
                        p0=float(w.sum(axis=0).mean()) * 0.5)
    sol = solve_milp(inst, time_limit=0.0)
    assert not sol.proven_optimal
    assert np.isfinite(sol.gap) and sol.gap >= 0.0
    feasible_obj = brute_feasible_check(inst, sol)
    npt.assert_allclose(sol.objective, feasible_obj, atol=1e-9)


def brute_feasible_check(inst, sol):
    g = inst.graph
    x, y = sol.x.astype(bool), sol.y.astype(bool)
    deg = g.adjacency[x].sum(axis=0)
    cap = g.weights[x].sum(axis=0)
    assert np.all(deg[y] <= inst.t_dl)
    assert np.all(cap[y] >= inst.p0)
    msize, _ = max_matching(g.adjacency * x[:, None] * y[None, :])
    return msize + inst.epsilon_obj * x.sum()


# --- persistence --------------------------------------------------------------


def test_instance_roundtrip(tmp_path):
    rng = np.random.default_rng(8)
    inst = random_instance(rng)
    path = tmp_path / "inst.txt"
    write_instance(path, inst)
    back = read_instance(path)
    npt.assert_array_equal(back.graph.weights, inst.graph.weights)
    npt.assert_array_equal(back.graph.adjacency, inst.graph.adjacency)
    assert back.t_dl == inst.t_dl
    assert back.p0 == inst.p0


def test_instance_write_rejects_per_user_threshold(tmp_path):
    w = np.array([[1.0, 0.2], [0.4, 0.9]])
    g = BeamGraph.from_weights(w, np.array([0.45, 0.1]))
    inst = MilpInstance(graph=g, t_dl=1, p0=0.1)
    with pytest.raises(ValueError):
        write_instance(tmp_path / "inst.txt", inst)


def test_solution_roundtrip(tmp_path):
    g = BeamGraph.from_weights(np.array([[1.0]]), 0.5)
    sol = solve_milp(MilpInstance(graph=g, t_dl=1, p0=0.5))
    path = tmp_path / "sol.txt"
    write_solution(path, sol)
    back = read_solution(path)
    assert back["objective"] == sol.objective
    assert back["proven_optimal"] is True
    assert back["beams"] == [0]
    assert back["users"] == [0]
