import itertools
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcilp import graph, ilp, reconcile, synth
from dcilp.graph import CausalGraph
from dcilp.local import LocalResult
from dcilp.markov import MarkovBlankets
from dcilp.reconcile import NONE, TYPE1, TYPE2, TYPE3, MergedGraph

GOLDEN = Path(__file__).parent / "golden"


def enumerate_model(model):
    """(objective, assignment) for every feasible assignment, by plain loops."""
    out = []
    for x in itertools.product([0, 1], repeat=model.num_vars):
        if ilp.verify(model, x)[0]:
            out.append((model.objective_value(x), x))
    return out


def local(d, center, edges):
    b = np.zeros((d, d))
    for i, j in edges:
        b[i, j] = 1
    return LocalResult(center, b)


def full_mbs(d):
    return MarkovBlankets([set(range(d)) - {i} for i in range(d)])


def raw_pair(a, b):
    raw = np.zeros((2, 2), dtype=int)
    raw[0, 1], raw[1, 0] = a, b
    return MergedGraph(raw)


# --- merging and conflicts --------------------------------------------------

def test_naive_merge_examples():
    agree = reconcile.naive_merge([local(2, 0, [(0, 1)]), local(2, 1, [(0, 1)])])
    assert agree.raw.tolist() == [[0, 2], [0, 0]]
    add = reconcile.naive_merge([local(2, 0, [(0, 1)]), local(2, 1, [])])
    assert (add.raw[0, 1], add.raw[1, 0]) == (1, 0)
    acute = reconcile.naive_merge([local(2, 0, [(0, 1)]), local(2, 1, [(1, 0)])])
    assert (acute.raw[0, 1], acute.raw[1, 0]) == (1, 1)
    assert reconcile.classify_conflicts(acute).counts[TYPE2] == 1


def test_naive_merge_rejects_uncentered_locals():
    bad = [local(3, c, [(1, 2)]) for c in range(3)]
    with pytest.raises(ValueError):
        reconcile.naive_merge(bad)


@pytest.mark.parametrize("pair,status", [((2, 0), NONE), ((1, 1), TYPE2), ((2, 1), TYPE3),
                                         ((0, 1), TYPE1), ((2, 2), NONE), ((0, 0), NONE)])
def test_pair_status_table(pair, status):
    assert reconcile.classify_pair(*pair) == status


def test_all_quadruplets():
    counts = {NONE: 0, TYPE1: 0, TYPE2: 0, TYPE3: 0}
    for q in itertools.product([0, 1], repeat=4):
        bi_ij, bi_ji, bj_ij, bj_ji = q
        status = reconcile.classify_quadruplet(*q)
        # same answer as classifying the summed pair
        assert status == reconcile.classify_pair(bi_ij + bj_ij, bi_ji + bj_ji)
        counts[status] += 1
        nnz = sum(q)
        if nnz == 1:
            assert status == TYPE1
        if nnz == 3:
            assert status == TYPE3
    assert counts == {NONE: 4, TYPE1: 4, TYPE2: 4, TYPE3: 4}


def test_conflict_report_json():
    raw = np.array([[0, 1, 2], [1, 0, 1], [1, 0, 0]])
    rep = reconcile.classify_conflicts(MergedGraph(raw))
    assert rep.counts == {NONE: 0, TYPE1: 1, TYPE2: 1, TYPE3: 1}
    assert rep.status[(0, 2)] == TYPE3
    assert '"type2_acute": 1' in rep.to_json()


# --- weighting --------------------------------------------------------------

H, T = Fraction(1, 2), Fraction(2, 3)
EXPECTED_WEIGHTS = {
    "LP1": {(0, 0): (0, 0), (1, 0): (1, 0), (1, 1): (1, 1), (2, 0): (1, 0), (2, 1): (1, 1),
            (2, 2): (1, 1)},
    "LP2": {(0, 0): (0, 0), (1, 0): (1, 0), (1, 1): (1, 1), (2, 0): (2, 0), (2, 1): (2, 1),
            (2, 2): (2, 2)},
    "LP3": {(0, 0): (0, 0), (1, 0): (1, 0), (1, 1): (1, 1), (2, 0): (2, 0), (2, 1): (2, 0),
            (2, 2): (2, 2)},
    "LP4": {(0, 0): (0, 0), (1, 0): (H, 0), (1, 1): (H, H), (2, 0): (1, 0), (2, 1): (T, 0),
            (2, 2): (1, 1)},
}


@pytest.mark.parametrize("scheme", reconcile.SCHEMES)
def test_weight_table(scheme):
    for (a, b), (wa, wb) in EXPECTED_WEIGHTS[scheme].items():
        for (x, y), (wx, wy) in (((a, b), (wa, wb)), ((b, a), (wb, wa))):
            w = reconcile.apply_weighting(raw_pair(x, y), scheme).weighted
            assert (w[0, 1], w[1, 0]) == pytest.approx((float(wx), float(wy)))


def test_weighting_errors():
    with pytest.raises(ValueError):
        reconcile.apply_weighting(raw_pair(1, 0), "LP5")
    with pytest.raises(ValueError):
        reconcile.apply_weighting(raw_pair(3, 0))


# --- model construction ------------------------------------------------------

def d2_fixture():
    return reconcile.build_ilp(reconcile.apply_weighting(raw_pair(2, 0)), full_mbs(2))


def test_d2_model_enumeration():
    p3 = d2_fixture()
    assert p3.model.names == ["B_0_1", "B_1_0", "S_0_1"]
    feas = enumerate_model(p3.model)
    best = max(f for f, _ in feas)
    assert best == 2.0
    assert [x for f, x in feas if f == best] == [(1, 0, 0)]
    pool = ilp.solve(p3.model)
    assert pool.objective_value == 2.0 and [s.tolist() for s in pool.solutions] == [[1, 0, 0]]


def spouse_fixture(spouse=True):
    """Y=0 and V=2 both adjacent to W=1, every local edge undirected."""
    raw = np.array([[0, 2, 0], [2, 0, 2], [0, 2, 0]])
    if spouse:
        mbs = full_mbs(3)
    else:
        mbs = MarkovBlankets([{1}, {0, 2}, {1}])
    return reconcile.build_ilp(reconcile.apply_weighting(MergedGraph(raw)), mbs)


def test_spouse_forces_collider():
    p3 = spouse_fixture()
    feas = enumerate_model(p3.model)
    best = max(f for f, _ in feas)
    optimal = [x for f, x in feas if f == best]
    assert len(optimal) == 1
    adj = p3.to_adjacency(optimal[0])
    assert graph.edge_list(adj) == [(0, 1), (2, 1)]
    pool = ilp.solve(p3.model)
    assert [s.tolist() for s in pool.solutions] == [list(optimal[0])]


def test_without_spouse_leaves_orientation_open():
    p3 = spouse_fixture(spouse=False)
    pool = ilp.solve(p3.model)
    assert len(pool.solutions) == 4 and pool.objective_value == 4.0


def test_golden_lp_files():
    assert ilp.export_lp(d2_fixture().model) == (GOLDEN / "phase3_d2.lp").read_text()
    assert ilp.export_lp(spouse_fixture().model) == (GOLDEN / "phase3_spouse.lp").read_text()


def test_empty_merge_objective_zero():
    p3 = reconcile.build_ilp(reconcile.apply_weighting(MergedGraph(np.zeros((4, 4), int))),
                             full_mbs(4))
    for v in p3.b_vars.values():
        assert p3.model.fixings[v] == 0
    assert len(p3.dropped_pairs) == 6
    pool = ilp.solve(p3.model)
    assert pool.objective_value == 0.0


def test_variable_creation_rules():
    raw = np.array([[0, 1, 1, 0], [0, 0, 1, 0], [0, 0, 0, 1], [0, 0, 0, 0]])
    mbs = MarkovBlankets([{1, 2}, {0, 2}, {0, 1, 3}, {2}])
    p3 = reconcile.build_ilp(reconcile.apply_weighting(MergedGraph(raw)), mbs)
    pairs = {(i, j) for i in range(4) for j in range(4)
             if i != j and j in mbs.sets[i] and i in mbs.sets[j]}
    assert set(p3.b_vars) == pairs
    assert set(p3.s_vars) == {p for p in pairs if p[0] < p[1]}
    assert set(p3.v_vars) == {(0, 1, 2)}
    with pytest.raises(ValueError):
        reconcile.build_ilp(MergedGraph(raw), MarkovBlankets([set()] * 3))


# --- ground truth ------------------------------------------------------------

def test_truth_chain_and_collider():
    chain = CausalGraph.from_edges(3, [(0, 1), (1, 2)])
    mbs = MarkovBlankets(graph.markov_blankets_from_dag(chain))
    assert reconcile.ground_truth_feasibility(chain, mbs)
    p3 = reconcile.build_ilp(reconcile.apply_weighting(reconcile.truth_merge(chain)), mbs)
    x = reconcile.truth_assignment(p3, chain)
    assert all(x[v] == 0 for v in list(p3.s_vars.values()) + list(p3.v_vars.values()))

    coll = CausalGraph.from_edges(3, [(0, 2), (1, 2)])
    mbs = MarkovBlankets(graph.markov_blankets_from_dag(coll))
    assert reconcile.ground_truth_feasibility(coll, mbs)
    p3 = reconcile.build_ilp(reconcile.apply_weighting(reconcile.truth_merge(coll)), mbs)
    x = reconcile.truth_assignment(p3, coll)
    assert x[p3.v_vars[(0, 1, 2)]] == 1 and x[p3.s_vars[(0, 1)]] == 1


def test_truth_feasibility_200_random_dags():
    rng = np.random.default_rng(5)
    models = [("ER", 1), ("ER", 2), ("SF", 3)]
    for t in range(200):
        kind, k = models[t % 3]
        d = int(rng.integers(8, 21))
        g = synth.gen_dag(d, kind, k, int(rng.integers(1 << 30)))
        mbs = MarkovBlankets(graph.markov_blankets_from_dag(g))
        assert reconcile.ground_truth_feasibility(g, mbs), (t, kind, d)


@settings(max_examples=25)
@given(st.integers(5, 8), st.integers(0, 10_000), st.sampled_from(reconcile.SCHEMES))
def test_optimum_at_least_truth_objective(d, seed, scheme):
    g = synth.gen_dag(d, "ER", 2, seed)
    mbs = MarkovBlankets(graph.markov_blankets_from_dag(g))
    p3 = reconcile.build_ilp(reconcile.apply_weighting(reconcile.truth_merge(g), scheme), mbs)
    x = reconcile.truth_assignment(p3, g)
    assert ilp.verify(p3.model, x)[0]
    pool = ilp.solve(p3.model)
    assert pool.objective_value >= p3.model.objective_value(x) - 1e-9


@settings(max_examples=30)
@given(st.integers(3, 6), st.data())
def test_solutions_verify_and_have_no_two_cycles(d, data):
    raw = np.zeros((d, d), dtype=int)
    for i, j in itertools.combinations(range(d), 2):
        raw[i, j], raw[j, i] = data.draw(st.sampled_from(list(reconcile.PAIR_STATUS)))
    sets = [set() for _ in range(d)]
    for i, j in itertools.combinations(range(d), 2):
        if data.draw(st.booleans()):
            sets[i].add(j)
            sets[j].add(i)
    p3 = reconcile.build_ilp(reconcile.apply_weighting(MergedGraph(raw)), MarkovBlankets(sets))
    pool = reconcile.solve_phase3(p3, 8)
    for s in pool.solutions:
        assert ilp.verify(p3.model, s)[0]
        assert not graph.has_two_cycle(p3.to_adjacency(s))


# --- selection and cycle repair ----------------------------------------------

def test_select_solution_examples():
    dag = np.zeros((3, 3))
    dag[0, 1] = dag[1, 2] = dag[0, 2] = 1
    cyc = np.zeros((3, 3))
    cyc[0, 1] = cyc[1, 2] = cyc[2, 0] = 1
    assert np.array_equal(reconcile.select_solution([cyc, dag]), dag)
    five = np.triu(np.ones((4, 4)), 1)
    five[0, 3] = 0
    four = five.copy()
    four[0, 2] = 0
    assert np.array_equal(reconcile.select_solution([five, four]), four)
    assert np.array_equal(reconcile.select_solution([cyc]), cyc)
    with pytest.raises(ValueError):
        reconcile.select_solution([])


def test_select_solution_tie_break_is_lexicographic():
    a = np.zeros((3, 3))
    a[0, 1] = 1
    b = np.zeros((3, 3))
    b[1, 2] = 1
    assert np.array_equal(reconcile.select_solution([b, a]), a)


def test_cycle_repair_dag_first_round():
    res = reconcile.cycle_repair(d2_fixture())
    assert res.is_dag and res.rounds == 1 and res.cuts == []


def three_cycle_fixture():
    raw = np.zeros((3, 3), dtype=int)
    raw[0, 1] = raw[1, 2] = raw[2, 0] = 1
    return reconcile.build_ilp(reconcile.apply_weighting(MergedGraph(raw)), full_mbs(3))


def test_cycle_repair_three_cycle():
    p3 = three_cycle_fixture()
    assert ilp.solve(p3.model).objective_value == 3.0
    res = reconcile.cycle_repair(p3)
    assert res.is_dag and res.rounds == 2 and len(res.cuts) == 1
    kept = sum(res.graph[i, j] for i, j in [(0, 1), (1, 2), (2, 0)])
    assert kept <= 2
    # the constrained model's optimum by enumeration
    best = max(f for f, _ in enumerate_model(p3.model))
    assert res.objective == best == 2.0


def test_cycle_repair_bad_rounds():
    with pytest.raises(ValueError):
        reconcile.cycle_repair(d2_fixture(), max_rounds=0)


def test_cycle_repair_round_limit_flags_non_dag():
    res = reconcile.cycle_repair(three_cycle_fixture(), max_rounds=1)
    assert not res.is_dag and res.rounds == 1


def test_infeasible_cover_is_relaxed():
    # forbidding both orientations leaves the cover row unsatisfiable
    p3 = reconcile.build_ilp(reconcile.apply_weighting(raw_pair(1, 0)), full_mbs(2))
    p3.model.add_constraint([(p3.b_vars[(0, 1)], 1)], "<=", 0)
    p3.model.add_constraint([(p3.b_vars[(1, 0)], 1)], "<=", 0)
    pool = reconcile.solve_phase3(p3)
    assert pool.status == "optimal" and p3.relaxed_pairs == [(0, 1)]
