import math

import numpy as np
import pytest

from qvpn.allocation_lp import build_problem, solve
from qvpn.fixtures import TOPOLOGY_10, bundled_topology
from qvpn.ga_optimizer import GaConfig
from qvpn.harness import (
    DegenerateVarianceError,
    Scenario,
    fairness_report,
    load_selection,
    pearson,
    point_workload,
    run_scenario,
    save_selection,
    scenario_hash,
)
from qvpn.pathfinding import path_from_nodes
from qvpn.quantum_math import DistillationStrategy, default_strategy_catalog
from qvpn.rl_optimizer import TrainConfig
from qvpn.topology import NetworkGraph, NodeSpec
from qvpn.workload import Organization, UserPair, Workload, WorkloadParams

from conftest import make_pair


# ---------------------------------------------------------------- pearson

def test_pearson_perfect_lines():
    xs = [1.0, 2.0, 3.0, 4.0]
    assert pearson(xs, [2 * x + 1 for x in xs]) == pytest.approx(1.0, abs=1e-15)
    assert pearson(xs, [-x for x in xs]) == pytest.approx(-1.0, abs=1e-15)


def test_pearson_hand_computed():
    # sxy=6, sxx=10, syy=6 -> r = 6/sqrt(60)
    r = pearson((1, 2, 3, 4, 5), (2, 4, 5, 4, 5))
    assert abs(r - 0.7745966692414834) < 1e-12


def test_pearson_errors():
    with pytest.raises(ValueError, match="length"):
        pearson([1, 2], [1, 2, 3])
    with pytest.raises(DegenerateVarianceError):
        pearson([1], [2])
    with pytest.raises(DegenerateVarianceError):
        pearson([3, 3, 3], [1, 2, 3])
    with pytest.raises(DegenerateVarianceError):
        pearson([1, 2, 3], [5, 5, 5])


def test_pearson_treats_rounding_noise_as_zero_variance():
    # spread of 1e-4 around 1e6 is below the relative noise floor
    xs = [1e6, 1e6 + 1e-4, 1e6, 1e6, 1e6]
    with pytest.raises(DegenerateVarianceError):
        pearson(xs, [1.0, 2.0, 3.0, 4.0, 5.0])


def test_pearson_invariant_under_affine_maps():
    rng = np.random.default_rng(12)
    xs = rng.normal(size=30)
    ys = rng.normal(size=30)
    base = pearson(xs, ys)
    assert pearson(3.0 * xs + 7.0, ys) == pytest.approx(base, abs=1e-12)
    assert pearson(xs, -2.0 * ys + 1.0) == pytest.approx(-base, abs=1e-12)


# ---------------------------------------------------------------- scenarios

def _scenario(triangle, wl, **kw):
    kw.setdefault("name", "t")
    kw.setdefault("catalog", tuple(default_strategy_catalog(4)))
    return Scenario(graph=triangle, workload=wl, **kw)


def test_scenario_validation(triangle, one_pair_workload):
    wl = one_pair_workload
    with pytest.raises(ValueError, match="exactly one"):
        Scenario(name="x", graph=triangle)
    with pytest.raises(ValueError, match="exactly one"):
        Scenario(name="x", graph=triangle, workload=wl,
                 workload_params=WorkloadParams())
    with pytest.raises(ValueError, match="unknown optimizer"):
        _scenario(triangle, wl, optimizer="sa")
    with pytest.raises(ValueError, match="seeds"):
        _scenario(triangle, wl, repetitions=2, seeds=(0,))
    with pytest.raises(ValueError, match="distinct"):
        _scenario(triangle, wl, repetitions=2, seeds=(4, 4))
    with pytest.raises(ValueError, match="increasing"):
        _scenario(triangle, wl, sweep_axis="p_max", sweep_values=(2, 2, 3))
    with pytest.raises(ValueError, match="unknown sweep axis"):
        _scenario(triangle, wl, sweep_axis="moon_phase", sweep_values=(1,))
    with pytest.raises(ValueError, match="without a sweep_axis"):
        _scenario(triangle, wl, sweep_values=(1, 2))
    with pytest.raises(ValueError, match="sweep_values empty"):
        _scenario(triangle, wl, sweep_axis="p_max")
    with pytest.raises(ValueError, match="workload_params"):
        _scenario(triangle, wl, sweep_axis="pairs_per_org", sweep_values=(2, 4))


def test_scenario_hash_stability_and_sensitivity(triangle, one_pair_workload):
    a = _scenario(triangle, one_pair_workload)
    b = _scenario(triangle, one_pair_workload)
    assert scenario_hash(a) == scenario_hash(b)
    assert len(scenario_hash(a)) == 64
    assert scenario_hash(_scenario(triangle, one_pair_workload, k=7)) != scenario_hash(a)
    assert scenario_hash(_scenario(triangle, one_pair_workload,
                                   catalog=tuple(default_strategy_catalog(5)))) != scenario_hash(a)
    assert scenario_hash(_scenario(triangle, one_pair_workload,
                                   baseline_threshold=0.9)) != scenario_hash(a)
    other_wl = Workload(organizations=(Organization("org0", 1.0),),
                        user_pairs=(make_pair("org0", "A", "C"),), seed=0)
    assert scenario_hash(_scenario(triangle, other_wl)) != scenario_hash(a)


def test_point_workload_r_max_axis(triangle, one_pair_workload):
    sc = _scenario(triangle, one_pair_workload, sweep_axis="r_max",
                   sweep_values=(10.0, 100.0))
    wl = point_workload(sc, 100.0, seed=0)
    assert all(p.r_max == 100.0 for p in wl.user_pairs)
    assert wl.organizations == one_pair_workload.organizations
    # the scenario's own workload is untouched
    assert one_pair_workload.user_pairs[0].r_max == 1e9


def test_point_workload_pairs_per_org_axis():
    net10 = bundled_topology(TOPOLOGY_10)
    params = WorkloadParams(num_orgs=2, pairs_per_org=3, hop_cap=4, r_min=0.0)
    sc = Scenario(name="t", graph=net10, workload_params=params,
                  sweep_axis="pairs_per_org", sweep_values=(2, 4), seeds=(5,))
    wl = point_workload(sc, 4, seed=5)
    assert len(wl.user_pairs) == 8
    assert point_workload(sc, 4, seed=5) == wl  # regeneration is seeded


def test_run_scenario_baseline_p_max_sweep(triangle, one_pair_workload):
    sc = _scenario(triangle, one_pair_workload, optimizer="baseline-hop",
                   sweep_axis="p_max", sweep_values=(1, 2, 3),
                   repetitions=2, seeds=(0, 1))
    result = run_scenario(sc)
    assert len(result.points) == 6
    # axis-major, repetition-minor ordering
    assert [(p.axis_value, p.repetition) for p in result.points] == \
           [(1, 0), (1, 1), (2, 0), (2, 1), (3, 0), (3, 1)]
    assert all(p.status == "optimal" for p in result.points)
    for rep in (0, 1):
        ws = [p.wegr for p in result.points if p.repetition == rep]
        assert ws[0] < ws[1]  # the detour path adds disjoint capacity
        assert ws[2] >= ws[1] - 1e-9 * abs(ws[1])
    assert result.point(2, 1).seed == 1
    with pytest.raises(KeyError):
        result.point(9)


def test_run_scenario_repeatable_and_threaded(triangle, one_pair_workload):
    sc = _scenario(triangle, one_pair_workload, optimizer="baseline-inv-egr",
                   sweep_axis="p_max", sweep_values=(1, 2))
    serial = run_scenario(sc)
    again = run_scenario(sc)
    threaded = run_scenario(sc, max_workers=2)
    assert [p.wegr for p in serial.points] == [p.wegr for p in again.points]
    assert [p.wegr for p in serial.points] == [p.wegr for p in threaded.points]
    assert serial.config_hash == again.config_hash == threaded.config_hash
    assert serial.points[0].selection == again.points[0].selection


def test_run_scenario_records_errors_and_continues(triangle, one_pair_workload):
    sc = _scenario(triangle, one_pair_workload,
                   sweep_axis="strategy_count", sweep_values=(1, 50))
    result = run_scenario(sc)
    ok, bad = result.points
    assert ok.status == "optimal"
    assert bad.status == "error"
    assert math.isnan(bad.wegr)
    assert "strategy count 50" in bad.error


def test_run_scenario_r_max_sweep_monotone(triangle, one_pair_workload):
    sc = _scenario(triangle, one_pair_workload, optimizer="baseline-hop",
                   sweep_axis="r_max", sweep_values=(10.0, 200.0, 5000.0))
    ws = [p.wegr for p in run_scenario(sc).points]
    assert ws[0] == pytest.approx(0.5 * 10.0, rel=1e-9)
    assert ws[0] <= ws[1] <= ws[2]


def test_run_scenario_ga_beats_its_seeded_baselines(triangle):
    org = Organization("org0", 1.0)
    pairs = (make_pair("org0", "A", "B"), make_pair("org0", "A", "C", weight=0.3))
    wl = Workload(organizations=(org,), user_pairs=pairs, seed=0)
    base_ws = []
    for opt in ("baseline-hop", "baseline-inv-egr", "baseline-inv-egr-sq"):
        base_ws.append(run_scenario(_scenario(triangle, wl, optimizer=opt)).points[0].wegr)
    ga_sc = _scenario(triangle, wl, optimizer="ga",
                      ga_config=GaConfig(population_size=6, generations=2))
    ga_point = run_scenario(ga_sc).points[0]
    assert ga_point.status == "optimal"
    assert ga_point.trace is not None
    assert len(ga_point.trace.best_fitness) == 3
    # heuristic seeding plus elitism: never worse than any baseline
    assert all(ga_point.wegr >= w - 1e-9 * abs(w) for w in base_ws)


def test_run_scenario_rl_smoke(triangle, one_pair_workload):
    sc = _scenario(triangle, one_pair_workload, optimizer="rl",
                   rl_config=TrainConfig(epochs=4, batch_size=2))
    point = run_scenario(sc).points[0]
    assert point.status == "optimal"
    assert len(point.trace) == 4
    assert point.wegr > 0
    # rewards seen during training are real allocation values
    assert all(r >= 0 for r in point.trace)


# ---------------------------------------------------------------- fairness

EASY = DistillationStrategy(0.8)


def _solved(triangle, wl, selection, p_max=3):
    return solve(build_problem(triangle, wl, selection, p_max=p_max))


def test_fairness_report_structure(triangle):
    org = Organization("org0", 1.0)
    p1 = make_pair("org0", "A", "B", weight=0.5)
    p2 = make_pair("org0", "A", "C", weight=0.6, r_max=100.0)
    wl = Workload(organizations=(org,), user_pairs=(p1, p2), seed=0)
    sel = {p1.key: [(path_from_nodes(triangle, p1.key, ("A", "B")), EASY)],
           p2.key: [(path_from_nodes(triangle, p2.key, ("A", "C")), EASY)]}
    sol = _solved(triangle, wl, sel)
    rep = fairness_report(sol, wl, sel)

    assert [r.pair_key for r in rep.pair_rows] == [p1.key, p2.key]  # EGR descending
    cap = triangle.link_by_key[("A", "B")].capacity_eprps
    assert rep.pair_rows[0].true_egr == pytest.approx(cap, rel=1e-9)
    assert rep.pair_rows[1].true_egr == pytest.approx(100.0, rel=1e-9)
    assert rep.pair_rows[0].min_hops == 1.0
    assert rep.pair_rows[0].composite == pytest.approx(1.0 * 0.5 / (0.7 * 1.0))
    assert rep.zero_rate_pairs == 0
    assert rep.total_wegr == sol.wegr
    # same threshold and same hop count on both: those metrics are degenerate
    assert rep.degenerate_metrics == ("fidelity", "hops")
    assert math.isnan(rep.corr_fidelity) and math.isnan(rep.corr_hops)
    # higher demand weight went to the pair with *less* rate here
    assert rep.corr_demand == pytest.approx(-1.0, abs=1e-12)
    assert rep.corr_composite == pytest.approx(-1.0, abs=1e-12)


def test_fairness_org_sums_match_solution(triangle):
    orgs = (Organization("orgA", 0.3), Organization("orgB", 0.9))
    p1 = make_pair("orgA", "A", "B", weight=0.5)
    p2 = make_pair("orgB", "A", "C", weight=0.4)
    p3 = make_pair("orgB", "B", "C", weight=0.6)
    wl = Workload(organizations=orgs, user_pairs=(p1, p2, p3), seed=0)
    sel = {p.key: [(path_from_nodes(triangle, p.key, p.endpoints), EASY)]
           for p in (p1, p2, p3)}
    sol = _solved(triangle, wl, sel)
    rep = fairness_report(sol, wl, sel)
    org_true = dict(rep.org_true_egr)
    assert org_true["orgA"] == pytest.approx(sol.true_egr_per_pair[p1.key], rel=1e-12)
    assert org_true["orgB"] == pytest.approx(
        sol.true_egr_per_pair[p2.key] + sol.true_egr_per_pair[p3.key], rel=1e-12)
    assert sum(dict(rep.org_weighted_egr).values()) == pytest.approx(rep.total_wegr, rel=1e-6)
    assert [oid for oid, _ in rep.org_true_egr] == ["orgA", "orgB"]


def test_fairness_counts_zero_rate_pairs(triangle):
    org = Organization("org0", 1.0)
    p1 = make_pair("org0", "A", "B", weight=0.5)
    p2 = make_pair("org0", "A", "C", weight=0.6)
    p3 = make_pair("org0", "B", "C", weight=0.4, r_max=0.0)  # pinned to zero
    wl = Workload(organizations=(org,), user_pairs=(p1, p2, p3), seed=0)
    sel = {p.key: [(path_from_nodes(triangle, p.key, p.endpoints), EASY)]
           for p in (p1, p2, p3)}
    rep = fairness_report(_solved(triangle, wl, sel), wl, sel)
    assert rep.zero_rate_pairs == 1
    starved = [r for r in rep.pair_rows if r.pair_key == p3.key][0]
    assert starved.true_egr == 0.0
    assert math.isnan(starved.min_hops) and math.isnan(starved.composite)
    assert rep.pair_rows[-1].pair_key == p3.key  # zero EGR sorts last


def test_fairness_needs_two_active_pairs(triangle, one_pair_workload):
    pair = one_pair_workload.user_pairs[0]
    sel = {pair.key: [(path_from_nodes(triangle, pair.key, ("A", "B")), EASY)]}
    sol = _solved(triangle, one_pair_workload, sel)
    with pytest.raises(DegenerateVarianceError, match="at least 2"):
        fairness_report(sol, one_pair_workload, sel)


def test_fairness_rejects_non_optimal(triangle):
    pair = make_pair("org0", "A", "B", r_min=1e8)  # far above link capacity
    wl = Workload(organizations=(Organization("org0", 1.0),),
                  user_pairs=(pair,), seed=0)
    sel = {pair.key: [(path_from_nodes(triangle, pair.key, ("A", "B")), EASY)]}
    sol = _solved(triangle, wl, sel)
    assert sol.status == "infeasible"
    with pytest.raises(ValueError, match="optimal"):
        fairness_report(sol, wl, sel)


def test_fairness_rejects_selection_mismatch(triangle):
    org = Organization("org0", 1.0)
    p1 = make_pair("org0", "A", "B")
    p2 = make_pair("org0", "A", "C")
    wl = Workload(organizations=(org,), user_pairs=(p1, p2), seed=0)
    sel = {p.key: [(path_from_nodes(triangle, p.key, p.endpoints), EASY)]
           for p in (p1, p2)}
    sol = _solved(triangle, wl, sel)
    with pytest.raises(ValueError, match="absent from selection"):
        fairness_report(sol, wl, {p1.key: sel[p1.key]})


# ---------------------------------------------------------------- selections

def test_selection_save_load_round_trip(triangle):
    k1 = ("org0", "A", "B")
    k2 = ("org0", "A", "C")
    sel = {
        k1: [(path_from_nodes(triangle, k1, ("A", "B")), DistillationStrategy(0.9)),
             (path_from_nodes(triangle, k1, ("A", "C", "B")), DistillationStrategy(0.85, 7))],
        k2: [(path_from_nodes(triangle, k2, ("A", "C")), EASY)],
    }
    text = save_selection(sel)
    assert text.startswith("qvpn-selection v1\n")
    back = load_selection(text, triangle)
    assert set(back) == {k1, k2}
    assert [(p.nodes, s.link_threshold, s.max_rounds) for p, s in back[k1]] == \
           [(("A", "B"), 0.9, 20), (("A", "C", "B"), 0.85, 7)]
    assert save_selection(back) == text  # byte-stable round trip


def test_selection_load_ignores_comments(triangle):
    text = ("qvpn-selection v1\n"
            "# chosen by hand\n"
            "\n"
            "select org0 A B path A C B threshold 0.9 max_rounds 5  # detour\n")
    sel = load_selection(text, triangle)
    [(path, strategy)] = sel[("org0", "A", "B")]
    assert path.nodes == ("A", "C", "B")
    assert strategy.max_rounds == 5


def test_selection_load_errors(triangle):
    with pytest.raises(ValueError, match="header"):
        load_selection("select org0 A B path A B threshold 0.9 max_rounds 2\n", triangle)
    with pytest.raises(ValueError, match="line 2"):
        load_selection("qvpn-selection v1\nchoose org0 A B path A B threshold 0.9 max_rounds 2\n",
                       triangle)
    # path must start and end on the pair's endpoints
    with pytest.raises(ValueError, match="line 2"):
        load_selection("qvpn-selection v1\nselect org0 A B path A C threshold 0.9 max_rounds 2\n",
                       triangle)
    # malformed threshold value
    with pytest.raises(ValueError, match="line 3"):
        load_selection("qvpn-selection v1\n\nselect org0 A B path A B threshold high max_rounds 2\n",
                       triangle)
    with pytest.raises(ValueError, match="max_rounds"):
        load_selection("qvpn-selection v1\nselect org0 A B path A B threshold 0.9 rounds 2\n",
                       triangle)
    # unknown link in the path
    bare = NetworkGraph(nodes=(NodeSpec("A"), NodeSpec("B")), links=())
    with pytest.raises(ValueError, match="line 2"):
        load_selection("qvpn-selection v1\nselect org0 A B path A B threshold 0.9 max_rounds 2\n",
                       bare)
