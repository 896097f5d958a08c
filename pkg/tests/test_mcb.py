import random

import numpy as np
import pytest

from gridrestore.conic import bnb
from gridrestore.formulation import CARDINALITY, ObjectiveWeights, encode_cut
from gridrestore.formulation.cuts import FEASIBILITY, OPTIMALITY
from gridrestore.formulation.types import LEXICOGRAPHIC
from gridrestore.iao import run_iao
from gridrestore.mcb import (CONVERGED, NO_RESTORATION, ClusterCache, SolverParams, new_master,
                             run_mcb, solve_cluster, traces_to_csv)
from gridrestore.plan import network_op_time, switching_minutes
from gridrestore.topology import Configuration, feeder_components, is_radial

from conftest import fixture_pair

# restoration optima from exhaustive enumeration over radial configurations
ORACLE_RESTORATION = {
    "toy1": 150.0,
    "toy2": 5515.0,
    "toy3": 3000.0 + 5.0 / 6.0,
    "toy4": 3931.0 + 2.0 / 3.0,
    "toy5": 150.0,
    "toy6": 2101.0 + 2.0 / 3.0,
    "single": 50.0,
}

_runs: dict[str, object] = {}


def mcb_run(name):
    if name not in _runs:
        net, sc = fixture_pair(name)
        _runs[name] = (net, sc, run_mcb(net, sc))
    return _runs[name]


@pytest.mark.parametrize("name", sorted(ORACLE_RESTORATION))
def test_matches_enumeration(name):
    _, _, res = mcb_run(name)
    assert res.status == CONVERGED
    assert res.ub == pytest.approx(ORACLE_RESTORATION[name], abs=1e-6)
    assert res.ub - res.lb <= SolverParams().eps_opt + 1e-9
    assert res.plan.objective["restoration"] == pytest.approx(res.ub, abs=1e-6)


@pytest.mark.parametrize("name", sorted(ORACLE_RESTORATION))
def test_bounds_monotone(name):
    _, _, res = mcb_run(name)
    lbs = [t.lb for t in res.traces]
    ubs = [t.ub for t in res.traces]
    assert all(b >= a for a, b in zip(lbs, lbs[1:]))
    assert all(b <= a for a, b in zip(ubs, ubs[1:]))
    assert all(lb <= ub + 1e-9 for lb, ub in zip(lbs, ubs))


@pytest.mark.parametrize("name", sorted(ORACLE_RESTORATION))
def test_master_configurations_radial(name):
    _, _, res = mcb_run(name)
    assert res.configs
    for cfg in res.configs:
        assert is_radial(res.area, cfg).ok


def antecedent_samples(area, cut, k=10, seed=0):
    """Radial configurations inside the cut's antecedent (all of them when few)."""
    rng = random.Random(seed)
    y0 = dict(cut.config)
    free = [l for l in area.switchable if l not in cut.lines]
    pool = []
    for _ in range(200):
        y = {l: y0[l] if l in cut.lines else rng.randint(0, 1) for l in area.switchable}
        cfg = Configuration.of(area, y)
        if cut.antecedent_holds(cfg) and is_radial(area, cfg) and cfg not in pool:
            pool.append(cfg)
        if len(pool) >= k or not free:
            break
    return pool


@pytest.mark.parametrize("name", sorted(ORACLE_RESTORATION))
def test_optimality_cuts_sound(name):
    net, sc, res = mcb_run(name)
    params = SolverParams()
    steps = list(sc.steps(net))
    cuts = [c for c in res.cuts if c.kind == OPTIMALITY]
    for cut in cuts:
        samples = antecedent_samples(res.area, cut)
        assert samples
        for cfg in samples:
            cluster = next(c for c in feeder_components(res.area, cfg)
                           if set(c.nodes) == set(cut.nodes))
            r = solve_cluster(cluster, cfg, net, params.weights, steps)
            assert r.restoration >= cut.bound - 1e-7


def test_fixtures_generate_cuts():
    kinds = {c.kind for name in ORACLE_RESTORATION for c in mcb_run(name)[2].cuts}
    assert kinds == {OPTIMALITY, FEASIBILITY}


def test_feasibility_cut_excludes_its_configuration():
    net, sc, res = mcb_run("toy5")
    cuts = [c for c in res.cuts if c.kind == FEASIBILITY]
    assert cuts
    params = SolverParams()
    state = new_master(res.area, params.weights)
    for cut in cuts:
        encode_cut(state.bundle, cut, state.policy)
    for cut in cuts:
        model = state.bundle.model.copy()
        for l, v in cut.config:
            i = state.bundle.atlas.mu[l].index
            model.variables[i].lb = model.variables[i].ub = float(v)
        model.minimize(state.bundle.terms.restoration)
        assert bnb.solve_mip(model).status == "infeasible"


def test_plan_consistency():
    net, sc, res = mcb_run("toy3")
    plan = res.plan
    minutes = switching_minutes(plan.actions, network_op_time(net))
    assert plan.objective["F_sw_actions"] == pytest.approx(minutes)
    assert plan.objective["F_sw"] == pytest.approx(minutes)
    stages = [a.stage for a in plan.actions]
    assert stages == sorted(stages)
    assert set(plan.config) == set(res.area.switchable)


def test_trace_csv_has_every_iteration():
    _, _, res = mcb_run("toy4")
    text = traces_to_csv(res.traces)
    lines = text.strip().splitlines()
    assert lines[0].startswith("q,lb,ub,wall_ms")
    assert len(lines) == len(res.traces) + 1


def test_stranded_reports_no_restoration():
    net, sc = fixture_pair("stranded")
    res = run_mcb(net, sc)
    assert res.status == NO_RESTORATION
    assert run_iao(net, sc).status == NO_RESTORATION


def test_cardinality_cut_style_agrees():
    net, sc = fixture_pair("toy1")
    res = run_mcb(net, sc, SolverParams(cut_style=CARDINALITY))
    assert res.status == CONVERGED
    assert res.ub == pytest.approx(ORACLE_RESTORATION["toy1"], abs=1e-6)


def test_unstrengthened_cuts_agree():
    net, sc = fixture_pair("toy4")
    res = run_mcb(net, sc, SolverParams(strengthen_cuts=False))
    assert res.status == CONVERGED
    assert res.ub == pytest.approx(ORACLE_RESTORATION["toy4"], abs=1e-6)


def test_lexicographic_mode():
    net, sc = fixture_pair("toy1")
    w = ObjectiveWeights(mode=LEXICOGRAPHIC)
    res = run_mcb(net, sc, SolverParams(weights=w))
    assert res.status == CONVERGED
    assert res.plan.objective["F_re"] == pytest.approx(0.0, abs=1e-9)


def test_parallel_matches_serial():
    net, sc = fixture_pair("toy1")
    res = run_mcb(net, sc, SolverParams(parallel=2))
    assert res.ub == pytest.approx(mcb_run("toy1")[2].ub, abs=1e-9)


def test_time_limit_respected():
    net, sc = fixture_pair("toy4")
    res = run_mcb(net, sc, SolverParams(eps_time=1e-3))
    assert res.status in ("time-limit", "no-solution")


def test_cache_reuses_clusters():
    net, sc, res = mcb_run("toy1")
    cache = ClusterCache()
    cfg = res.configs[0]
    cluster = next(c for c in feeder_components(res.area, cfg) if c.nodes)
    steps = list(sc.steps(net))
    w = SolverParams().weights
    a = cache.solve(cluster, cfg, net, w, steps, "restoration", None, None)
    b = cache.solve(cluster, cfg, net, w, steps, "restoration", None, None)
    assert cache.hits == 1 and a.restoration == b.restoration


@pytest.mark.parametrize("name", ["toy1", "toy3", "toy4"])
def test_iao_matches_total_optimum(name):
    net, sc = fixture_pair(name)
    res = run_iao(net, sc)
    assert res.status == "optimal"
    mcb_total = mcb_run(name)[2].plan.objective
    # both include the restoration terms; IAO optimizes losses jointly
    assert res.objective <= mcb_total["restoration"] + mcb_total["F_op"] + 1e-6
    assert res.plan.objective["restoration"] == pytest.approx(ORACLE_RESTORATION[name], abs=1e-3)
    assert np.isfinite(res.best_bound) and res.best_bound <= res.objective + 1e-9
