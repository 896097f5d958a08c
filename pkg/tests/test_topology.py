import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from gridrestore.network import load_network, load_scenario
from gridrestore.topology import (Configuration, NotRadialError, closed_lines, compute_off_outage,
                                  feeder_components, is_radial)

from conftest import DATA, fixture_pair
from toygrids import random_toy


def test_toy1_partition():
    net, sc = fixture_pair("toy1")
    area = compute_off_outage(net, sc)
    assert area.nodes == ("1", "2", "3")
    assert area.ava == ("T1", "T2") and area.int_ == () and area.sec == ("1-2",)
    assert area.fixed == ("2-3",)
    assert area.locked_open == {"S1-1"}
    assert set(area.scope_nodes) == {"S2", "S3", "4", "5"}


def test_internal_tie_classified():
    net, sc = fixture_pair("toy3")
    area = compute_off_outage(net, sc)
    assert area.int_ == ("T1",)
    assert set(area.switchable) == {"1-2", "1-3", "T1", "T2", "T3"}


def test_no_outage_area_is_empty():
    net, _ = fixture_pair("toy1")
    sc = load_scenario(DATA / "nofault_fault.json", net)
    assert compute_off_outage(net, sc).empty


def test_cycle_through_two_substations():
    net, sc = fixture_pair("toy1")
    area = compute_off_outage(net, sc)
    chk = is_radial(area, Configuration.closed(area, ["T1", "T2", "1-2"]))
    assert not chk and chk.kind == "cycle"
    assert "T2" in chk.elements or "T1" in chk.elements


def test_split_feed_is_radial():
    net, sc = fixture_pair("toy1")
    area = compute_off_outage(net, sc)
    chk = is_radial(area, Configuration.closed(area, ["T1", "T2"]))
    assert chk.ok and chk.energized == {"1", "2", "3"}
    comps = feeder_components(area, Configuration.closed(area, ["T1", "T2"]))
    clusters = [c for c in comps if c.nodes]
    assert sorted(c.nodes for c in clusters) == [("1",), ("2", "3")]
    assert {c.root for c in clusters} == {"S2", "S3"}


def test_island_without_substation():
    net, sc = fixture_pair("toy3")
    area = compute_off_outage(net, sc)
    cfg = Configuration.closed(area, ["1-2", "1-3"])
    chk = is_radial(area, cfg)
    assert not chk and chk.kind == "island"
    with pytest.raises(NotRadialError):
        feeder_components(area, cfg)


def test_unknown_line_rejected():
    net, sc = fixture_pair("toy1")
    area = compute_off_outage(net, sc)
    with pytest.raises(ValueError):
        Configuration.closed(area, ["S1-1"])


def forest_oracle(area, config) -> tuple[bool, set[str]]:
    """Acyclic with substations merged, and every closed switchable line fed."""
    net = area.net
    nodes = sorted(set(area.nodes) | set(area.scope_nodes))
    subs = [n for n in nodes if n in net.substations]
    idx = {n: k for k, n in enumerate(nodes)}
    for s in subs:
        idx[s] = idx[subs[0]]
    lines = closed_lines(area, config)
    edges = [(idx[l.i], idx[l.j]) for l in lines]
    n = len(nodes)
    if edges:
        a, b = np.array(edges).T
        g = coo_matrix((np.ones(len(edges)), (a, b)), shape=(n, n))
    else:
        g = coo_matrix((n, n))
    ncomp, lab = connected_components(g, directed=False)
    used = {v for e in edges for v in e} | {idx[subs[0]]}
    # a forest on the touched vertices has |E| = |V| - components
    touched_comps = len({lab[v] for v in used})
    acyclic = len(edges) == len(used) - touched_comps
    root = lab[idx[subs[0]]]
    fed = {m for m in area.nodes if lab[idx[m]] == root}
    sw = set(area.switchable)
    no_island = all(lab[idx[l.i]] == root for l in lines if l.id in sw)
    return acyclic and no_island, fed


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 10_000))
def test_radiality_matches_graph_oracle(seed):
    g, f = random_toy(seed)
    net = load_network(g)
    area = compute_off_outage(net, load_scenario(f, net))
    for bits in itertools.product((0, 1), repeat=len(area.switchable)):
        cfg = Configuration(tuple(zip(area.switchable, bits)))
        ok, fed = forest_oracle(area, cfg)
        chk = is_radial(area, cfg)
        assert chk.ok == ok
        if ok:
            assert chk.energized == fed
            clusters = [c for c in feeder_components(area, cfg) if c.nodes]
            covered = [n for c in clusters for n in c.nodes]
            assert sorted(covered) == sorted(fed)
            assert all(c.root in net.substations for c in clusters)
