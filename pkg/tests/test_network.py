import copy
import json

import pytest

from gridrestore.network import NetworkError, load_network, load_scenario, network_to_dict

from toygrids import R, X, fault_doc, grid_doc


@pytest.fixture
def doc():
    lines = [("S1", "1", "sec", R, X, 2.0), ("1", "2", "fixed", R, X, 2.0),
             ("S2", "3", "fixed", R, X, 2.0), ("2", "3", "tie", R, X, 0.3, "T1")]
    loads = [("1", 1, True, [0.1, 0.1], [0.03, 0.03]), ("2", 2, False, [0.1, 0.2], [0.0, 0.0])]
    return grid_doc(["S1", "S2"], ["1", "2", "3"], lines, loads, T=2)


def test_loads_and_indexes(doc):
    net = load_network(doc)
    assert net.T == 2 and net.dt == 1.0
    assert net.substations == {"S1", "S2"}
    assert net.line_by_id["T1"].is_tie and not net.line_by_id["T1"].base_closed
    assert net.line_by_id["S1-1"].switchable and net.line_by_id["S1-1"].base_closed
    assert not net.line_by_id["1-2"].switchable
    assert [l.id for l in net.incident["2"]] == ["1-2", "T1"]
    assert net.load_at["2"].importance == 2


def test_round_trip(doc):
    net = load_network(doc)
    again = load_network(json.loads(json.dumps(network_to_dict(net))))
    assert again == net


def test_file_path(tmp_path, doc):
    p = tmp_path / "g.json"
    p.write_text(json.dumps(doc))
    assert load_network(p).name == "test grid"


def mutate(doc, fn):
    d = copy.deepcopy(doc)
    fn(d)
    return d


BAD = {
    "duplicate node": lambda d: d["nodes"].append({"id": "1"}),
    "dangling reference in line": lambda d: d["lines"][1].update({"to": "9"}),
    "self-loop": lambda d: d["lines"][1].update({"to": "1"}),
    "schema violation: 0.0": lambda d: d["lines"][1].update({"f_max": 0.0}),
    "profile length": lambda d: d["loads"][0].update({"p": [0.1]}),
    "schema violation: 0.5": lambda d: d["loads"][0].update({"importance": 0.5}),
    "non-radial base": lambda d: d["lines"][3].update({"switch": None}),
    "dangling reference to switch": lambda d: d["lines"][0].update({"switch": "nope"}),
    "no substation": lambda d: [n.pop("substation", None) for n in d["nodes"]],
    "v_min must be below": lambda d: d["v_limits"].update({"min": 1.1}),
    "schema violation": lambda d: d.pop("lines"),
    "dg caps": lambda d: d["dgs"].append({"id": "G", "node": "1", "kind": "dispatchable",
                                          "p_max": 0.3, "s_max": 0.2}),
    "needs a profile": lambda d: d["dgs"].append({"id": "G", "node": "1",
                                                  "kind": "non-dispatchable",
                                                  "p_max": 0.1, "s_max": 0.1}),
}


@pytest.mark.parametrize("message", sorted(BAD))
def test_rejects_bad_documents(doc, message):
    with pytest.raises(NetworkError, match=message):
        load_network(mutate(doc, BAD[message]))


def test_scenario_period(doc):
    net = load_network(doc)
    sc = load_scenario(fault_doc(["S1-1"], ["S1-1"], period=(1, 1)), net)
    assert list(sc.steps(net)) == [1]
    assert list(load_scenario(fault_doc(["S1-1"], ["S1-1"]), net).steps(net)) == [0, 1]


@pytest.mark.parametrize("fault", [
    fault_doc(["nope"], ["S1-1"]),
    fault_doc(["1"], ["S1-1"]),
    fault_doc(["S1-1"], ["nope"]),
    fault_doc(["S1-1"], ["S1-1"], period=(2, 1)),
])
def test_scenario_rejects(doc, fault):
    net = load_network(doc)
    with pytest.raises(NetworkError):
        load_scenario(fault, net)
