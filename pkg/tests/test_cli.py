import csv
import json
from pathlib import Path

import pytest

from gridrestore.cli import (EXIT_INPUT, EXIT_NO_RESTORATION, EXIT_OK, EXIT_VIOLATIONS, main)

from conftest import DATA

GOLDEN = Path(__file__).parent / "golden" / "toy3_plan.json"


def paths(name):
    return [str(DATA / f"{name}_grid.json"), str(DATA / f"{name}_fault.json")]


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    out = tmp_path_factory.mktemp("mcb")
    code = main(["solve", *paths("toy3"), "-o", str(out)])
    return code, out


def test_solve_writes_artifacts(solved):
    code, out = solved
    assert code == EXIT_OK
    for name in ("plan.json", "margins.json", "trace.csv", "summary.json"):
        assert (out / name).is_file()
    summary = json.loads((out / "summary.json").read_text())
    assert {"F_re", "F_sw", "F_op", "wall_time_s"} <= set(summary)
    rows = list(csv.DictReader((out / "trace.csv").open()))
    assert rows and float(rows[-1]["lb"]) <= float(rows[-1]["ub"])


def test_solve_matches_golden(solved):
    _, out = solved
    assert (out / "plan.json").read_text() == GOLDEN.read_text()


def test_golden_is_the_enumerated_optimum(capsys):
    assert main(["enumerate", *paths("toy3")]) == EXIT_OK
    oracle = json.loads(capsys.readouterr().out)
    golden = json.loads(GOLDEN.read_text())
    assert golden["config"] == oracle["restoration_config"]
    assert golden["objective"]["restoration"] == pytest.approx(oracle["restoration"], abs=1e-6)


def test_solve_is_reproducible(solved, tmp_path):
    _, out = solved
    assert main(["solve", *paths("toy3"), "-o", str(tmp_path), "--seed", "0"]) == EXIT_OK
    for name in ("plan.json", "margins.json"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


def test_iao_objective_matches_mcb(solved, tmp_path):
    _, out = solved
    assert main(["solve", *paths("toy3"), "-o", str(tmp_path), "--method", "iao"]) == EXIT_OK
    mcb = json.loads((out / "plan.json").read_text())["objective"]
    iao = json.loads((tmp_path / "plan.json").read_text())["objective"]
    assert iao["restoration"] == pytest.approx(mcb["restoration"], abs=1e-2)


def test_missing_scenario_is_input_error(tmp_path):
    grid, _ = paths("toy3")
    assert main(["solve", grid, str(tmp_path / "nope.json"), "-o", str(tmp_path)]) == EXIT_INPUT


def test_malformed_network_is_input_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema_version": "1.0"}')
    assert main(["solve", str(bad), paths("toy3")[1], "-o", str(tmp_path)]) == EXIT_INPUT


def test_bad_weights_are_input_error(tmp_path):
    assert main(["solve", *paths("toy1"), "-o", str(tmp_path), "--weights", "1,2,3"]) == EXIT_INPUT


def test_stranded_exit_code(tmp_path, capsys):
    assert main(["solve", *paths("stranded"), "-o", str(tmp_path)]) == EXIT_NO_RESTORATION
    assert main(["enumerate", *paths("stranded")]) == EXIT_NO_RESTORATION
    assert "no restoration exists" in capsys.readouterr().out


def test_no_outage_plan(tmp_path):
    args = [paths("toy1")[0], str(DATA / "nofault_fault.json"), "-o", str(tmp_path)]
    assert main(["solve", *args]) == EXIT_OK
    assert json.loads((tmp_path / "plan.json").read_text())["actions"] == []


def test_enumerate_single_configuration(capsys):
    assert main(["enumerate", *paths("single")]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    # one tie: the only configuration that restores anything is closing it
    assert doc["restoration_config"] == {"T1": 1}
    assert doc["restoration"] == pytest.approx(50.0)


def test_enumerate_caps(capsys):
    assert main(["enumerate", *paths("toy3"), "--max-switchable", "2"]) == EXIT_INPUT


def test_validate_golden(tmp_path):
    out = tmp_path / "margins.json"
    assert main(["validate", str(GOLDEN), *paths("toy3"), "-o", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["ok"] is True


def tampered(tmp_path, **config):
    plan = json.loads(GOLDEN.read_text())
    plan["config"].update(config)
    p = tmp_path / "plan.json"
    p.write_text(json.dumps(plan))
    return str(p)


def test_validate_loop_is_input_error(tmp_path):
    # closing 1-3 and T1 joins 2-4 into a loop through node 1
    assert main(["validate", tampered(tmp_path, **{"1-3": 1, "T1": 1}), *paths("toy3")]) \
        == EXIT_INPUT


def test_validate_overload_exit(tmp_path):
    # feeding the whole area through the weakest tie overloads it
    plan = tampered(tmp_path, **{"1-3": 1, "T2": 0, "T3": 1})
    doc = json.loads(Path(plan).read_text())
    for n in doc["pickup"]:
        doc["pickup"][n] = [1] * len(doc["steps"])
    Path(plan).write_text(json.dumps(doc))
    assert main(["validate", plan, *paths("toy3")]) == EXIT_VIOLATIONS


def test_dump_models(tmp_path):
    assert main(["solve", *paths("toy1"), "-o", str(tmp_path), "--dump-models"]) == EXIT_OK
    assert "mu[" in (tmp_path / "master.txt").read_text()
