import json
import subprocess
import sys

import pytest

from robustcps import formats
from robustcps.cli import main
from robustcps.relations import ExplicitRelation


def _write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def dropout_file(tmp_path):
    return _write(tmp_path / "dropout.json", formats.system_to_json(formats.load_data_system("dropout")))


def test_example_e1(tmp_path, capsys):
    assert main(["example", "e1", "--runs", "50", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "example_e1.json").read_text())
    assert rep["constants"]["kappa_delta"] == pytest.approx(0.5)
    assert rep["runs"]["failures"] == 0
    assert "0.8^(t-t')" in capsys.readouterr().out


def test_reports_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["--seed", "7", "example", "e1", "--runs", "30", "--out", str(d)]) == 0
    assert (a / "example_e1.json").read_bytes() == (b / "example_e1.json").read_bytes()


def test_boost_misdeclared_beta(tmp_path, capsys):
    cfg = _write(tmp_path / "cfg.json", {"example": "boost", "profile": {"beta": 0.9}})
    assert main(["check-relation", cfg, "--scale", "20", "--out", str(tmp_path)]) == 1
    v = json.loads((tmp_path / "relation_verdict.json").read_text())
    assert not v["passed"] and v["counterexample"]
    assert "counterexample" in capsys.readouterr().out


def test_abstract_then_synthesize_verify(tmp_path):
    plant = {"modes": [{"A": [[0.6]], "B": [0.0]}], "domain": {"lo": [-1], "hi": [1]},
             "norm": "inf", "kappa": 0.2, "state_eta": 0.2}
    out = tmp_path / "abs"
    assert main(["abstract", _write(tmp_path / "plant.json", plant), "--out", str(out)]) == 0
    sys_doc = json.loads((out / "abstraction.json").read_text())
    assert len(sys_doc["states"]) == 5
    syn = {"system": str(out / "abstraction.json"), "target": {"gamma": 0, "eta": 1}}
    assert main(["synthesize", _write(tmp_path / "syn.json", syn), "--out", str(tmp_path / "s")]) == 0
    ver = {"system": str(tmp_path / "s" / "closed_loop.json"), "target": {"gamma": 0, "eta": 1}}
    assert main(["verify", _write(tmp_path / "ver.json", ver), "--out", str(tmp_path / "v")]) == 0


def test_verify_failure_exit(tmp_path):
    doc = {"states": ["a", "b"], "initial": ["a"], "inputs": ["u"],
           "transitions": [["a", "u", "b"], ["b", "u", "b"]],
           "costs": [{"state": "b", "input": "u", "I": 0.0, "O": 1.0}]}
    cfg = _write(tmp_path / "v.json", {"system": _write(tmp_path / "s.json", doc),
                                      "target": {"gamma": 0.5, "eta": 1}})
    assert main(["verify", cfg, "--out", str(tmp_path)]) == 1


def test_config_error_pointer(tmp_path, capsys):
    cfg = _write(tmp_path / "bad.json", {"modes": [{"A": [[0.5]], "B": [0.0]}],
                                        "domain": {"lo": [0], "hi": [1]}, "kappa": -1})
    assert main(["abstract", cfg, "--out", str(tmp_path)]) == 2
    assert "/kappa" in capsys.readouterr().err


def test_unknown_command_is_usage_error():
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2


def test_compose_simulate_monitor_plot(tmp_path, dropout_file):
    ref = _write(tmp_path / "ref.json", formats.system_to_json(formats.load_data_system("reference")))
    cfg = _write(tmp_path / "c.json", {"left": dropout_file, "right": ref})
    assert main(["compose", cfg, "--out", str(tmp_path / "c")]) == 0
    rep = json.loads((tmp_path / "c" / "compose_report.json").read_text())
    assert rep["states"] == 16
    sim = _write(tmp_path / "s.json", {"system": dropout_file, "inputs": ["top", "bot", "bot"]})
    assert main(["simulate", sim, "--out", str(tmp_path / "s")]) == 0
    trace = tmp_path / "s" / "trace.csv"
    cert = _write(tmp_path / "cert.json", {"gamma": {"tag": "linear", "params": {"slope": 1.0}},
                                          "mu": {"tag": "zero", "params": {}}})
    assert main(["monitor", str(trace), "--cert", cert, "--out", str(tmp_path / "m")]) == 0
    assert (tmp_path / "m" / "margins.csv").exists()
    assert main(["plot", str(tmp_path / "m" / "margins.csv"), "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "p" / "margins.svg").read_text().lstrip().startswith("<?xml")


def test_refine_e1(tmp_path):
    cfg = _write(tmp_path / "r.json", {"example": "e1", "x0": [0.3], "horizon": 20,
                                      "disturbance": {"random": {"bound": 1.0}}})
    assert main(["refine", cfg, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "run_log.csv").read_text().startswith("t,x1,")


def test_relation_json_pairs_roundtrip():
    r = ExplicitRelation([("p", "x", "u", "u")], "alternating", [("q", "y")])
    r2 = formats.relation_from_json(json.loads(json.dumps(formats.to_plain(r.to_json()))))
    assert r2.pairs == r.pairs and r2.orientation == "alternating"


def test_module_entry_point(tmp_path):
    p = subprocess.run([sys.executable, "-m", "robustcps", "--help"], capture_output=True, text=True)
    assert p.returncode == 0 and "check-relation" in p.stdout
