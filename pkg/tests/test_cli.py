import json
from importlib import resources

import jsonschema
import numpy as np
import pytest

from oracles import bqop_min, random_sym, selector_instance
from qapcert.cli import main
from qapcert.instance import QapInstance, serialize_qaplib
from qapcert.reduction import reduce_to_bqop


def schema(name):
    return json.loads((resources.files("qapcert") / "schemas" / f"{name}.json").read_text())


@pytest.fixture
def small(tmp_path):
    rng = np.random.default_rng(21)
    inst = selector_instance(rng, 10, 4, scale=2)
    path = tmp_path / "small.dat"
    path.write_text(serialize_qaplib(inst))
    return path, bqop_min(reduce_to_bqop(inst))


def run(argv, tmp_path, capsys):
    code = main([str(a) for a in argv] + ["--manifest", str(tmp_path / "m.json")])
    out = capsys.readouterr()
    manifest = json.loads((tmp_path / "m.json").read_text())
    jsonschema.validate(manifest, schema("manifest"))
    assert manifest["exit_code"] == code
    return code, out


def test_convert_selector(small, tmp_path, capsys):
    path, _ = small
    code, out = run(["convert", path, "-o", tmp_path / "s.bqop", "--general-model", tmp_path / "g.txt"],
                    tmp_path, capsys)
    rep = json.loads(out.out)
    jsonschema.validate(rep, schema("convert_report"))
    assert code == 0 and rep["selector"]["m"] == 4 and rep["selector"]["scale"] == 2
    assert (tmp_path / "s.bqop").read_text().startswith("10 4 2 reduced-from-qap")
    assert (tmp_path / "g.txt").exists()


def test_convert_non_selector(tmp_path, capsys):
    A = np.zeros((5, 5), int)
    A[0, 1] = A[1, 0] = 2
    A[2, 3] = A[3, 2] = 5
    p = tmp_path / "ns.dat"
    p.write_text(serialize_qaplib(QapInstance(A, random_sym(np.random.default_rng(0), 5))))
    code, out = run(["convert", p, "-o", tmp_path / "o.txt"], tmp_path, capsys)
    rep = json.loads(out.out)
    assert code == 0 and rep["output"]["kind"] == "general-model" and "NotSelectorStructure" in rep["notice"]
    assert (tmp_path / "o.txt").read_text().startswith("qapcert-general-model 1")


def test_missing_file_is_io_error(tmp_path, capsys):
    code, out = run(["certify", tmp_path / "nope.dat", "--target", "1"], tmp_path, capsys)
    assert code == 3 and "I/O" in out.err


def test_malformed_file_and_bad_bounder(small, tmp_path, capsys):
    bad = tmp_path / "bad.dat"
    bad.write_text("3 0 1")
    assert run(["certify", bad, "--target", "1"], tmp_path, capsys)[0] == 4
    assert run(["certify", small[0], "--target", "1", "--bounder", "zzz"], tmp_path, capsys)[0] > 2


def test_certify_exit_codes_and_witness(small, tmp_path, capsys):
    path, opt = small
    rep_path = tmp_path / "c.json"
    code, _ = run(["certify", path, "--target", opt, "--report", rep_path], tmp_path, capsys)
    rep = json.loads(rep_path.read_text())
    jsonschema.validate(rep, schema("certify_report"))
    assert code == 0 and rep["outcome"] == "certified"

    code, _ = run(["certify", path, "--target", opt + 1, "--report", rep_path,
                   "--witness", tmp_path / "w.sol", "--trace-csv", tmp_path / "t.csv"], tmp_path, capsys)
    rep = json.loads(rep_path.read_text())
    jsonschema.validate(rep, schema("certify_report"))
    assert code == 1 and rep["witness_value"] == opt
    code, out = run(["evaluate", path, tmp_path / "w.sol"], tmp_path, capsys)
    assert code == 0 and f"bqop_objective = {opt}" in out.out and f"qap_objective = {opt}" in out.out
    code, out = run(["evaluate", path, tmp_path / "w.sol.perm"], tmp_path, capsys)
    assert f"qap_objective = {opt}" in out.out
    assert (tmp_path / "t.csv").read_text().startswith("depth,node,status,p,a,b")

    code, _ = run(["certify", path, "--target", opt, "--max-nodes", 2], tmp_path, capsys)
    assert code == 2


def test_certify_formats(small, tmp_path, capsys):
    path, opt = small
    _, out = run(["certify", path, "--target", opt, "--format", "csv"], tmp_path, capsys)
    assert out.out.startswith("depth,nodes,size2_orbits")
    _, out = run(["certify", path, "--target", opt, "--format", "text"], tmp_path, capsys)
    assert "outcome: certified" in out.out


def test_estimate(small, tmp_path, capsys):
    path, opt = small
    code, out = run(["estimate", path, "--target", opt, "--threshold", 4, "--sample-size", 2,
                     "--sample-cutoff", 3, "--seed", 5], tmp_path, capsys)
    rep = json.loads(out.out)
    jsonschema.validate(rep, schema("estimate_report"))
    assert code == 0 and rep["switch_depth"] is not None
    _, out = run(["estimate", path, "--target", opt, "--format", "csv"], tmp_path, capsys)
    assert out.out.splitlines()[0] == "k,t_bar,s,r,t_hat,rate"


def test_estimate_budget(small, tmp_path, capsys):
    path, opt = small
    assert run(["estimate", path, "--target", opt, "--max-nodes", 2], tmp_path, capsys)[0] == 2


def test_symmetry_rigid_and_json(small, tmp_path, capsys):
    path, _ = small
    code, out = run(["symmetry", path], tmp_path, capsys)
    assert code == 0 and out.out.splitlines()[0] == "|G| = 1"
    code, out = run(["symmetry", path, "--fix", "1", "--zero", "2-3", "--format", "json"], tmp_path, capsys)
    rep = json.loads(out.out)
    jsonschema.validate(rep, schema("symmetry_report"))
    assert rep["n_orbits"] == 7 and rep["I0"] == [2, 3]


def test_symmetry_solution_expansion(tmp_path, capsys):
    from oracles import torus_B

    B = torus_B(3, 3)
    A = np.zeros((9, 9), int)
    A[:3, :3] = 1
    np.fill_diagonal(A, 0)
    p = tmp_path / "t.dat"
    p.write_text(serialize_qaplib(QapInstance(A, B)))
    (tmp_path / "x.sol").write_text("1 1 1 0 0 0 0 0 0\n")
    code, out = run(["symmetry", p, "--solution", tmp_path / "x.sol", "--dump-elements", tmp_path / "el.txt"],
                    tmp_path, capsys)
    assert code == 0 and "distinct images of the solution:" in out.out and "1028 vs 1024" in out.out
    order = int(out.out.splitlines()[0].split("=")[1])
    assert len((tmp_path / "el.txt").read_text().splitlines()) == order


def test_export_qubo(small, tmp_path, capsys):
    path, _ = small
    code, out = run(["export-qubo", path, "-o", tmp_path / "q.txt", "--fix", "1", "--lambda", "10"],
                    tmp_path, capsys)
    assert code == 0 and json.loads(out.out)["lambda"] == 10.0
    lines = (tmp_path / "q.txt").read_text().splitlines()
    assert lines[1].split()[0] == "9"


def test_bqop_file_input(small, tmp_path, capsys):
    path, opt = small
    run(["convert", path, "-o", tmp_path / "s.bqop"], tmp_path, capsys)
    code, _ = run(["certify", tmp_path / "s.bqop", "--target", opt], tmp_path, capsys)
    assert code == 0


def test_manifest_references_report(small, tmp_path, capsys):
    path, opt = small
    main(["certify", str(path), "--target", str(opt), "--report", str(tmp_path / "r.json")])
    capsys.readouterr()
    m = json.loads((tmp_path / "r.json.manifest.json").read_text())
    jsonschema.validate(m, schema("manifest"))
    assert m["report"]["path"].endswith("r.json") and m["outcome"] == "certified"
    assert m["config"]["target"] == opt
