import json
import subprocess
import sys

import numpy as np
import pytest

from carnot_bcp import serialize
from carnot_bcp._mp import ctx
from carnot_bcp.besicovitch import generate_r2_family, verify_family
from carnot_bcp.cli import main
from carnot_bcp.gauge import plane_metric
from carnot_bcp.groups import PlaneModel


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def refuted(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "fam.json"
    code = main(["refute", "--group", "free_nilpotent_2_3", "--gauge", "euclidean", "--N", "20",
                 "--out", str(path), "--report", str(path.with_suffix(".report.json"))])
    return code, path


def test_refute_writes_verifiable_family(refuted, capsys):
    code, path = refuted
    assert code == 0
    report = json.loads(path.with_suffix(".report.json").read_text())
    assert report["verdict"] == "refuted"
    assert report["family_size"] == 20
    code, out, _ = run(capsys, "verify", str(path))
    assert code == 0
    rep = json.loads(out)
    assert rep["verdict"] == "pass" and rep["size"] == 20
    assert out.endswith("\n") and out.count("\n") == 1


def test_verify_detects_inflated_radius(refuted, tmp_path, capsys):
    _, path = refuted
    doc = json.loads(path.read_text())
    doc["balls"][5]["radius"] = serialize.num_out(10 * ctx.mpf(doc["balls"][5]["radius"]))
    bad = tmp_path / "inflated.json"
    bad.write_text(json.dumps(doc))
    code, out, err = run(capsys, "verify", str(bad))
    assert code == 3
    rep = json.loads(out)
    assert rep["failing_pairs"]
    assert all(j == 5 for _, j in rep["failing_pairs"])
    assert "pairs" in err


def test_verify_truncated_json(refuted, tmp_path, capsys):
    _, path = refuted
    bad = tmp_path / "truncated.json"
    bad.write_text(path.read_text()[:200])
    code, _, err = run(capsys, "verify", str(bad))
    assert code == 1
    assert "invalid JSON" in err


def test_refute_inapplicable(capsys):
    code, out, err = run(capsys, "refute", "--group", "heisenberg1", "--gauge", "euclidean")
    assert code == 2
    assert json.loads(out)["verdict"] == "inapplicable"
    assert "2 >= step 2" in err


def test_refute_unknown_group(capsys):
    code, _, err = run(capsys, "refute", "--group", "nosuch", "--gauge", "euclidean")
    assert code == 1
    assert "unknown group" in err


def test_refute_two_gauge_sources(capsys):
    code, _, err = run(capsys, "refute", "--group", "heisenberg1", "--gauge", "euclidean", "--c", "1", "1", "1")
    assert code == 1


def test_refute_with_files_and_csv(tmp_path, capsys):
    gfile = tmp_path / "g.json"
    gfile.write_text(json.dumps({"step": 2, "layer_dims": [2, 1],
                                 "brackets": [{"i": 1, "j": 2, "terms": [{"k": 3, "c": 1.0}]}]}))
    kfile = tmp_path / "k.json"
    kfile.write_text(json.dumps({"form": "coordinate", "c": [2.0, 1.0, 1.0], "gamma": [1.5, 1.0, 3.0]}))
    out = tmp_path / "f.json"
    csv = tmp_path / "f.csv"
    code, _, _ = run(capsys, "refute", "--group-file", str(gfile), "--gauge-file", str(kfile), "--N", "6",
                     "--out", str(out), "--csv", str(csv))
    assert code == 0
    assert csv.read_text().splitlines()[0] == "center_1,center_2,center_3,radius"
    assert len(csv.read_text().splitlines()) == 7
    assert run(capsys, "verify", str(out))[0] == 0


def test_malformed_group_file(tmp_path, capsys):
    gfile = tmp_path / "g.json"
    gfile.write_text("{not json")
    code, _, err = run(capsys, "refute", "--group-file", str(gfile), "--gauge", "euclidean")
    assert code == 1
    assert "line 1" in err


def test_dist(capsys):
    assert run(capsys, "dist", "--group", "heisenberg1", "--gauge", "euclidean", "--q", "1", "0", "0")[1] == "1.00000000000000\n"
    code, out, _ = run(capsys, "dist", "--plane", "2", "2", "3", "--q", "1", "1")
    assert code == 0
    assert float(out) == pytest.approx(1.2106077944060859, rel=1e-12)
    assert float(run(capsys, "dist", "--plane", "2", "2", "3", "--p", "1", "1", "--q", "1", "1")[1]) == 0.0
    code, _, err = run(capsys, "dist", "--group", "heisenberg1", "--gauge", "euclidean", "--q", "1", "0")
    assert code == 1


def test_dist_inline_layer_gauge(capsys):
    code, out, _ = run(capsys, "dist", "--group", "heisenberg1", "--form", "layer", "--c", "1", "1",
                       "--gamma", "2", "2", "--q", "0.6", "0.8", "0")
    assert code == 0 and float(out) == pytest.approx(1.0, rel=1e-12)


def test_sphere_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(capsys, "sphere", "--count", "1000", "--seed", "7", "--out", str(a))[0] == 0
    assert run(capsys, "sphere", "--count", "1000", "--seed", "7", "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    pts = np.loadtxt(a, delimiter=",", skiprows=1)
    assert pts.shape == (1000, 3)
    assert np.max(np.abs(np.sum(pts**2, axis=1) - 1)) <= 1e-9


def test_sphere_empty_and_env_seed(capsys, monkeypatch):
    code, out, _ = run(capsys, "sphere", "--count", "0")
    assert code == 0 and out == "x_1,x_2,x_3\n"
    monkeypatch.setenv("CARNOT_GAUGE_SEED", "7")
    env_out = run(capsys, "sphere", "--count", "5")[1]
    assert env_out == run(capsys, "sphere", "--count", "5", "--seed", "7")[1]
    monkeypatch.setenv("CARNOT_GAUGE_SEED", "x")
    assert run(capsys, "sphere", "--count", "5")[0] == 1


def test_quotient_command(tmp_path, capsys):
    spec = tmp_path / "q.json"
    code, out, _ = run(capsys, "quotient", "--group", "free_nilpotent_2_3", "--gauge", "euclidean",
                       "--samples", "1000", "--seed", "7", "--out", str(spec))
    assert code == 0
    rep = json.loads(out)
    assert rep["submetry"]["max_subset_violation"] <= 1e-9
    assert rep["submetry"]["max_superset_violation"] <= 1e-9
    assert rep["validation"]["passed"]
    assert json.loads(spec.read_text())["quotient"]["group"]["layer_dims"] == [2, 1]
    assert run(capsys, "quotient", "--group", "heisenberg1", "--gauge", "euclidean")[0] == 1


def test_validate_command(tmp_path, capsys):
    assert run(capsys, "validate", "--group", "free_nilpotent_2_3")[0] == 0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"layer_dims": [2, 1], "brackets": [
        {"i": 1, "j": 2, "terms": [{"k": 3, "c": 1.0}]},
        {"i": 2, "j": 1, "terms": [{"k": 3, "c": 1.0}]}]}))
    code, out, _ = run(capsys, "validate", "--group-file", str(bad))
    assert code == 3
    assert any("antisymmetry" in f for f in json.loads(out)["failures"])


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "carnot_bcp", "dist", "--plane", "2", "2", "3", "--q", "1", "0"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and res.stdout == "1.00000000000000\n"


def test_family_json_round_trip_is_lossless():
    model = PlaneModel(s=3, a=2, b=2)
    fam = generate_r2_family(model, 12)
    again, metric = serialize.family_from_dict(json.loads(serialize.dumps(serialize.family_to_dict(fam))))
    assert again.meta.log2_epsilons == fam.meta.log2_epsilons
    for a, b in zip(fam.balls, again.balls):
        assert a.radius == b.radius
        assert all(x == y for x, y in zip(a.center, b.center))
    assert verify_family(metric, again).passed


def test_family_csv_round_trip():
    fam = generate_r2_family(PlaneModel(s=3, a=2, b=2), 6)
    again = serialize.family_from_csv(serialize.family_to_csv(fam))
    for a, b in zip(fam.balls, again.balls):
        assert a.radius == b.radius
        assert all(x == y for x, y in zip(a.center, b.center))
    again = type(again)(again.balls, again.witness, anchored=True)
    assert verify_family(plane_metric(PlaneModel(s=3, a=2, b=2)), again).passed
